//! Opaque, program-scoped identifiers.
//!
//! Ids are handed out from monotone counters and never reused, so a retired
//! vertex can never be confused with one created later.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Identifier of a dataflow vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(pub u64);

/// Identifier of a dataflow graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GraphId(pub u64);

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl fmt::Display for GraphId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g{}", self.0)
    }
}

/// A reference to a vertex or graph as written in commands and scenario
/// files: either a raw numeric id or a name.
///
/// Vertex names take the form `graph.label`, where `graph` is a named graph
/// and `label` is unique among the labelled vertices of its flattening.
/// Graph names are plain.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Ref {
    Id(u64),
    Name(String),
}

impl Ref {
    pub fn name(s: impl Into<String>) -> Self {
        Ref::Name(s.into())
    }
}

impl From<VertexId> for Ref {
    fn from(v: VertexId) -> Self {
        Ref::Id(v.0)
    }
}

impl From<GraphId> for Ref {
    fn from(g: GraphId) -> Self {
        Ref::Id(g.0)
    }
}

impl From<&str> for Ref {
    fn from(s: &str) -> Self {
        Ref::Name(s.to_string())
    }
}

impl fmt::Display for Ref {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ref::Id(id) => write!(f, "#{id}"),
            Ref::Name(n) => f.write_str(n),
        }
    }
}
