//! Programs, graphs and vertices.
//!
//! A program owns every graph and vertex. Graphs form a forest through their
//! `parent` links; each vertex belongs to exactly one graph. Sources are
//! plain vertex references and may cross graph boundaries or form cycles.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::VertexData;
use crate::error::{CoreError, Result};
use crate::ids::{GraphId, Ref, VertexId};

/// The generator shared by every sampling kernel in a program.
pub type ProgramRng = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct DataflowVertex {
    /// Ordered: position decides e.g. which operand gets weight `1 - alpha`.
    pub sources: Vec<VertexId>,
    pub data: VertexData,
    pub parent: GraphId,
    /// Local name, unique within any named graph that should resolve it.
    pub label: Option<String>,
    /// Scratch link used only while a limited deep copy is in progress.
    pub forward_ref: Option<VertexId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DataflowGraph {
    pub name: Option<String>,
    pub immediate_targets: Vec<VertexId>,
    pub immediate_subgraphs: Vec<GraphId>,
    pub parent: Option<GraphId>,
}

/// A linear alpha schedule in progress on a SumOf2 vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Ramp {
    pub vertex: VertexId,
    pub from: f64,
    pub to: f64,
    pub duration_ticks: u64,
    /// Boundaries elapsed since the ramp started.
    pub elapsed: u64,
}

impl Ramp {
    /// Alpha after `elapsed` boundaries; exactly `to` at the end.
    pub fn value(&self) -> f64 {
        if self.elapsed >= self.duration_ticks {
            self.to
        } else {
            self.from + (self.to - self.from) * (self.elapsed as f64 / self.duration_ticks as f64)
        }
    }
}

#[derive(Debug, Clone)]
pub struct DataflowProgram {
    top_level_graphs: Vec<GraphId>,
    main_graph: Option<GraphId>,
    vertices: BTreeMap<VertexId, DataflowVertex>,
    graphs: BTreeMap<GraphId, DataflowGraph>,
    clock: u64,
    rng_seed: u64,
    rng: ProgramRng,
    next_id: u64,
    pub(crate) ramps: Vec<Ramp>,
}

impl DataflowProgram {
    pub fn new(seed: u64) -> Self {
        DataflowProgram {
            top_level_graphs: Vec::new(),
            main_graph: None,
            vertices: BTreeMap::new(),
            graphs: BTreeMap::new(),
            clock: 0,
            rng_seed: seed,
            rng: ProgramRng::seed_from_u64(seed),
            next_id: 1,
            ramps: Vec::new(),
        }
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub(crate) fn advance_clock(&mut self) {
        self.clock += 1;
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn rng_mut(&mut self) -> &mut ProgramRng {
        &mut self.rng
    }

    pub fn main_graph(&self) -> Option<GraphId> {
        self.main_graph
    }

    pub fn top_level_graphs(&self) -> &[GraphId] {
        &self.top_level_graphs
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices.keys().copied()
    }

    pub fn graph_ids(&self) -> impl Iterator<Item = GraphId> + '_ {
        self.graphs.keys().copied()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn graph_count(&self) -> usize {
        self.graphs.len()
    }

    pub fn active_ramps(&self) -> &[Ramp] {
        &self.ramps
    }

    pub fn vertex(&self, id: VertexId) -> Result<&DataflowVertex> {
        self.vertices.get(&id).ok_or(CoreError::UnknownVertex(id))
    }

    pub fn vertex_mut(&mut self, id: VertexId) -> Result<&mut DataflowVertex> {
        self.vertices.get_mut(&id).ok_or(CoreError::UnknownVertex(id))
    }

    pub fn graph(&self, id: GraphId) -> Result<&DataflowGraph> {
        self.graphs.get(&id).ok_or(CoreError::UnknownGraph(id))
    }

    pub fn graph_mut(&mut self, id: GraphId) -> Result<&mut DataflowGraph> {
        self.graphs.get_mut(&id).ok_or(CoreError::UnknownGraph(id))
    }

    pub fn contains_vertex(&self, id: VertexId) -> bool {
        self.vertices.contains_key(&id)
    }

    pub fn contains_graph(&self, id: GraphId) -> bool {
        self.graphs.contains_key(&id)
    }

    fn fresh(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub(crate) fn fresh_vertex_id(&mut self) -> VertexId {
        VertexId(self.fresh())
    }

    pub(crate) fn fresh_graph_id(&mut self) -> GraphId {
        GraphId(self.fresh())
    }

    /// Adds an empty top-level graph. Asking for a second main graph is an
    /// error; use [`DataflowProgram::set_main_graph`] with `replace` for that.
    pub fn add_top_level_graph(&mut self, make_main: bool) -> Result<GraphId> {
        if make_main {
            if let Some(existing) = self.main_graph {
                return Err(CoreError::MainGraphAlreadySet(existing));
            }
        }
        let id = self.fresh_graph_id();
        self.graphs.insert(id, DataflowGraph::default());
        self.top_level_graphs.push(id);
        if make_main {
            self.main_graph = Some(id);
        }
        Ok(id)
    }

    pub fn set_main_graph(&mut self, graph: GraphId, replace: bool) -> Result<()> {
        let g = self.graph(graph)?;
        if g.parent.is_some() {
            return Err(CoreError::Precondition(format!("{graph} is not a top-level graph")));
        }
        match self.main_graph {
            Some(existing) if existing != graph && !replace => {
                Err(CoreError::MainGraphAlreadySet(existing))
            }
            _ => {
                self.main_graph = Some(graph);
                Ok(())
            }
        }
    }

    /// Adds an empty graph as the last immediate subgraph of `parent`.
    pub fn add_subgraph(&mut self, parent: GraphId) -> Result<GraphId> {
        self.graph(parent)?;
        let id = self.fresh_graph_id();
        self.graphs.insert(
            id,
            DataflowGraph {
                parent: Some(parent),
                ..DataflowGraph::default()
            },
        );
        self.graphs.get_mut(&parent).unwrap().immediate_subgraphs.push(id);
        Ok(id)
    }

    pub fn add_vertex(&mut self, graph: GraphId, data: VertexData, sources: Vec<VertexId>) -> Result<VertexId> {
        self.graph(graph)?;
        if let Some(bad) = sources.iter().find(|s| !self.vertices.contains_key(s)) {
            return Err(CoreError::UnknownVertex(*bad));
        }
        if let VertexData::GraphRef { graph: target, .. } = &data {
            self.graph(*target)?;
        }
        data.check().map_err(CoreError::InvalidData)?;
        let id = self.fresh_vertex_id();
        self.vertices.insert(
            id,
            DataflowVertex {
                sources,
                data,
                parent: graph,
                label: None,
                forward_ref: None,
            },
        );
        self.graphs.get_mut(&graph).unwrap().immediate_targets.push(id);
        Ok(id)
    }

    /// Adds a vertex and gives it a label in one go.
    pub fn add_labeled_vertex(
        &mut self,
        graph: GraphId,
        label: &str,
        data: VertexData,
        sources: Vec<VertexId>,
    ) -> Result<VertexId> {
        let id = self.add_vertex(graph, data, sources)?;
        self.vertices.get_mut(&id).unwrap().label = Some(label.to_string());
        Ok(id)
    }

    /// Inserts a ready-made vertex record at `position` in its parent's
    /// target list. Used by the editor.
    pub(crate) fn insert_vertex_at(&mut self, id: VertexId, vertex: DataflowVertex, position: usize) {
        let parent = vertex.parent;
        self.vertices.insert(id, vertex);
        let targets = &mut self.graphs.get_mut(&parent).expect("parent exists").immediate_targets;
        let position = position.min(targets.len());
        targets.insert(position, id);
    }

    pub(crate) fn insert_graph(&mut self, id: GraphId, graph: DataflowGraph) {
        self.graphs.insert(id, graph);
    }

    pub(crate) fn push_top_level(&mut self, id: GraphId) {
        self.top_level_graphs.push(id);
    }

    /// Removes a vertex from the table and from its parent's target list.
    /// Returns the record and its former position.
    pub(crate) fn detach_vertex(&mut self, id: VertexId) -> Result<(DataflowVertex, usize)> {
        let vertex = self.vertices.remove(&id).ok_or(CoreError::UnknownVertex(id))?;
        let targets = &mut self
            .graphs
            .get_mut(&vertex.parent)
            .expect("parent exists")
            .immediate_targets;
        let position = targets.iter().position(|t| *t == id).unwrap_or(targets.len());
        targets.retain(|t| *t != id);
        Ok((vertex, position))
    }

    /// Removes a graph record (not its contents) and unlinks it from its
    /// parent or the top-level list.
    pub(crate) fn detach_graph(&mut self, id: GraphId) -> Result<DataflowGraph> {
        let graph = self.graphs.remove(&id).ok_or(CoreError::UnknownGraph(id))?;
        match graph.parent {
            Some(p) => {
                if let Some(pg) = self.graphs.get_mut(&p) {
                    pg.immediate_subgraphs.retain(|s| *s != id);
                }
            }
            None => {
                self.top_level_graphs.retain(|g| *g != id);
                if self.main_graph == Some(id) {
                    self.main_graph = None;
                }
            }
        }
        Ok(graph)
    }

    pub fn set_label(&mut self, vertex: VertexId, label: Option<String>) -> Result<()> {
        self.vertex_mut(vertex)?.label = label;
        Ok(())
    }

    /// Names a graph. Names are unique across the program.
    pub fn set_graph_name(&mut self, graph: GraphId, name: &str) -> Result<()> {
        if let Some(other) = self.graph_by_name(name) {
            if other != graph {
                return Err(CoreError::Precondition(format!(
                    "graph name {name:?} already used by {other}"
                )));
            }
        }
        self.graph_mut(graph)?.name = Some(name.to_string());
        Ok(())
    }

    pub fn graph_by_name(&self, name: &str) -> Option<GraphId> {
        self.graphs
            .iter()
            .find(|(_, g)| g.name.as_deref() == Some(name))
            .map(|(id, _)| *id)
    }

    /// The flattening of a graph: its immediate targets followed by the
    /// flattening of each immediate subgraph, in order.
    pub fn flatten(&self, graph: GraphId) -> Result<Vec<VertexId>> {
        self.graph(graph)?;
        let mut out = Vec::new();
        let mut seen_graphs = BTreeSet::new();
        let mut seen = BTreeSet::new();
        self.flatten_into(graph, &mut out, &mut seen, &mut seen_graphs);
        Ok(out)
    }

    fn flatten_into(
        &self,
        graph: GraphId,
        out: &mut Vec<VertexId>,
        seen: &mut BTreeSet<VertexId>,
        seen_graphs: &mut BTreeSet<GraphId>,
    ) {
        // guards against corrupted hierarchies; validate() reports those
        if !seen_graphs.insert(graph) {
            return;
        }
        let Some(g) = self.graphs.get(&graph) else {
            return;
        };
        for v in &g.immediate_targets {
            if seen.insert(*v) {
                out.push(*v);
            }
        }
        for s in &g.immediate_subgraphs {
            self.flatten_into(*s, out, seen, seen_graphs);
        }
    }

    /// `graph` and every graph below it, parents before children.
    pub fn graph_closure(&self, graph: GraphId) -> Result<Vec<GraphId>> {
        self.graph(graph)?;
        let mut out = vec![graph];
        let mut i = 0;
        while i < out.len() {
            if let Some(g) = self.graphs.get(&out[i]) {
                for s in &g.immediate_subgraphs {
                    if !out.contains(s) {
                        out.push(*s);
                    }
                }
            }
            i += 1;
        }
        Ok(out)
    }

    /// All vertices of the program, via the top-level graphs.
    pub fn program_vertices(&self) -> Vec<VertexId> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for g in &self.top_level_graphs {
            for v in self.flatten(*g).unwrap_or_default() {
                if seen.insert(v) {
                    out.push(v);
                }
            }
        }
        out
    }

    /// Vertices that list `v` as a source, in table order (each once).
    pub fn consumers(&self, v: VertexId) -> Vec<VertexId> {
        self.vertices
            .iter()
            .filter(|(_, vx)| vx.sources.contains(&v))
            .map(|(id, _)| *id)
            .collect()
    }

    /// The top-level graph containing `graph`.
    pub fn root_of(&self, graph: GraphId) -> Result<GraphId> {
        let mut cur = graph;
        for _ in 0..=self.graphs.len() {
            match self.graph(cur)?.parent {
                Some(p) => cur = p,
                None => return Ok(cur),
            }
        }
        Err(CoreError::Invalid(format!("hierarchy cycle through {graph}")))
    }

    /// True when `inner` is `outer` or lies below it.
    pub fn graph_within(&self, inner: GraphId, outer: GraphId) -> bool {
        let mut cur = Some(inner);
        let mut steps = 0;
        while let Some(g) = cur {
            if g == outer {
                return true;
            }
            steps += 1;
            if steps > self.graphs.len() {
                return false;
            }
            cur = self.graphs.get(&g).and_then(|x| x.parent);
        }
        false
    }

    pub fn resolve_graph(&self, r: &Ref) -> Result<GraphId> {
        match r {
            Ref::Id(id) => {
                let g = GraphId(*id);
                self.graph(g)?;
                Ok(g)
            }
            Ref::Name(name) => {
                let mut hits = self.graphs.iter().filter(|(_, g)| g.name.as_deref() == Some(name));
                match (hits.next(), hits.next()) {
                    (Some((id, _)), None) => Ok(*id),
                    (None, _) => Err(CoreError::Unresolved(r.clone())),
                    _ => Err(CoreError::Ambiguous(r.clone())),
                }
            }
        }
    }

    /// Resolves `#id` or `graph.label`.
    pub fn resolve_vertex(&self, r: &Ref) -> Result<VertexId> {
        match r {
            Ref::Id(id) => {
                let v = VertexId(*id);
                self.vertex(v)?;
                Ok(v)
            }
            Ref::Name(name) => {
                let (graph, label) = name
                    .split_once('.')
                    .ok_or_else(|| CoreError::Unresolved(r.clone()))?;
                let g = self
                    .resolve_graph(&Ref::name(graph))
                    .map_err(|_| CoreError::Unresolved(r.clone()))?;
                let mut hits = self
                    .flatten(g)?
                    .into_iter()
                    .filter(|v| self.vertices[v].label.as_deref() == Some(label));
                match (hits.next(), hits.next()) {
                    (Some(v), None) => Ok(v),
                    (None, _) => Err(CoreError::Unresolved(r.clone())),
                    _ => Err(CoreError::Ambiguous(r.clone())),
                }
            }
        }
    }

    /// A readable name for a vertex: `graph.label` when it resolves back to
    /// the same vertex, otherwise `v<id>`.
    pub fn display_name(&self, v: VertexId) -> String {
        if let Ok(vx) = self.vertex(v) {
            if let Some(label) = &vx.label {
                let mut cur = Some(vx.parent);
                while let Some(g) = cur {
                    let graph = &self.graphs[&g];
                    if let Some(name) = &graph.name {
                        let candidate = format!("{name}.{label}");
                        if self.resolve_vertex(&Ref::Name(candidate.clone())).ok() == Some(v) {
                            return candidate;
                        }
                    }
                    cur = graph.parent;
                }
            }
        }
        v.to_string()
    }

    /// Checks every structural invariant. Empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |subject: String, rule: Rule, detail: String| {
            out.push(Violation {
                subject,
                rule,
                detail,
            })
        };

        for (id, v) in &self.vertices {
            match self.graphs.get(&v.parent) {
                None => push(id.to_string(), Rule::VertexParentMissing, format!("parent {} unknown", v.parent)),
                Some(g) => {
                    let n = g.immediate_targets.iter().filter(|t| *t == id).count();
                    if n != 1 {
                        push(
                            id.to_string(),
                            Rule::VertexNotListedOnce,
                            format!("listed {n} times by parent {}", v.parent),
                        );
                    }
                }
            }
            for s in &v.sources {
                if !self.vertices.contains_key(s) {
                    push(id.to_string(), Rule::DanglingSource, format!("source {s} unknown"));
                }
            }
            if v.forward_ref.is_some() {
                push(id.to_string(), Rule::ForwardRefLeft, "forward_ref set outside a copy".into());
            }
            if let Err(e) = v.data.check() {
                push(id.to_string(), Rule::DataInvariant, e);
            }
            if let VertexData::GraphRef { graph, .. } = &v.data {
                if !self.graphs.contains_key(graph) {
                    push(id.to_string(), Rule::DanglingGraphRef, format!("graph {graph} unknown"));
                }
            }
        }

        for (gid, g) in &self.graphs {
            for t in &g.immediate_targets {
                match self.vertices.get(t) {
                    None => push(gid.to_string(), Rule::DanglingTarget, format!("target {t} unknown")),
                    Some(v) if v.parent != *gid => push(
                        gid.to_string(),
                        Rule::ForeignTarget,
                        format!("lists {t} whose parent is {}", v.parent),
                    ),
                    _ => {}
                }
            }
            for s in &g.immediate_subgraphs {
                if !self.graphs.contains_key(s) {
                    push(gid.to_string(), Rule::DanglingSubgraph, format!("subgraph {s} unknown"));
                }
            }
            // how many graphs list this one as a subgraph
            let listers: Vec<GraphId> = self
                .graphs
                .iter()
                .flat_map(|(pid, p)| {
                    p.immediate_subgraphs
                        .iter()
                        .filter(|s| *s == gid)
                        .map(move |_| *pid)
                })
                .collect();
            if listers.len() > 1 {
                push(
                    gid.to_string(),
                    Rule::SubgraphMultipleParents,
                    format!("listed as subgraph by {listers:?}"),
                );
            } else {
                match (g.parent, listers.first()) {
                    (Some(p), None) => {
                        if self.graphs.contains_key(&p) {
                            push(gid.to_string(), Rule::SubgraphNotListed, format!("parent {p} does not list it"));
                        } else {
                            push(gid.to_string(), Rule::GraphParentMissing, format!("parent {p} unknown"));
                        }
                    }
                    (Some(p), Some(l)) if p != *l => push(
                        gid.to_string(),
                        Rule::SubgraphParentMismatch,
                        format!("parent is {p} but listed by {l}"),
                    ),
                    (None, Some(l)) => push(
                        gid.to_string(),
                        Rule::SubgraphParentMismatch,
                        format!("top-level but listed by {l}"),
                    ),
                    _ => {}
                }
            }
            let top = self.top_level_graphs.iter().filter(|t| *t == gid).count();
            match (g.parent.is_none(), top) {
                (true, 1) | (false, 0) => {}
                (true, n) => push(gid.to_string(), Rule::TopLevelMismatch, format!("parentless, listed {n} times as top-level")),
                (false, _) => push(gid.to_string(), Rule::TopLevelMismatch, "has a parent but is listed as top-level".into()),
            }
            // cycle: walk up from gid
            let mut cur = g.parent;
            let mut steps = 0;
            while let Some(p) = cur {
                if p == *gid {
                    push(gid.to_string(), Rule::HierarchyCycle, "graph is its own ancestor".into());
                    break;
                }
                steps += 1;
                if steps > self.graphs.len() {
                    break;
                }
                cur = self.graphs.get(&p).and_then(|x| x.parent);
            }
        }
        for t in &self.top_level_graphs {
            if !self.graphs.contains_key(t) {
                push(t.to_string(), Rule::TopLevelMismatch, "top-level graph unknown".into());
            }
        }
        if let Some(m) = self.main_graph {
            if !self.top_level_graphs.contains(&m) {
                push(m.to_string(), Rule::MainNotTopLevel, "main graph is not top-level".into());
            }
        }
        for r in &self.ramps {
            if !self.vertices.contains_key(&r.vertex) {
                push(r.vertex.to_string(), Rule::DanglingSource, "ramp on unknown vertex".into());
            }
        }
        out
    }

    /// The stream/transform reading of a graph.
    pub fn to_bipartite_view(&self, graph: GraphId) -> Result<BipartiteView> {
        let members = self.flatten(graph)?;
        let member_set: BTreeSet<VertexId> = members.iter().copied().collect();
        let mut view = BipartiteView {
            stream_nodes: members.clone(),
            ..BipartiteView::default()
        };
        for v in &members {
            let vx = &self.vertices[v];
            if !vx.data.bears_transform() {
                continue;
            }
            view.transform_nodes.push(*v);
            for s in &vx.sources {
                if !member_set.contains(s) && !view.external_streams.contains(s) {
                    view.external_streams.push(*s);
                }
                view.edges.push(BipartiteEdge {
                    from: BipartiteNode::Stream(*s),
                    to: BipartiteNode::Transform(*v),
                });
            }
            view.edges.push(BipartiteEdge {
                from: BipartiteNode::Transform(*v),
                to: BipartiteNode::Stream(*v),
            });
        }
        Ok(view)
    }
}

/// Which invariant a [`Violation`] breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    VertexParentMissing,
    VertexNotListedOnce,
    DanglingSource,
    DanglingTarget,
    ForeignTarget,
    DanglingSubgraph,
    GraphParentMissing,
    SubgraphNotListed,
    SubgraphParentMismatch,
    SubgraphMultipleParents,
    TopLevelMismatch,
    MainNotTopLevel,
    HierarchyCycle,
    ForwardRefLeft,
    DataInvariant,
    DanglingGraphRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub subject: String,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {:?}: {}", self.subject, self.rule, self.detail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "vertex", rename_all = "snake_case")]
pub enum BipartiteNode {
    Stream(VertexId),
    /// The transform owned by this vertex.
    Transform(VertexId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BipartiteEdge {
    pub from: BipartiteNode,
    pub to: BipartiteNode,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BipartiteView {
    /// One per vertex of the graph's flattening.
    pub stream_nodes: Vec<VertexId>,
    pub transform_nodes: Vec<VertexId>,
    /// Streams outside the graph that feed one of its transforms.
    pub external_streams: Vec<VertexId>,
    pub edges: Vec<BipartiteEdge>,
}
