use thiserror::Error;

use crate::ids::{GraphId, Ref, VertexId};

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("unknown graph {0}")]
    UnknownGraph(GraphId),
    #[error("cannot resolve {0}")]
    Unresolved(Ref),
    #[error("reference {0} is ambiguous")]
    Ambiguous(Ref),
    #[error("program already has main graph {0}")]
    MainGraphAlreadySet(GraphId),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("frame dimensions differ: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{transform} expects {expected} image source(s), got {got}")]
    ArityMismatch {
        transform: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("source {0} does not produce frames")]
    NotProducingFrames(VertexId),
    #[error("vertex {0} does not carry a dynamic image transform")]
    NotDynamic(VertexId),
    #[error("vertex {0} does not carry image-stream data")]
    NotImageStream(VertexId),
    #[error("vertex {vertex}: expected {expected}")]
    WrongTransform {
        vertex: VertexId,
        expected: &'static str,
    },
    #[error("alpha {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("ramp duration must be at least one tick")]
    EmptyRamp,
    #[error("vertex {0} takes its alpha from a numeric control")]
    AlphaControlled(VertexId),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("edit rejected as non-benign: {0}")]
    NonBenign(String),
    #[error("graph {graph} is referenced from outside by vertex {from}")]
    InboundReference { graph: GraphId, from: VertexId },
    #[error("vertex {0} has no click control")]
    NoClickControl(VertexId),
    #[error("vertex {0} is not a numeric control")]
    NotNumericControl(VertexId),
    #[error("click ({x}, {y}) outside {width}x{height} frame")]
    ClickOutOfBounds {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
    #[error("invalid vertex data: {0}")]
    InvalidData(String),
    #[error("program fails validation: {0}")]
    Invalid(String),
}
