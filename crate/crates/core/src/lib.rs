//! Live dataflow runtime for image and sampler streams.
//!
//! A [`DataflowProgram`] is a forest of graphs whose vertices carry image
//! streams, sampler streams or controls. The [`Engine`] runs the main graph
//! tick by tick, and the [`editor`] rewrites the program between ticks with
//! edits that leave observable streams intact.

pub mod data;
pub mod editor;
pub mod engine;
pub mod error;
pub mod fixtures;
pub mod export;
pub mod frame;
pub mod higher_order;
pub mod ids;
pub mod iso;
pub mod kernels;
pub mod program;
pub mod scenario;

pub use data::{ClickState, SamplerKind, TransformKind, VertexData};
pub use editor::{apply_edit, Destination, EditCommand, EditOutcome, UndoRecord};
pub use engine::{
    apply_transform, ControlAction, ControlEvent, ControlState, Emission, Engine, RunTrace, TickReport,
};
pub use error::{CoreError, Result};
pub use export::{to_dot, to_json, ProgramDoc};
pub use frame::{fnv1a64, hash_hex, ImageFrame};
pub use higher_order::{DrawList, LayoutState, Rendering};
pub use ids::{GraphId, Ref, VertexId};
pub use iso::structurally_isomorphic;
pub use kernels::{Categorical, SignedSample, SignedSampler, WaveParams};
pub use program::{DataflowGraph, DataflowProgram, DataflowVertex, Violation};
pub use scenario::{
    load_scenario, parse_scenario, run_scenario, Manifest, RunOptions, Scenario, ScenarioDoc, ScenarioError,
    ScenarioRunner,
};
