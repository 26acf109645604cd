//! Wire messages. JSON text frames, one message per frame, discriminated by
//! a `type` field.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use streamgraft_core::higher_order::DrawList;
use streamgraft_core::{CoreError, EditCommand, ImageFrame, ProgramDoc, Ref, VertexId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    /// Restart the wave behind `vertex` at pixel (x, y).
    Click { vertex: Ref, x: f64, y: f64 },
    /// Set the numeric control of (or feeding) `vertex`.
    SetControl { vertex: Ref, value: f64 },
    Edit { edit: EditCommand },
    Pace { ticks_per_second: f64 },
    Pause,
    Resume,
    /// Run exactly one tick while paused.
    Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Frame {
        vertex: VertexId,
        /// The output name from the scenario.
        name: String,
        tick: u64,
        width: usize,
        height: usize,
        /// Quantized 8-bit pixels, row-major, base64.
        pixels: String,
    },
    GraphSnapshot {
        tick: u64,
        graph: ProgramDoc,
        draw_list: DrawList,
    },
    ControlState {
        tick: u64,
        vertex: VertexId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<[f64; 2]>,
    },
    TickAdvanced {
        tick: u64,
    },
    Error {
        code: String,
        detail: String,
    },
}

impl ServerMessage {
    pub fn frame(vertex: VertexId, name: &str, tick: u64, frame: &ImageFrame) -> Self {
        ServerMessage::Frame {
            vertex,
            name: name.to_string(),
            tick,
            width: frame.width(),
            height: frame.height(),
            pixels: STANDARD.encode(frame.quantized()),
        }
    }

    pub fn error(code: &str, detail: impl Into<String>) -> Self {
        ServerMessage::Error {
            code: code.to_string(),
            detail: detail.into(),
        }
    }

    pub fn from_core_error(e: &CoreError) -> Self {
        ServerMessage::error(error_code(e), e.to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

/// Decodes a Frame's pixels.
pub fn decode_pixels(pixels: &str) -> Option<Vec<u8>> {
    STANDARD.decode(pixels).ok()
}

pub fn error_code(e: &CoreError) -> &'static str {
    match e {
        CoreError::NoClickControl(_) | CoreError::NotNumericControl(_) => "no_control",
        CoreError::ClickOutOfBounds { .. } => "out_of_bounds",
        CoreError::Unresolved(_) | CoreError::Ambiguous(_) | CoreError::UnknownVertex(_) | CoreError::UnknownGraph(_) => {
            "unresolved"
        }
        CoreError::AlphaOutOfRange(_) | CoreError::EmptyRamp => "invalid_value",
        CoreError::NonBenign(_) => "non_benign",
        _ => "rejected",
    }
}
