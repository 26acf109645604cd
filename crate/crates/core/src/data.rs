//! Data attached to dataflow vertices.

use serde::{Deserialize, Serialize};

use crate::frame::ImageFrame;
use crate::higher_order::LayoutState;
use crate::ids::GraphId;
use crate::kernels::{Categorical, SignedSample, SignedSampler, WaveParams};

/// Where a wave was last restarted.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClickState {
    /// `None` means the middle of the frame.
    #[serde(default)]
    pub center: Option<[f64; 2]>,
    #[serde(default)]
    pub frame_count_base: u64,
}

impl ClickState {
    pub fn center_for(&self, width: usize, height: usize) -> [f64; 2] {
        self.center
            .unwrap_or([width as f64 / 2.0, height as f64 / 2.0])
    }
}

/// The transform producing a dynamic image stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TransformKind {
    Identity,
    Negation,
    /// `(1 - alpha) * first + alpha * second`.
    #[serde(rename = "sum_of_2")]
    SumOf2 { alpha: f64 },
    /// Wave reflection. The embedded click state is used unless the vertex
    /// has a click-control source.
    Wave {
        #[serde(flatten)]
        params: WaveParams,
        #[serde(flatten)]
        click: ClickState,
    },
}

impl TransformKind {
    pub fn name(&self) -> &'static str {
        match self {
            TransformKind::Identity => "Identity",
            TransformKind::Negation => "Negation",
            TransformKind::SumOf2 { .. } => "SumOf2",
            TransformKind::Wave { .. } => "Wave",
        }
    }

    /// Number of image sources the transform reads.
    pub fn arity(&self) -> usize {
        match self {
            TransformKind::SumOf2 { .. } => 2,
            _ => 1,
        }
    }

    pub fn wave(params: WaveParams) -> Self {
        TransformKind::Wave {
            params,
            click: ClickState::default(),
        }
    }
}

/// What a sampler vertex draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SamplerKind {
    /// Independent draws from a fixed distribution.
    Categorical { distribution: Categorical },
    /// Mixture of its first two sampler sources.
    Mixture { alpha: f64 },
}

/// Data associated with a vertex. A closed set of variants.
#[derive(Debug, Clone, PartialEq)]
pub enum VertexData {
    ConstantImage {
        frame: ImageFrame,
    },
    DynamicImage {
        transform: TransformKind,
        source_buffer: ImageFrame,
        target_buffer: ImageFrame,
    },
    Sampler {
        kind: SamplerKind,
        latest: i64,
        next: i64,
    },
    SignedSampler {
        sampler: SignedSampler,
        latest: SignedSample,
        next: SignedSample,
    },
    NumericControl {
        value: f64,
    },
    ClickControl {
        click: ClickState,
    },
    Clock,
    /// A stream of renderings of a dataflow graph.
    GraphRef {
        graph: GraphId,
        layout: LayoutState,
        source_buffer: ImageFrame,
        target_buffer: ImageFrame,
    },
}

impl VertexData {
    pub fn constant(frame: ImageFrame) -> Self {
        VertexData::ConstantImage { frame }
    }

    /// A dynamic image with both buffers zeroed.
    pub fn dynamic(transform: TransformKind, width: usize, height: usize) -> Self {
        VertexData::DynamicImage {
            transform,
            source_buffer: ImageFrame::zeros(width, height),
            target_buffer: ImageFrame::zeros(width, height),
        }
    }

    pub fn categorical(distribution: Categorical) -> Self {
        VertexData::Sampler {
            kind: SamplerKind::Categorical { distribution },
            latest: 0,
            next: 0,
        }
    }

    pub fn mixture(alpha: f64) -> Self {
        VertexData::Sampler {
            kind: SamplerKind::Mixture { alpha },
            latest: 0,
            next: 0,
        }
    }

    pub fn signed(sampler: SignedSampler) -> Self {
        VertexData::SignedSampler {
            sampler,
            latest: SignedSample::default(),
            next: SignedSample::default(),
        }
    }

    pub fn graph_ref(graph: GraphId, width: usize, height: usize) -> Self {
        VertexData::GraphRef {
            graph,
            layout: LayoutState::default(),
            source_buffer: ImageFrame::zeros(width, height),
            target_buffer: ImageFrame::zeros(width, height),
        }
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            VertexData::ConstantImage { .. } => "ConstantImage",
            VertexData::DynamicImage { .. } => "DynamicImage",
            VertexData::Sampler { .. } => "Sampler",
            VertexData::SignedSampler { .. } => "SignedSampler",
            VertexData::NumericControl { .. } => "NumericControl",
            VertexData::ClickControl { .. } => "ClickControl",
            VertexData::Clock => "Clock",
            VertexData::GraphRef { .. } => "GraphRef",
        }
    }

    /// True for variants whose stream is a sequence of images.
    pub fn is_image_stream(&self) -> bool {
        matches!(
            self,
            VertexData::ConstantImage { .. }
                | VertexData::DynamicImage { .. }
                | VertexData::GraphRef { .. }
        )
    }

    /// The frame consumers read this tick.
    pub fn current_frame(&self) -> Option<&ImageFrame> {
        match self {
            VertexData::ConstantImage { frame } => Some(frame),
            VertexData::DynamicImage { source_buffer, .. }
            | VertexData::GraphRef { source_buffer, .. } => Some(source_buffer),
            _ => None,
        }
    }

    /// The frame this stream showed one tick before `current_frame`.
    ///
    /// After a shift the target buffer still holds the previous source
    /// frame, which lets split-style edits seed a delay stage exactly.
    pub fn previous_frame(&self) -> Option<&ImageFrame> {
        match self {
            VertexData::ConstantImage { frame } => Some(frame),
            VertexData::DynamicImage { target_buffer, .. }
            | VertexData::GraphRef { target_buffer, .. } => Some(target_buffer),
            _ => None,
        }
    }

    pub fn transform(&self) -> Option<&TransformKind> {
        match self {
            VertexData::DynamicImage { transform, .. } => Some(transform),
            _ => None,
        }
    }

    pub fn transform_mut(&mut self) -> Option<&mut TransformKind> {
        match self {
            VertexData::DynamicImage { transform, .. } => Some(transform),
            _ => None,
        }
    }

    /// Variants that own a transform in the bipartite reading of a graph.
    pub fn bears_transform(&self) -> bool {
        matches!(
            self,
            VertexData::DynamicImage { .. }
                | VertexData::Sampler {
                    kind: SamplerKind::Mixture { .. },
                    ..
                }
        )
    }

    /// Parameter-level description used for structural comparison. Buffers,
    /// layouts and latest samples are state, not structure, and are left out.
    pub fn signature(&self) -> String {
        match self {
            VertexData::ConstantImage { frame } => {
                format!("ConstantImage({}x{},{:016x})", frame.width(), frame.height(), frame.hash())
            }
            VertexData::DynamicImage { transform, .. } => match transform {
                TransformKind::SumOf2 { alpha } => format!("DynamicImage:SumOf2({alpha:?})"),
                TransformKind::Wave { params, .. } => format!(
                    "DynamicImage:Wave({:?},{:?},{:?})",
                    params.amplitude, params.wavelength, params.speed
                ),
                t => format!("DynamicImage:{}", t.name()),
            },
            VertexData::Sampler { kind, .. } => match kind {
                SamplerKind::Categorical { distribution } => {
                    format!("Sampler:Categorical({:?})", distribution.weights())
                }
                SamplerKind::Mixture { alpha } => format!("Sampler:Mixture({alpha:?})"),
            },
            VertexData::SignedSampler { sampler, .. } => format!(
                "SignedSampler({:?},{:?},{:?},{:?})",
                sampler.pos_channel.weights(),
                sampler.neg_channel.weights(),
                sampler.pos_weight,
                sampler.neg_weight
            ),
            VertexData::NumericControl { value } => format!("NumericControl({value:?})"),
            VertexData::ClickControl { .. } => "ClickControl".into(),
            VertexData::Clock => "Clock".into(),
            VertexData::GraphRef { .. } => "GraphRef".into(),
        }
    }

    /// Checks per-variant invariants.
    pub fn check(&self) -> Result<(), String> {
        match self {
            VertexData::ConstantImage { frame } => {
                if !frame.is_in_range() {
                    return Err("constant frame out of range".into());
                }
            }
            VertexData::DynamicImage {
                transform,
                source_buffer,
                target_buffer,
            } => {
                if !source_buffer.same_dims(target_buffer) {
                    return Err("dynamic buffers differ in dimensions".into());
                }
                match transform {
                    TransformKind::SumOf2 { alpha } if !(0.0..=1.0).contains(alpha) => {
                        return Err(format!("SumOf2 alpha {alpha} outside [0, 1]"));
                    }
                    TransformKind::Wave { params, .. }
                        if !(params.wavelength > 0.0)
                            || !params.amplitude.is_finite()
                            || !params.speed.is_finite() =>
                    {
                        return Err("wave parameters invalid".into());
                    }
                    _ => {}
                }
            }
            VertexData::Sampler {
                kind: SamplerKind::Mixture { alpha },
                ..
            } if !(0.0..=1.0).contains(alpha) => {
                return Err(format!("mixture alpha {alpha} outside [0, 1]"));
            }
            VertexData::SignedSampler { sampler, .. } => {
                if !(sampler.pos_weight >= 0.0 && sampler.neg_weight >= 0.0) {
                    return Err("signed sampler weights must be non-negative".into());
                }
            }
            VertexData::NumericControl { value } if !(0.0..=1.0).contains(value) => {
                return Err(format!("numeric control value {value} outside [0, 1]"));
            }
            VertexData::GraphRef {
                source_buffer,
                target_buffer,
                ..
            } if !source_buffer.same_dims(target_buffer) => {
                return Err("graph-ref buffers differ in dimensions".into());
            }
            _ => {}
        }
        Ok(())
    }
}
