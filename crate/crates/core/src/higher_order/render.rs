use serde::{Deserialize, Serialize};

use crate::data::{TransformKind, VertexData};
use crate::error::Result;
use crate::frame::ImageFrame;
use crate::ids::{GraphId, VertexId};
use crate::program::DataflowProgram;

use super::LayoutState;

const BACKGROUND: f64 = -1.0;
const EDGE_LEVEL: f64 = -0.3;
const ARROW_LEVEL: f64 = 0.5;

/// One node glyph in a rendered graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Glyph {
    pub vertex: VertexId,
    pub kind: String,
    pub position: [f64; 2],
    /// Drawn as the fixed placeholder for a reference to the graph being
    /// rendered.
    pub self_reference: bool,
}

/// One directed stroke, from a source to its consumer. Endpoints outside
/// the rendered graph have no position and are not drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeStroke {
    pub from: VertexId,
    pub to: VertexId,
    pub from_position: Option<[f64; 2]>,
    pub to_position: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DrawList {
    pub glyphs: Vec<Glyph>,
    pub edges: Vec<EdgeStroke>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendering {
    pub frame: ImageFrame,
    pub draw_list: DrawList,
}

fn glyph_kind(data: &VertexData) -> String {
    match data {
        VertexData::DynamicImage { transform, .. } => format!("DynamicImage:{}", transform.name()),
        other => other.variant_name().to_string(),
    }
}

/// Fill level per data variant; all distinct.
fn fill_level(data: &VertexData) -> f64 {
    match data {
        VertexData::ConstantImage { .. } => 1.0,
        VertexData::DynamicImage { transform, .. } => match transform {
            TransformKind::Identity => 0.8,
            TransformKind::Negation => 0.6,
            TransformKind::SumOf2 { .. } => 0.4,
            TransformKind::Wave { .. } => 0.2,
        },
        VertexData::GraphRef { .. } => 0.9,
        VertexData::Sampler { .. } => 0.0,
        VertexData::SignedSampler { .. } => -0.2,
        VertexData::NumericControl { .. } => -0.4,
        VertexData::ClickControl { .. } => -0.5,
        VertexData::Clock => -0.6,
    }
}

fn to_pixel(p: [f64; 2], width: usize, height: usize) -> (i64, i64) {
    (
        (p[0] * (width - 1) as f64).round() as i64,
        (p[1] * (height - 1) as f64).round() as i64,
    )
}

fn stroke(frame: &mut ImageFrame, a: (i64, i64), b: (i64, i64), level: f64) {
    // Bresenham
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        frame.put(x, y, level);
        if (x, y) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Draws the flattening of `graph` with positions from `layout`.
///
/// A GraphRef vertex naming `graph` itself gets a hollow placeholder glyph;
/// referenced graphs are never rendered recursively, so this terminates for
/// any pattern of references.
pub fn render_graph(
    program: &DataflowProgram,
    graph: GraphId,
    layout: &LayoutState,
    width: usize,
    height: usize,
) -> Result<Rendering> {
    let members = program.flatten(graph)?;
    let mut frame = ImageFrame::filled(width, height, BACKGROUND);
    let mut draw_list = DrawList::default();
    let radius = ((width.min(height) / 32).max(1)) as i64;

    for v in &members {
        let vx = program.vertex(*v)?;
        for s in &vx.sources {
            draw_list.edges.push(EdgeStroke {
                from: *s,
                to: *v,
                from_position: layout.get(*s),
                to_position: layout.get(*v),
            });
        }
    }
    for e in &draw_list.edges {
        if let (Some(a), Some(b)) = (e.from_position, e.to_position) {
            let (pa, pb) = (to_pixel(a, width, height), to_pixel(b, width, height));
            stroke(&mut frame, pa, pb, EDGE_LEVEL);
            // head marker three quarters of the way to the consumer
            let hx = pa.0 + (pb.0 - pa.0) * 3 / 4;
            let hy = pa.1 + (pb.1 - pa.1) * 3 / 4;
            frame.put(hx, hy, ARROW_LEVEL);
        }
    }
    for v in &members {
        let vx = program.vertex(*v)?;
        let position = layout.get(*v).unwrap_or([0.5, 0.5]);
        let self_reference = matches!(&vx.data, VertexData::GraphRef { graph: g, .. } if *g == graph);
        let (cx, cy) = to_pixel(position, width, height);
        let level = fill_level(&vx.data);
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let edge = dx.abs() == radius || dy.abs() == radius;
                if self_reference {
                    // hollow square with a center dot
                    if edge || (dx == 0 && dy == 0) {
                        frame.put(cx + dx, cy + dy, 1.0);
                    } else {
                        frame.put(cx + dx, cy + dy, BACKGROUND);
                    }
                } else {
                    frame.put(cx + dx, cy + dy, level);
                }
            }
        }
        draw_list.glyphs.push(Glyph {
            vertex: *v,
            kind: glyph_kind(&vx.data),
            position,
            self_reference,
        });
    }
    Ok(Rendering { frame, draw_list })
}
