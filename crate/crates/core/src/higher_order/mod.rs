//! Streams of dataflow graphs.
//!
//! A GraphRef vertex holds a reference to a graph (possibly the graph it
//! lives in) and renders that graph into its image stream every tick. Its
//! frames are ordinary image frames and can feed any image transform.

mod layout;
mod render;

pub use layout::{layout_incremental, seed_position, LayoutConfig, LayoutState};
pub use render::{render_graph, DrawList, EdgeStroke, Glyph, Rendering};

use crate::data::VertexData;
use crate::error::Result;
use crate::ids::{GraphId, VertexId};
use crate::program::DataflowProgram;

/// Adds a GraphRef vertex to `parent`. `graph` may be `parent` itself or
/// any graph above it.
pub fn make_graph_ref_vertex(
    program: &mut DataflowProgram,
    graph: GraphId,
    parent: GraphId,
    width: usize,
    height: usize,
) -> Result<VertexId> {
    program.graph(graph)?;
    program.graph(parent)?;
    program.add_vertex(parent, VertexData::graph_ref(graph, width, height), Vec::new())
}

/// The per-tick GraphRef update: advance the layout one step and render.
pub fn refresh_graph_ref(
    program: &DataflowProgram,
    graph: GraphId,
    layout: &LayoutState,
    width: usize,
    height: usize,
) -> Result<(LayoutState, Rendering)> {
    let next = layout_incremental(program, graph, layout, &LayoutConfig::default())?;
    let rendering = render_graph(program, graph, &next, width, height)?;
    Ok((next, rendering))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TransformKind;
    use crate::frame::ImageFrame;
    use crate::ids::GraphId;

    #[test]
    fn self_reference_renders_a_placeholder() {
        let mut p = DataflowProgram::new(0);
        let main = p.add_top_level_graph(true).unwrap();
        let r = make_graph_ref_vertex(&mut p, main, main, 32, 32).unwrap();
        assert!(p.validate().is_empty());
        let (_, rendering) = refresh_graph_ref(&p, main, &LayoutState::default(), 32, 32).unwrap();
        assert_eq!(rendering.draw_list.glyphs.len(), 1);
        assert!(rendering.draw_list.glyphs[0].self_reference);
        assert_eq!(rendering.draw_list.glyphs[0].vertex, r);
    }

    #[test]
    fn empty_graph_is_background_only() {
        let mut p = DataflowProgram::new(0);
        let g = p.add_top_level_graph(true).unwrap();
        let r = render_graph(&p, g, &LayoutState::default(), 16, 16).unwrap();
        assert!(r.draw_list.glyphs.is_empty() && r.draw_list.edges.is_empty());
        assert!(r.frame.values().iter().all(|v| *v == -1.0));
    }

    #[test]
    fn template_draw_list_counts() {
        let mut p = DataflowProgram::new(0);
        let t = p.add_top_level_graph(false).unwrap();
        let k = p.add_vertex(t, VertexData::constant(ImageFrame::zeros(4, 4)), vec![]).unwrap();
        p.add_vertex(t, VertexData::dynamic(TransformKind::Negation, 4, 4), vec![k]).unwrap();
        let main = p.add_top_level_graph(true).unwrap();
        make_graph_ref_vertex(&mut p, t, main, 32, 32).unwrap();
        let (_, r) = refresh_graph_ref(&p, t, &LayoutState::default(), 32, 32).unwrap();
        assert_eq!(r.draw_list.glyphs.len(), 2);
        assert_eq!(r.draw_list.edges.len(), 1);
        assert!(r.draw_list.glyphs.iter().all(|g| !g.self_reference));
    }

    #[test]
    fn mutual_references_terminate() {
        let mut p = DataflowProgram::new(0);
        let a = p.add_top_level_graph(true).unwrap();
        let b = p.add_top_level_graph(false).unwrap();
        make_graph_ref_vertex(&mut p, b, a, 16, 16).unwrap();
        make_graph_ref_vertex(&mut p, a, b, 16, 16).unwrap();
        for g in [a, b] {
            let (_, r) = refresh_graph_ref(&p, g, &LayoutState::default(), 16, 16).unwrap();
            assert_eq!(r.draw_list.glyphs.len(), 1);
            assert!(!r.draw_list.glyphs[0].self_reference);
        }
    }

    #[test]
    fn unknown_graph_is_rejected() {
        let mut p = DataflowProgram::new(0);
        let main = p.add_top_level_graph(true).unwrap();
        assert!(make_graph_ref_vertex(&mut p, GraphId(404), main, 8, 8).is_err());
    }
}
