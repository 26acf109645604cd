//! Structural isomorphism of programs, ignoring ids, names and stream state.
//!
//! Both programs are encoded as labelled digraphs: one node per graph and
//! per vertex, containment edges from graphs, and source edges carrying the
//! source positions. Vertex labels are data signatures (variant and
//! parameters, not buffers), so two programs match when they compute the
//! same thing from the same structure.

use std::collections::BTreeMap;

use petgraph::algo::is_isomorphic_matching;
use petgraph::graph::{DiGraph, NodeIndex};

use crate::data::VertexData;
use crate::ids::{GraphId, VertexId};
use crate::program::DataflowProgram;

fn encode(p: &DataflowProgram) -> DiGraph<String, String> {
    let mut g = DiGraph::new();
    let mut graph_nodes: BTreeMap<GraphId, NodeIndex> = BTreeMap::new();
    let mut vertex_nodes: BTreeMap<VertexId, NodeIndex> = BTreeMap::new();
    for gid in p.graph_ids() {
        let label = if p.main_graph() == Some(gid) {
            "graph:main"
        } else {
            "graph"
        };
        graph_nodes.insert(gid, g.add_node(label.to_string()));
    }
    for vid in p.vertex_ids() {
        let vx = p.vertex(vid).expect("listed");
        vertex_nodes.insert(vid, g.add_node(vx.data.signature()));
    }
    let mut edges: BTreeMap<(NodeIndex, NodeIndex), Vec<String>> = BTreeMap::new();
    for gid in p.graph_ids() {
        let graph = p.graph(gid).expect("listed");
        let from = graph_nodes[&gid];
        for s in &graph.immediate_subgraphs {
            if let Some(to) = graph_nodes.get(s) {
                edges.entry((from, *to)).or_default().push("sub".into());
            }
        }
        for t in &graph.immediate_targets {
            if let Some(to) = vertex_nodes.get(t) {
                edges.entry((from, *to)).or_default().push("target".into());
            }
        }
    }
    for vid in p.vertex_ids() {
        let vx = p.vertex(vid).expect("listed");
        let from = vertex_nodes[&vid];
        for (i, s) in vx.sources.iter().enumerate() {
            if let Some(to) = vertex_nodes.get(s) {
                edges.entry((from, *to)).or_default().push(format!("src{i}"));
            }
        }
        if let VertexData::GraphRef { graph, .. } = &vx.data {
            if let Some(to) = graph_nodes.get(graph) {
                edges.entry((from, *to)).or_default().push("ref".into());
            }
        }
    }
    // parallel edges are folded into one edge with a combined label
    for ((a, b), labels) in edges {
        g.add_edge(a, b, labels.join(","));
    }
    g
}

/// True when the two programs are structurally isomorphic.
pub fn structurally_isomorphic(a: &DataflowProgram, b: &DataflowProgram) -> bool {
    if a.vertex_count() != b.vertex_count() || a.graph_count() != b.graph_count() {
        return false;
    }
    let (ga, gb) = (encode(a), encode(b));
    if ga.edge_count() != gb.edge_count() {
        return false;
    }
    is_isomorphic_matching(&ga, &gb, |x, y| x == y, |x, y| x == y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TransformKind;
    use crate::frame::ImageFrame;

    fn base() -> (DataflowProgram, GraphId) {
        let mut p = DataflowProgram::new(0);
        let g = p.add_top_level_graph(true).unwrap();
        (p, g)
    }

    #[test]
    fn identical_builds_match() {
        let build = || {
            let (mut p, g) = base();
            let k = p.add_vertex(g, VertexData::constant(ImageFrame::filled(2, 2, 0.2)), vec![]).unwrap();
            p.add_vertex(g, VertexData::dynamic(TransformKind::Negation, 2, 2), vec![k]).unwrap();
            p
        };
        assert!(structurally_isomorphic(&build(), &build()));
    }

    #[test]
    fn source_order_matters() {
        let build = |swap: bool| {
            let (mut p, g) = base();
            let a = p.add_vertex(g, VertexData::constant(ImageFrame::filled(2, 2, 0.2)), vec![]).unwrap();
            let b = p.add_vertex(g, VertexData::constant(ImageFrame::filled(2, 2, -0.2)), vec![]).unwrap();
            let srcs = if swap { vec![b, a] } else { vec![a, b] };
            p.add_vertex(g, VertexData::dynamic(TransformKind::SumOf2 { alpha: 0.5 }, 2, 2), srcs)
                .unwrap();
            p
        };
        assert!(!structurally_isomorphic(&build(false), &build(true)));
    }

    #[test]
    fn parameters_matter_but_buffers_do_not() {
        let (mut p, g) = base();
        let k = p.add_vertex(g, VertexData::constant(ImageFrame::filled(2, 2, 0.2)), vec![]).unwrap();
        let n = p.add_vertex(g, VertexData::dynamic(TransformKind::Negation, 2, 2), vec![k]).unwrap();
        let mut q = p.clone();
        if let VertexData::DynamicImage { source_buffer, .. } = &mut q.vertex_mut(n).unwrap().data {
            *source_buffer = ImageFrame::filled(2, 2, 0.7);
        }
        assert!(structurally_isomorphic(&p, &q));
        q.vertex_mut(n).unwrap().data = VertexData::dynamic(TransformKind::Identity, 2, 2);
        assert!(!structurally_isomorphic(&p, &q));
    }
}
