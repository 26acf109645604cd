//! Serialized views of a program: a JSON document and Graphviz DOT.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{ClickState, SamplerKind, TransformKind, VertexData};
use crate::frame::hash_hex;
use crate::higher_order::LayoutState;
use crate::ids::{GraphId, VertexId};
use crate::kernels::{SignedSample, SignedSampler};
use crate::program::DataflowProgram;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum DataDoc {
    ConstantImage {
        width: usize,
        height: usize,
        frame_hash: String,
    },
    DynamicImage {
        transform: TransformKind,
        width: usize,
        height: usize,
        source_hash: String,
        target_hash: String,
    },
    Sampler {
        kind: SamplerKind,
        latest: i64,
    },
    SignedSampler {
        sampler: SignedSampler,
        latest: SignedSample,
    },
    NumericControl {
        value: f64,
    },
    ClickControl {
        click: ClickState,
    },
    Clock,
    GraphRef {
        graph: GraphId,
        layout: LayoutState,
        width: usize,
        height: usize,
        source_hash: String,
    },
}

impl DataDoc {
    pub fn from_data(data: &VertexData) -> Self {
        match data {
            VertexData::ConstantImage { frame } => DataDoc::ConstantImage {
                width: frame.width(),
                height: frame.height(),
                frame_hash: hash_hex(frame.hash()),
            },
            VertexData::DynamicImage {
                transform,
                source_buffer,
                target_buffer,
            } => DataDoc::DynamicImage {
                transform: transform.clone(),
                width: source_buffer.width(),
                height: source_buffer.height(),
                source_hash: hash_hex(source_buffer.hash()),
                target_hash: hash_hex(target_buffer.hash()),
            },
            VertexData::Sampler { kind, latest, .. } => DataDoc::Sampler {
                kind: kind.clone(),
                latest: *latest,
            },
            VertexData::SignedSampler { sampler, latest, .. } => DataDoc::SignedSampler {
                sampler: sampler.clone(),
                latest: *latest,
            },
            VertexData::NumericControl { value } => DataDoc::NumericControl { value: *value },
            VertexData::ClickControl { click } => DataDoc::ClickControl { click: *click },
            VertexData::Clock => DataDoc::Clock,
            VertexData::GraphRef {
                graph,
                layout,
                source_buffer,
                ..
            } => DataDoc::GraphRef {
                graph: *graph,
                layout: layout.clone(),
                width: source_buffer.width(),
                height: source_buffer.height(),
                source_hash: hash_hex(source_buffer.hash()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexDoc {
    pub id: VertexId,
    pub name: String,
    pub label: Option<String>,
    pub parent: GraphId,
    pub sources: Vec<VertexId>,
    pub data: DataDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDoc {
    pub id: GraphId,
    pub name: Option<String>,
    pub parent: Option<GraphId>,
    pub immediate_targets: Vec<VertexId>,
    pub immediate_subgraphs: Vec<GraphId>,
}

/// A whole program. Buffers appear as hashes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramDoc {
    pub clock: u64,
    pub rng_seed: u64,
    pub main_graph: Option<GraphId>,
    pub top_level_graphs: Vec<GraphId>,
    pub graphs: Vec<GraphDoc>,
    pub vertices: Vec<VertexDoc>,
}

impl ProgramDoc {
    pub fn from_program(p: &DataflowProgram) -> Self {
        let graphs = p
            .graph_ids()
            .map(|id| {
                let g = p.graph(id).expect("listed");
                GraphDoc {
                    id,
                    name: g.name.clone(),
                    parent: g.parent,
                    immediate_targets: g.immediate_targets.clone(),
                    immediate_subgraphs: g.immediate_subgraphs.clone(),
                }
            })
            .collect();
        let vertices = p
            .vertex_ids()
            .map(|id| {
                let v = p.vertex(id).expect("listed");
                VertexDoc {
                    id,
                    name: p.display_name(id),
                    label: v.label.clone(),
                    parent: v.parent,
                    sources: v.sources.clone(),
                    data: DataDoc::from_data(&v.data),
                }
            })
            .collect();
        ProgramDoc {
            clock: p.clock(),
            rng_seed: p.rng_seed(),
            main_graph: p.main_graph(),
            top_level_graphs: p.top_level_graphs().to_vec(),
            graphs,
            vertices,
        }
    }
}

pub fn to_json(p: &DataflowProgram) -> String {
    serde_json::to_string_pretty(&ProgramDoc::from_program(p)).expect("program doc serializes")
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn vertex_caption(data: &VertexData) -> String {
    match data {
        VertexData::DynamicImage { transform, .. } => match transform {
            TransformKind::SumOf2 { alpha } => format!("SumOf2 alpha={alpha}"),
            t => t.name().to_string(),
        },
        VertexData::Sampler { kind, .. } => match kind {
            SamplerKind::Categorical { .. } => "Categorical".into(),
            SamplerKind::Mixture { alpha } => format!("Mixture alpha={alpha}"),
        },
        VertexData::NumericControl { value } => format!("NumericControl {value}"),
        VertexData::GraphRef { graph, .. } => format!("GraphRef -> {graph}"),
        other => other.variant_name().to_string(),
    }
}

fn write_cluster(p: &DataflowProgram, g: GraphId, depth: usize, out: &mut String) {
    let Ok(graph) = p.graph(g) else { return };
    let pad = "  ".repeat(depth);
    let mut title = match &graph.name {
        Some(n) => format!("{n} ({g})"),
        None => g.to_string(),
    };
    if p.main_graph() == Some(g) {
        title.push_str(" [main]");
    }
    let _ = writeln!(out, "{pad}subgraph cluster_{} {{", g.0);
    let _ = writeln!(out, "{pad}  label=\"{}\";", dot_escape(&title));
    for v in &graph.immediate_targets {
        if let Ok(vx) = p.vertex(*v) {
            let _ = writeln!(
                out,
                "{pad}  {} [label=\"{}\\n{}\"];",
                v,
                dot_escape(&p.display_name(*v)),
                dot_escape(&vertex_caption(&vx.data))
            );
        }
    }
    for s in &graph.immediate_subgraphs {
        write_cluster(p, *s, depth + 1, out);
    }
    let _ = writeln!(out, "{pad}}}");
}

/// Graphviz rendering: one cluster per graph, edges from source to consumer
/// labelled with the source position.
pub fn to_dot(p: &DataflowProgram) -> String {
    let mut out = String::from("digraph program {\n  rankdir=LR;\n  node [shape=box];\n");
    for g in p.top_level_graphs() {
        write_cluster(p, *g, 1, &mut out);
    }
    for v in p.vertex_ids() {
        let vx = p.vertex(v).expect("listed");
        for (i, s) in vx.sources.iter().enumerate() {
            let _ = writeln!(out, "  {s} -> {v} [label=\"{i}\"];");
        }
        if let VertexData::GraphRef { graph, .. } = &vx.data {
            let _ = writeln!(out, "  {v} -> cluster_{} [style=dashed];", graph.0);
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::ImageFrame;

    fn sample() -> DataflowProgram {
        let mut p = DataflowProgram::new(3);
        let g = p.add_top_level_graph(true).unwrap();
        p.set_graph_name(g, "main").unwrap();
        let k = p
            .add_labeled_vertex(g, "img", VertexData::constant(ImageFrame::filled(2, 2, 0.5)), vec![])
            .unwrap();
        p.add_labeled_vertex(g, "neg", VertexData::dynamic(TransformKind::Negation, 2, 2), vec![k])
            .unwrap();
        p
    }

    #[test]
    fn json_round_trips() {
        let p = sample();
        let doc = ProgramDoc::from_program(&p);
        let text = to_json(&p);
        let back: ProgramDoc = serde_json::from_str(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(doc.vertices[1].name, "main.neg");
        assert!(text.contains("\"variant\": \"DynamicImage\""));
    }

    #[test]
    fn graph_ref_layout_round_trips() {
        let mut p = sample();
        let main = p.main_graph().unwrap();
        crate::higher_order::make_graph_ref_vertex(&mut p, main, main, 8, 8).unwrap();
        let mut e = crate::engine::Engine::new(p);
        e.tick().unwrap();
        let doc = ProgramDoc::from_program(e.program());
        let layout = doc
            .vertices
            .iter()
            .find_map(|v| match &v.data {
                DataDoc::GraphRef { layout, .. } => Some(layout.clone()),
                _ => None,
            })
            .unwrap();
        assert_eq!(layout.len(), 3);
        let back: ProgramDoc = serde_json::from_str(&to_json(e.program())).unwrap();
        assert_eq!(back, doc);
    }

    #[test]
    fn dot_lists_clusters_and_edges() {
        let dot = to_dot(&sample());
        assert!(dot.starts_with("digraph program {"));
        assert!(dot.contains("subgraph cluster_1"));
        assert!(dot.contains("[main]"));
        assert!(dot.contains("v2 -> v3 [label=\"0\"];"));
        assert_eq!(dot.matches('{').count(), dot.matches('}').count());
    }
}
