//! Small reference programs and a seeded random program generator, shared
//! by tests, benches and the acceptance suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{TransformKind, VertexData};
use crate::editor::{Destination, EditCommand};
use crate::frame::ImageFrame;
use crate::ids::{GraphId, VertexId};
use crate::kernels::{Categorical, SignedSampler, WaveParams};
use crate::program::DataflowProgram;

/// A frame with a smooth diagonal gradient and a bright spot.
pub fn test_pattern(width: usize, height: usize) -> ImageFrame {
    ImageFrame::from_fn(width, height, |x, y| {
        let g = (x + y) as f64 / (width + height).max(1) as f64;
        if x == width / 3 && y == height / 3 {
            1.0
        } else {
            2.0 * g - 1.0
        }
    })
}

pub struct Diamond {
    pub program: DataflowProgram,
    pub a: VertexId,
    pub b: VertexId,
    pub c: VertexId,
    pub d: VertexId,
}

/// `A = Wave(K)`, `B = Identity(A)`, `C = Negation(A)`, `D = SumOf2(B, C)`.
/// A is time-varying, so D's dependence on A two ticks back is observable.
pub fn diamond(width: usize, height: usize, alpha: f64) -> Diamond {
    let mut program = DataflowProgram::new(1);
    let g = program.add_top_level_graph(true).expect("fresh program");
    program.set_graph_name(g, "main").expect("fresh name");
    let k = program
        .add_labeled_vertex(g, "k", VertexData::constant(test_pattern(width, height)), vec![])
        .expect("valid");
    let a = program
        .add_labeled_vertex(g, "a", VertexData::dynamic(TransformKind::wave(WaveParams::default()), width, height), vec![k])
        .expect("valid");
    let b = program
        .add_labeled_vertex(g, "b", VertexData::dynamic(TransformKind::Identity, width, height), vec![a])
        .expect("valid");
    let c = program
        .add_labeled_vertex(g, "c", VertexData::dynamic(TransformKind::Negation, width, height), vec![a])
        .expect("valid");
    let d = program
        .add_labeled_vertex(g, "d", VertexData::dynamic(TransformKind::SumOf2 { alpha }, width, height), vec![b, c])
        .expect("valid");
    Diamond { program, a, b, c, d }
}

/// Two negations feeding each other; `a` starts at `init`.
pub fn negation_loop(width: usize, height: usize, init: f64) -> (DataflowProgram, VertexId, VertexId) {
    let mut p = DataflowProgram::new(1);
    let g = p.add_top_level_graph(true).expect("fresh program");
    let a = p
        .add_vertex(g, VertexData::dynamic(TransformKind::Negation, width, height), vec![])
        .expect("valid");
    let b = p
        .add_vertex(g, VertexData::dynamic(TransformKind::Negation, width, height), vec![a])
        .expect("valid");
    let va = p.vertex_mut(a).expect("just added");
    va.sources = vec![b];
    if let VertexData::DynamicImage { source_buffer, .. } = &mut va.data {
        *source_buffer = ImageFrame::filled(width, height, init);
    }
    (p, a, b)
}

/// `mixture(P, Q)` with `P` and `Q` categorical samplers.
pub fn mixture_program(seed: u64, p: Categorical, q: Categorical, alpha: f64) -> (DataflowProgram, VertexId) {
    let mut prog = DataflowProgram::new(seed);
    let g = prog.add_top_level_graph(true).expect("fresh program");
    let vp = prog.add_vertex(g, VertexData::categorical(p), vec![]).expect("valid");
    let vq = prog.add_vertex(g, VertexData::categorical(q), vec![]).expect("valid");
    let m = prog.add_vertex(g, VertexData::mixture(alpha), vec![vp, vq]).expect("valid");
    (prog, m)
}

/// A lone signed sampler.
pub fn signed_program(seed: u64, sampler: SignedSampler) -> (DataflowProgram, VertexId) {
    let mut prog = DataflowProgram::new(seed);
    let g = prog.add_top_level_graph(true).expect("fresh program");
    let s = prog.add_vertex(g, VertexData::signed(sampler), vec![]).expect("valid");
    (prog, s)
}

/// Shape limits for [`random_program`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomShape {
    /// Vertices inside the template tree.
    pub max_vertices: usize,
    /// Graph levels in the template tree, counting the template itself.
    pub max_depth: usize,
    /// Upper bound on the share of template source slots that read from
    /// outside the template.
    pub external_fraction: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for RandomShape {
    fn default() -> Self {
        RandomShape {
            max_vertices: 20,
            max_depth: 3,
            external_fraction: 0.3,
            width: 4,
            height: 4,
        }
    }
}

/// A random program: a main graph of external vertices and a nested
/// template graph whose vertices read mostly from each other and partly
/// from main. Nothing outside the template reads from inside it.
pub struct RandomProgram {
    pub program: DataflowProgram,
    pub main: GraphId,
    pub template: GraphId,
    pub external: Vec<VertexId>,
    pub internal: Vec<VertexId>,
}

fn random_image_data<R: Rng>(rng: &mut R, w: usize, h: usize) -> VertexData {
    match rng.random_range(0..5) {
        0 => VertexData::constant(ImageFrame::filled(w, h, rng.random_range(-1.0..=1.0))),
        1 => VertexData::dynamic(TransformKind::Identity, w, h),
        2 => VertexData::dynamic(TransformKind::Negation, w, h),
        3 => VertexData::dynamic(
            TransformKind::SumOf2 {
                alpha: [0.0, 0.25, 0.5, 1.0][rng.random_range(0..4)],
            },
            w,
            h,
        ),
        _ => VertexData::dynamic(TransformKind::wave(WaveParams::default()), w, h),
    }
}

pub fn random_program(seed: u64, shape: &RandomShape) -> RandomProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (shape.width, shape.height);
    let mut program = DataflowProgram::new(seed);
    let main = program.add_top_level_graph(true).expect("fresh program");
    program.set_graph_name(main, "main").expect("fresh name");
    let mut external = Vec::new();
    for i in 0..rng.random_range(2..=4) {
        let v = program
            .add_labeled_vertex(
                main,
                &format!("x{i}"),
                VertexData::constant(ImageFrame::filled(w, h, rng.random_range(-1.0..=1.0))),
                vec![],
            )
            .expect("valid");
        external.push(v);
    }

    let template = program.add_top_level_graph(false).expect("fresh graph");
    program.set_graph_name(template, "tpl").expect("fresh name");
    let mut graphs = vec![(template, 1usize)];
    for _ in 0..rng.random_range(0..=4) {
        let candidates: Vec<_> = graphs.iter().filter(|(_, d)| *d < shape.max_depth).copied().collect();
        if candidates.is_empty() {
            break;
        }
        let (parent, depth) = candidates[rng.random_range(0..candidates.len())];
        let sub = program.add_subgraph(parent).expect("known parent");
        graphs.push((sub, depth + 1));
    }

    let n = rng.random_range(1..=shape.max_vertices.max(1));
    let mut internal = Vec::new();
    for i in 0..n {
        let (g, _) = graphs[rng.random_range(0..graphs.len())];
        let data = random_image_data(&mut rng, w, h);
        let v = program.add_labeled_vertex(g, &format!("n{i}"), data, vec![]).expect("valid");
        internal.push(v);
    }

    let slots: usize = internal
        .iter()
        .map(|v| program.vertex(*v).expect("listed").data.transform().map_or(0, TransformKind::arity))
        .sum();
    let mut external_budget = (shape.external_fraction * slots as f64).floor() as usize;
    for v in &internal {
        let arity = program.vertex(*v).expect("listed").data.transform().map_or(0, TransformKind::arity);
        let mut sources = Vec::with_capacity(arity);
        for _ in 0..arity {
            let outside = external_budget > 0 && rng.random_bool(shape.external_fraction);
            if outside {
                external_budget -= 1;
                sources.push(external[rng.random_range(0..external.len())]);
            } else {
                sources.push(internal[rng.random_range(0..internal.len())]);
            }
        }
        program.vertex_mut(*v).expect("listed").sources = sources;
    }
    RandomProgram {
        program,
        main,
        template,
        external,
        internal,
    }
}

fn pick<R: Rng, T: Copy>(rng: &mut R, items: &[T]) -> Option<T> {
    if items.is_empty() {
        None
    } else {
        Some(items[rng.random_range(0..items.len())])
    }
}

/// A random edit over the program's current vertices and graphs, drawn from
/// the whole vocabulary. Preconditions may or may not hold.
pub fn random_edit<R: Rng>(p: &DataflowProgram, rng: &mut R) -> Option<EditCommand> {
    let images: Vec<VertexId> = p.vertex_ids().filter(|v| p.vertex(*v).is_ok_and(|x| x.data.is_image_stream())).collect();
    let with = |t: fn(&TransformKind) -> bool| -> Vec<VertexId> {
        p.vertex_ids()
            .filter(|v| p.vertex(*v).is_ok_and(|x| x.data.transform().is_some_and(t)))
            .collect()
    };
    let sums = with(|t| matches!(t, TransformKind::SumOf2 { .. }));
    let identities = with(|t| matches!(t, TransformKind::Identity));
    let graphs: Vec<GraphId> = p.graph_ids().collect();
    let alpha = [0.0, 0.5, 1.0][rng.random_range(0..3)];
    let cmd = match rng.random_range(0..11) {
        0 => EditCommand::NodeSplit {
            target: pick(rng, &images)?.into(),
            bind: None,
        },
        1 => EditCommand::AddZeroWeightSource {
            identity_vertex: pick(rng, &identities)?.into(),
            side_vertex: pick(rng, &images)?.into(),
        },
        2 => EditCommand::DropZeroWeightSource {
            vertex: pick(rng, &sums)?.into(),
        },
        3 => EditCommand::SInsert {
            target_vertex: pick(rng, &images)?.into(),
            side_vertex: pick(rng, &images)?.into(),
            bind: None,
        },
        4 => EditCommand::LimitedDeepCopy {
            graph: pick(rng, &graphs)?.into(),
            destination: if rng.random_bool(0.5) {
                Destination::TopLevel
            } else {
                Destination::Parent(pick(rng, &graphs)?.into())
            },
            bind: None,
        },
        5 => EditCommand::SetAlpha {
            vertex: pick(rng, &sums)?.into(),
            value: alpha,
        },
        6 => EditCommand::RampAlpha {
            vertex: pick(rng, &sums)?.into(),
            from: alpha,
            to: 1.0 - alpha,
            duration_ticks: rng.random_range(1..10),
        },
        7 => EditCommand::MergeIdentity {
            identity_vertex: pick(rng, &identities)?.into(),
        },
        8 => EditCommand::SRemove {
            target_vertex: pick(rng, &sums)?.into(),
        },
        9 => EditCommand::RemoveSubgraph {
            graph: pick(rng, &graphs)?.into(),
        },
        _ => {
            let v = pick(rng, &images)?;
            let n = p.vertex(v).ok()?.sources.len();
            if n == 0 {
                return None;
            }
            EditCommand::RewireSource {
                vertex: v.into(),
                index: rng.random_range(0..n),
                new_source: pick(rng, &images)?.into(),
                allow_abrupt: true,
            }
        }
    };
    Some(cmd)
}
