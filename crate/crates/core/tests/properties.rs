use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use streamgraft_core::data::{TransformKind, VertexData};
use streamgraft_core::editor::{self, EditCommand};
use streamgraft_core::engine::Engine;
use streamgraft_core::fixtures::{random_edit, random_program, RandomShape};
use streamgraft_core::higher_order::{layout_incremental, LayoutConfig, LayoutState};
use streamgraft_core::kernels::{convex_combine, mixture_sample, negate, wave_warp, WaveParams};
use streamgraft_core::program::{BipartiteNode, DataflowProgram};
use streamgraft_core::{GraphId, ImageFrame, VertexId};

fn frame(max_side: usize) -> impl Strategy<Value = ImageFrame> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        prop::collection::vec(-1.0f64..=1.0, w * h)
            .prop_map(move |v| ImageFrame::from_values(w, h, v).expect("in range"))
    })
}

fn frame_pair(max_side: usize) -> impl Strategy<Value = (ImageFrame, ImageFrame)> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        (
            prop::collection::vec(-1.0f64..=1.0, w * h),
            prop::collection::vec(-1.0f64..=1.0, w * h),
        )
            .prop_map(move |(a, b)| {
                (
                    ImageFrame::from_values(w, h, a).expect("in range"),
                    ImageFrame::from_values(w, h, b).expect("in range"),
                )
            })
    })
}

fn wave_params() -> impl Strategy<Value = WaveParams> {
    (-8.0f64..8.0, 0.5f64..40.0, -2.0f64..2.0).prop_map(|(amplitude, wavelength, speed)| WaveParams {
        amplitude,
        wavelength,
        speed,
    })
}

/// Random hierarchy of up to `levels` levels and `max_vertices` vertices.
fn random_hierarchy(seed: u64, levels: usize, max_vertices: usize) -> (DataflowProgram, Vec<GraphId>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = DataflowProgram::new(seed);
    let root = p.add_top_level_graph(true).unwrap();
    let mut graphs = vec![(root, 1usize)];
    for _ in 0..rng.random_range(0..8) {
        let options: Vec<_> = graphs.iter().filter(|(_, d)| *d < levels).copied().collect();
        if options.is_empty() {
            break;
        }
        let (parent, d) = options[rng.random_range(0..options.len())];
        graphs.push((p.add_subgraph(parent).unwrap(), d + 1));
    }
    let mut vs: Vec<VertexId> = Vec::new();
    for _ in 0..rng.random_range(0..=max_vertices) {
        let (g, _) = graphs[rng.random_range(0..graphs.len())];
        let data = if vs.is_empty() || rng.random_bool(0.3) {
            VertexData::constant(ImageFrame::zeros(2, 2))
        } else if rng.random_bool(0.5) {
            VertexData::dynamic(TransformKind::Negation, 2, 2)
        } else {
            VertexData::dynamic(TransformKind::SumOf2 { alpha: 0.5 }, 2, 2)
        };
        let arity = data.transform().map_or(0, |t| t.arity());
        let sources = (0..arity).map(|_| vs[rng.random_range(0..vs.len())]).collect();
        vs.push(p.add_vertex(g, data, sources).unwrap());
    }
    (p, graphs.into_iter().map(|(g, _)| g).collect())
}

fn flatten_oracle(p: &DataflowProgram, g: GraphId, out: &mut BTreeSet<VertexId>) {
    let graph = p.graph(g).unwrap();
    out.extend(graph.immediate_targets.iter().copied());
    for s in &graph.immediate_subgraphs {
        flatten_oracle(p, *s, out);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flatten_matches_recursive_union(seed in any::<u64>()) {
        let (p, graphs) = random_hierarchy(seed, 5, 20);
        for g in graphs {
            let flat = p.flatten(g).unwrap();
            let as_set: BTreeSet<_> = flat.iter().copied().collect();
            prop_assert_eq!(as_set.len(), flat.len());
            let mut oracle = BTreeSet::new();
            flatten_oracle(&p, g, &mut oracle);
            prop_assert_eq!(as_set, oracle);
        }
    }

    #[test]
    fn bipartite_edges_alternate(seed in any::<u64>()) {
        let r = random_program(seed, &RandomShape::default());
        for g in r.program.graph_ids() {
            let view = r.program.to_bipartite_view(g).unwrap();
            for e in &view.edges {
                let same = matches!(
                    (e.from, e.to),
                    (BipartiteNode::Stream(_), BipartiteNode::Stream(_))
                        | (BipartiteNode::Transform(_), BipartiteNode::Transform(_))
                );
                prop_assert!(!same);
            }
            for t in &view.transform_nodes {
                let out = view
                    .edges
                    .iter()
                    .filter(|e| e.from == BipartiteNode::Transform(*t))
                    .count();
                prop_assert_eq!(out, 1);
            }
        }
    }

    #[test]
    fn program_vertices_is_the_vertex_table(seed in any::<u64>()) {
        let r = random_program(seed, &RandomShape::default());
        prop_assert!(r.program.validate().is_empty());
        let listed: BTreeSet<_> = r.program.program_vertices().into_iter().collect();
        let table: BTreeSet<_> = r.program.vertex_ids().collect();
        prop_assert_eq!(listed, table);
    }

    #[test]
    fn validate_is_closed_under_random_edits(seed in any::<u64>()) {
        let r = random_program(seed, &RandomShape { max_vertices: 10, ..RandomShape::default() });
        let mut p = r.program;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for _ in 0..100 {
            if let Some(cmd) = random_edit(&p, &mut rng) {
                let before = p.clone();
                if editor::apply_edit(&mut p, &cmd).is_err() {
                    // rejected edits may not leave partial changes behind
                    p = before;
                }
                let violations = p.validate();
                prop_assert!(violations.is_empty(), "{:?} after {:?}", violations, cmd);
            }
            editor::advance_ramps(&mut p);
        }
    }

    #[test]
    fn kernels_preserve_range((a, b) in frame_pair(12), alpha in 0.0f64..=1.0, params in wave_params(),
                              cx in -5.0f64..20.0, cy in -5.0f64..20.0, t in 0u64..500) {
        prop_assert!(convex_combine(&a, &b, alpha).unwrap().is_in_range());
        prop_assert!(negate(&a).is_in_range());
        prop_assert!(wave_warp(&a, [cx, cy], t, &params).is_in_range());
    }

    #[test]
    fn convex_combine_endpoints_and_monotone((a, b) in frame_pair(10), x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
        prop_assert_eq!(convex_combine(&a, &b, 0.0).unwrap(), a.clone());
        prop_assert_eq!(convex_combine(&a, &b, 1.0).unwrap(), b.clone());
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        let f_lo = convex_combine(&a, &b, lo).unwrap();
        let f_hi = convex_combine(&a, &b, hi).unwrap();
        for i in 0..a.values().len() {
            if a.values()[i] <= b.values()[i] {
                prop_assert!(f_lo.values()[i] <= f_hi.values()[i] + 1e-15);
            }
        }
    }

    #[test]
    fn negate_involution_and_zero_midpoint(a in frame(12)) {
        prop_assert_eq!(negate(&negate(&a)), a.clone());
        let mid = convex_combine(&a, &negate(&a), 0.5).unwrap();
        prop_assert!(mid.values().iter().all(|v| v.abs() <= 1e-6));
    }

    #[test]
    fn flat_wave_is_identity(a in frame(12), params in wave_params(), t in 0u64..1000) {
        let still = WaveParams { amplitude: 0.0, ..params };
        prop_assert_eq!(wave_warp(&a, [3.0, 4.0], t, &still), a);
    }

    #[test]
    fn mixture_is_reproducible(seed in any::<u64>(), alpha in 0.0f64..=1.0) {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..64).map(|i| mixture_sample(i, -i, alpha, &mut rng)).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn edits_fire_only_at_boundaries(seed in any::<u64>(), at in 0u64..6) {
        let r = random_program(seed, &RandomShape { max_vertices: 8, ..RandomShape::default() });
        // run the template as the main graph so edits land on executed vertices
        let mut p = r.program;
        p.set_main_graph(r.template, true).unwrap();
        let outputs = p.flatten(r.template).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let Some(cmd) = (0..20).find_map(|_| {
            let c = random_edit(&p, &mut rng)?;
            let mut q = p.clone();
            editor::apply_edit(&mut q, &c).ok().map(|_| c)
        }) else {
            return Ok(());
        };
        let mut plain = Engine::new(p.clone());
        let mut edited = Engine::new(p);
        for v in &outputs {
            plain.register_output(*v).unwrap();
            edited.register_output(*v).unwrap();
        }
        edited.schedule_edit(at, cmd);
        for t in 0..=at {
            let a = plain.tick().unwrap();
            let b = edited.tick().unwrap();
            prop_assert_eq!(&a.emissions, &b.emissions, "tick {}", t);
        }
    }

    #[test]
    fn runs_are_deterministic(seed in any::<u64>()) {
        let r = random_program(seed, &RandomShape { max_vertices: 8, ..RandomShape::default() });
        let mut p = r.program;
        p.set_main_graph(r.template, true).unwrap();
        let outputs = p.flatten(r.template).unwrap();
        let run = || {
            let mut e = Engine::new(p.clone());
            for v in &outputs {
                e.register_output(*v).unwrap();
            }
            e.run(20).unwrap()
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn ramps_end_exactly(from in 0.0f64..=1.0, to in 0.0f64..=1.0, n in 1u64..40) {
        let mut p = DataflowProgram::new(0);
        let g = p.add_top_level_graph(true).unwrap();
        let k = p.add_vertex(g, VertexData::constant(ImageFrame::zeros(2, 2)), vec![]).unwrap();
        let s = p
            .add_vertex(g, VertexData::dynamic(TransformKind::SumOf2 { alpha: from }, 2, 2), vec![k, k])
            .unwrap();
        let mut e = Engine::new(p);
        e.apply_edit_now(&EditCommand::RampAlpha { vertex: s.into(), from, to, duration_ticks: n }).unwrap();
        for _ in 0..n {
            let a = editor::alpha_of(e.program(), s).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            e.tick().unwrap();
        }
        prop_assert_eq!(editor::alpha_of(e.program(), s).unwrap().to_bits(), to.to_bits());
        prop_assert!(e.program().active_ramps().is_empty());
    }

    #[test]
    fn layout_is_total_and_continuous(seed in any::<u64>()) {
        let r = random_program(seed, &RandomShape { max_vertices: 12, ..RandomShape::default() });
        let mut p = r.program;
        let cfg = LayoutConfig::default();
        let mut layout = LayoutState::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..30 {
            let next = layout_incremental(&p, r.main, &layout, &cfg).unwrap();
            for v in p.flatten(r.main).unwrap() {
                let now = next.get(v);
                prop_assert!(now.is_some());
                if let (Some(a), Some(b)) = (layout.get(v), now) {
                    let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                    prop_assert!(d <= cfg.step_bound + 1e-12, "moved {}", d);
                }
            }
            layout = next;
            if let Some(cmd) = random_edit(&p, &mut rng) {
                let mut q = p.clone();
                if editor::apply_edit(&mut q, &cmd).is_ok() {
                    p = q;
                }
            }
        }
    }

    #[test]
    fn benign_edits_leave_existing_buffers_alone(seed in any::<u64>()) {
        let r = random_program(seed, &RandomShape { max_vertices: 10, ..RandomShape::default() });
        let mut p = r.program;
        p.set_main_graph(r.template, true).unwrap();
        let mut e = Engine::new(p);
        e.run(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10 {
            let Some(cmd) = random_edit(e.program(), &mut rng) else { continue };
            if matches!(cmd, EditCommand::RewireSource { .. }) {
                continue;
            }
            let before = e.program().clone();
            let Ok(outcome) = e.apply_edit_now(&cmd) else { continue };
            for v in before.vertex_ids() {
                if outcome.retired.contains(&v) {
                    continue;
                }
                let (old, new) = (&before.vertex(v).unwrap().data, &e.program().vertex(v).unwrap().data);
                // s_insert rewrites its target's data; every other vertex keeps its stream state
                let rewritten = matches!(cmd, EditCommand::SInsert { .. }) && outcome.undo.as_ref().is_some_and(|u| {
                    matches!(&u.inverse, EditCommand::SRemove { target_vertex } if *target_vertex == v.into())
                });
                if !rewritten {
                    prop_assert_eq!(old.current_frame(), new.current_frame(), "{} after {:?}", v, cmd);
                    prop_assert_eq!(old.previous_frame(), new.previous_frame());
                }
            }
        }
    }
}

#[test]
fn three_cycle_runs_and_has_period_six() {
    let mut p = DataflowProgram::new(0);
    let g = p.add_top_level_graph(true).unwrap();
    let a = p.add_vertex(g, VertexData::dynamic(TransformKind::Negation, 2, 2), vec![]).unwrap();
    let b = p.add_vertex(g, VertexData::dynamic(TransformKind::Negation, 2, 2), vec![a]).unwrap();
    let c = p.add_vertex(g, VertexData::dynamic(TransformKind::Negation, 2, 2), vec![b]).unwrap();
    let va = p.vertex_mut(a).unwrap();
    va.sources = vec![c];
    if let VertexData::DynamicImage { source_buffer, .. } = &mut va.data {
        *source_buffer = ImageFrame::filled(2, 2, 0.5);
    }
    let mut e = Engine::new(p);
    e.register_output(a).unwrap();
    let seen: Vec<f64> = (0..12)
        .map(|_| e.tick().unwrap().emissions[0].1.frame().unwrap().get(0, 0))
        .collect();
    // the initial value travels round the loop, negated at every hop
    assert_eq!(seen, vec![0.5, 0.0, 0.0, -0.5, 0.0, 0.0, 0.5, 0.0, 0.0, -0.5, 0.0, 0.0]);
}

#[test]
fn clock_advances_by_one_and_queue_is_stable() {
    let mut p = DataflowProgram::new(0);
    let g = p.add_top_level_graph(true).unwrap();
    let k = p.add_vertex(g, VertexData::constant(ImageFrame::zeros(2, 2)), vec![]).unwrap();
    let s = p
        .add_vertex(g, VertexData::dynamic(TransformKind::SumOf2 { alpha: 0.0 }, 2, 2), vec![k, k])
        .unwrap();
    let mut e = Engine::new(p);
    // same tick: applied in insertion order, so the last write wins
    e.schedule_edit(2, EditCommand::SetAlpha { vertex: s.into(), value: 0.7 });
    e.schedule_edit(1, EditCommand::SetAlpha { vertex: s.into(), value: 0.1 });
    e.schedule_edit(2, EditCommand::SetAlpha { vertex: s.into(), value: 0.3 });
    for t in 0..4 {
        assert_eq!(e.clock(), t);
        let r = e.tick().unwrap();
        let applied: Vec<_> = r.applied.iter().map(|a| a.command.clone()).collect();
        match t {
            1 => assert_eq!(applied.len(), 1),
            2 => assert_eq!(
                applied,
                vec![
                    EditCommand::SetAlpha { vertex: s.into(), value: 0.7 },
                    EditCommand::SetAlpha { vertex: s.into(), value: 0.3 },
                ]
            ),
            _ => assert!(applied.is_empty()),
        }
    }
    assert_eq!(editor::alpha_of(e.program(), s).unwrap(), 0.3);
}
