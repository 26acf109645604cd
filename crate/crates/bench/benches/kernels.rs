use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use streamgraft_core::fixtures::test_pattern;
use streamgraft_core::kernels::{convex_combine, negate, wave_warp};
use streamgraft_core::WaveParams;

fn kernels(c: &mut Criterion) {
    let mut g = c.benchmark_group("kernels");
    for side in [64usize, 256] {
        let a = test_pattern(side, side);
        let b = negate(&a);
        let params = WaveParams::default();
        let center = [side as f64 / 2.0, side as f64 / 2.0];
        g.bench_with_input(BenchmarkId::new("negate", side), &a, |bch, a| bch.iter(|| negate(black_box(a))));
        g.bench_with_input(BenchmarkId::new("convex_combine", side), &a, |bch, a| {
            bch.iter(|| convex_combine(black_box(a), black_box(&b), 0.3).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("wave_warp", side), &a, |bch, a| {
            bch.iter(|| wave_warp(black_box(a), center, 17, &params))
        });
    }
    g.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
