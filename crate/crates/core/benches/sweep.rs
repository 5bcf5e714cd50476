use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use vortex_core::analysis::{gamma_sweep, SweepOptions};
use vortex_core::par::Execution;
use vortex_core::scenario::{ScenarioKind, ScenarioParams};

fn sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("gamma_sweep");
    group.sample_size(10);
    for kind in [ScenarioKind::TriangleWithCenter, ScenarioKind::SquareWithCenter] {
        for execution in [Execution::Sequential, Execution::Parallel] {
            let opts = SweepOptions { execution, ..SweepOptions::default() };
            group.bench_with_input(BenchmarkId::new(format!("{execution:?}"), kind), &opts, |b, opts| {
                b.iter(|| gamma_sweep(kind, &ScenarioParams::default(), -1.0, 3.0, 0.05, opts).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, sweeps);
criterion_main!(benches);
