use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use mexec_core::derive_coefficients;
use mexec_core::montecarlo::{mc_cost, SimConfig, StrategyRule};
use mexec_core::optimal::{build_pipeline, SolutionMode};
use mexec_core::presets;

fn feedback_cost(c: &mut Criterion) {
    let steps = 100;
    let spec = presets::stochastic_impact().with_grid(steps);
    let coeffs = derive_coefficients(&spec).unwrap();
    let pipeline = build_pipeline(&coeffs, SolutionMode::for_coefficients(&coeffs)).unwrap();
    let rule = StrategyRule::Feedback(&pipeline.rule);
    let config = SimConfig::new(2_000, 7, steps);

    let mut group = c.benchmark_group("mc_cost");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        let cfg = config.with_workers(1);
        b.iter(|| black_box(mc_cost(&spec, &coeffs, rule, &cfg).unwrap()))
    });
    group.bench_function("parallel", |b| b.iter(|| black_box(mc_cost(&spec, &coeffs, rule, &config).unwrap())));
    group.finish();
}

criterion_group!(benches, feedback_cost);
criterion_main!(benches);
