//! Compares the batch runners: `run_scenarios` (data-parallel when the
//! `parallel` feature is on) against the always-sequential
//! `run_scenarios_seq`, plus the scalar minimizer search that `run`
//! performs per scenario.  On a single-core host the parallel lane mostly
//! measures scheduling overhead; the comparison is the point.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use optcon::costs::{global_minimizer, CostFn};
use optcon::presets::example1;
use optcon::sim::{run_scenarios, run_scenarios_seq, Scenario};

/// A short but non-trivial workload: several truncated copies of the
/// double-integrator team, long enough to dominate thread-pool overhead.
fn batch(copies: usize) -> Vec<Scenario> {
    let mut base = example1();
    base.t_end = 0.5;
    base.events.clear();
    (0..copies)
        .map(|i| {
            let mut s = base.clone();
            // Stagger the starts so the copies are not bit-identical work.
            for x in &mut s.init.x {
                x[0] += 0.1 * i as f64;
            }
            s
        })
        .collect()
}

fn bench_batch_runners(c: &mut Criterion) {
    let scenarios = batch(4);
    let mut group = c.benchmark_group("batch_runs");
    group.sample_size(10);
    group.bench_function("fan_out", |b| {
        b.iter(|| {
            let traces = run_scenarios(black_box(&scenarios));
            assert!(traces.iter().all(Result::is_ok));
            traces
        })
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            let traces = run_scenarios_seq(black_box(&scenarios));
            assert!(traces.iter().all(Result::is_ok));
            traces
        })
    });
    group.finish();
}

fn bench_minimizer(c: &mut Criterion) {
    let teams: Vec<Vec<CostFn>> = (0..16)
        .map(|i| {
            vec![
                CostFn::Quadratic {
                    c: 1.0 + i as f64,
                    center: -3.0,
                },
                CostFn::SqrtRatio,
                CostFn::LogRatio,
                CostFn::SoftPlusPair,
            ]
        })
        .collect();
    c.bench_function("team_minimizer", |b| {
        b.iter(|| {
            for costs in &teams {
                black_box(global_minimizer(black_box(costs)).unwrap());
            }
        })
    });
}

criterion_group!(benches, bench_batch_runners, bench_minimizer);
criterion_main!(benches);
