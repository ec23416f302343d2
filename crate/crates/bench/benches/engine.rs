//! Hot paths: action selection, filtering and conditional mutual information.

use std::hint::black_box;

use aif_core::blanket::BinaryDag;
use aif_core::number_entry::{build_model, plan_config};
use aif_core::planning::GREEDY_PRECISION;
use aif_core::prob::{seeded_rng, stream_rng};
use aif_core::synth::random_model;
use aif_core::{empirical_cmi, filter, select_action, Belief, NumberEntryConfig, PlanConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn bench_select_action(c: &mut Criterion) {
    let mut group = c.benchmark_group("select_action");
    let cfg = NumberEntryConfig::default();
    let m = build_model(&cfg).unwrap();
    let q = Belief::new(m.d.clone());
    for horizon in [1, 2] {
        let plan = plan_config(horizon, GREEDY_PRECISION);
        group.bench_with_input(BenchmarkId::new("number_entry_N16", horizon), &plan, |b, plan| {
            b.iter(|| select_action(black_box(&q), &m, plan, &mut seeded_rng(0)).unwrap())
        });
    }
    let m = random_model(7, 8, 4, 6);
    let q = Belief::new(m.d.clone());
    for horizon in [1, 3] {
        let plan = PlanConfig {
            precision: 4.0,
            ..PlanConfig::greedy(horizon)
        };
        group.bench_with_input(BenchmarkId::new("random_8x4x6", horizon), &plan, |b, plan| {
            b.iter(|| select_action(black_box(&q), &m, plan, &mut seeded_rng(0)).unwrap())
        });
    }
    group.finish();
}

fn bench_filter(c: &mut Criterion) {
    let m = random_model(3, 16, 4, 8);
    let actions: Vec<usize> = (0..100).map(|t| t % 4).collect();
    let obs: Vec<usize> = (0..101).map(|t| (t * 5) % 8).collect();
    c.bench_function("filter_16_states_100_steps", |b| {
        b.iter(|| filter(black_box(&m.d), &actions, &obs, &m).unwrap())
    });
}

fn bench_cmi(c: &mut Criterion) {
    let table = BinaryDag::collider_example().sample(100_000, &mut stream_rng(0, 0));
    c.bench_function("cmi_B_C_given_A_D_1e5_rows", |b| {
        b.iter(|| empirical_cmi(black_box(&table), "B", "C", &["A", "D"]).unwrap())
    });
}

criterion_group!(benches, bench_select_action, bench_filter, bench_cmi);
criterion_main!(benches);
