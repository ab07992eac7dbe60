use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use binnn_bench::fixture;
use binnn_core::dynamics::{step_binnn_c, step_binnn_d, step_hnn};
use binnn_core::{brute_force, greedy, init_state, CentralizedEnergy, DistributedEnergy, Thermo};

fn flow_steps(c: &mut Criterion) {
    let thermo = Thermo::new(1.0, 0.1, 0.1).unwrap();
    let mut group = c.benchmark_group("step");
    for n in [10, 50, 200] {
        let (inst, graph) = fixture(n);
        let central = CentralizedEnergy::new(&inst);
        let dist = DistributedEnergy::new(&inst);
        let xs = init_state(n, 0.05, 1, false);
        let xy = init_state(n, 0.05, 1, true);
        group.bench_with_input(BenchmarkId::new("binnn-c", n), &n, |b, _| {
            b.iter(|| step_binnn_c(black_box(&xs), &central, &thermo, 1e-3).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("hnn", n), &n, |b, _| {
            b.iter(|| step_hnn(black_box(&xs), &central, &thermo, 1e-3).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("binnn-d", n), &n, |b, _| {
            b.iter(|| step_binnn_d(black_box(&xy), &inst, &graph, &dist, &thermo, 1.0, 1e-3).unwrap())
        });
    }
    group.finish();
}

fn baselines(c: &mut Criterion) {
    let mut group = c.benchmark_group("baseline");
    for n in [50, 400] {
        let (inst, _) = fixture(n);
        group.bench_with_input(BenchmarkId::new("greedy", n), &n, |b, _| b.iter(|| greedy(black_box(&inst))));
    }
    for n in [12, 16] {
        let (inst, _) = fixture(n);
        group.bench_with_input(BenchmarkId::new("brute", n), &n, |b, _| {
            b.iter(|| brute_force(black_box(&inst), 24).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, flow_steps, baselines);
criterion_main!(benches);
