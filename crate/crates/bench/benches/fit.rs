use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use jtt_core::estimate::{cluster_ols, optimize_lambda};
use jtt_core::{
    alpha_hat, complete_graph, fit_jtt, generate_dataset, select_edges, AlphaMode, ClusterDesign, SimulationConfig,
    Variant,
};

fn config(m: usize, n0: usize) -> SimulationConfig {
    SimulationConfig {
        m,
        p: 20,
        n0,
        ratio: 0.3,
        iterations: 1,
        seed: 1,
        ..SimulationConfig::default()
    }
}

fn bench_selection(c: &mut Criterion) {
    let mut group = c.benchmark_group("select_edges");
    for (m, n0) in [(20, 200), (50, 200)] {
        let (data, _) = generate_dataset(&config(m, n0), 1).unwrap();
        let graph = complete_graph(m).unwrap();
        let dims = data.dims();
        let params = alpha_hat(dims.resid_df, dims.p, dims.m, dims.n0).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(format!("m{m}_n0{n0}")), &data, |b, d| {
            b.iter(|| select_edges(black_box(d), &graph, &params).unwrap())
        });
    }
    group.finish();
}

fn bench_fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_jtt");
    let (data, _) = generate_dataset(&config(20, 200), 1).unwrap();
    let graph = complete_graph(20).unwrap();
    for (name, variant) in [("jtt1", Variant::Jtt1), ("both", Variant::Both)] {
        group.bench_function(name, |b| {
            b.iter(|| fit_jtt(black_box(&data), &graph, AlphaMode::Hat, variant).unwrap())
        });
    }
    group.finish();
}

fn bench_lambda(c: &mut Criterion) {
    let (data, _) = generate_dataset(&config(20, 200), 1).unwrap();
    let cd = ClusterDesign::new(1, &data, &[1, 2, 3, 4]).unwrap();
    let other = ClusterDesign::new(2, &data, &[5, 6, 7, 8]).unwrap();
    let anchor = cluster_ols(&other);
    c.bench_function("optimize_lambda", |b| {
        b.iter(|| optimize_lambda(black_box(&cd), &anchor))
    });
}

criterion_group!(benches, bench_selection, bench_fit, bench_lambda);
criterion_main!(benches);
