use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use metapop_core::clustering::{build_graph, fit_embedding, visit_matrix, EmbeddingConfig};
use metapop_core::data::{generate_scenario, ScenarioConfig, SyntheticScenario};
use metapop_core::estimator::{filter_at, objective, EpiData, FitConfig, ParamVector};
use metapop_core::mobility::{build_contact_series, PriorConfig};
use metapop_core::model::Compartment;
use metapop_core::Membership;

fn scenario(n_tracts: usize, n_pois: usize, horizon: usize) -> SyntheticScenario {
    generate_scenario(&ScenarioConfig {
        n_tracts,
        n_pois,
        horizon,
        seed: 1,
        ..Default::default()
    })
    .expect("scenario")
}

fn filter(c: &mut Criterion) {
    let sc = scenario(10, 300, 60);
    let cfg = FitConfig::default();
    let data = EpiData::new(sc.populations(), sc.true_contacts.clone(), sc.reports.observations(1, 0).unwrap()).unwrap();
    let obs = data.series(&cfg.noise).unwrap();
    let n = data.n_tracts();
    let e: Vec<f64> = (0..n).map(|i| sc.initial.get(Compartment::E, i) + 1.0).collect();
    let inf: Vec<f64> = (0..n).map(|i| sc.initial.get(Compartment::I, i) + 1.0).collect();
    let u = ParamVector::encode(&sc.params, &e, &inf, &data.populations, cfg.ranges.initial_cap).unwrap();

    let mut g = c.benchmark_group("filter_10_tracts_60_days");
    g.bench_function("loglik", |b| b.iter(|| filter_at(&data, &cfg, black_box(&u), &obs).unwrap().loglik));
    g.bench_function("loglik_and_gradient", |b| b.iter(|| objective(&data, &cfg, black_box(&u), &obs).unwrap()));
    g.finish();
}

fn contacts(c: &mut Criterion) {
    let sc = scenario(10, 1000, 14);
    let data = sc.mobility();
    let pops = sc.populations();
    let by_group = Membership::from_labels(&sc.groups);
    let mut g = c.benchmark_group("contacts_1000_pois_2_weeks");
    g.sample_size(20);
    g.bench_function("clustered", |b| {
        b.iter(|| build_contact_series(&data, &pops, &by_group, &PriorConfig::default()).unwrap())
    });
    g.finish();
}

fn embedding(c: &mut Criterion) {
    let sc = scenario(10, 500, 28);
    let x = visit_matrix(&sc.pois).unwrap();
    let locs: Vec<(f64, f64)> = sc.pois.iter().map(|p| (p.lat, p.lon)).collect();
    let graph = build_graph(&locs, 1000.0).unwrap();
    let cfg = EmbeddingConfig {
        dim: 8,
        lambda: 1.0,
        iters: 20,
    };
    let mut g = c.benchmark_group("embedding_500_pois");
    g.sample_size(10);
    g.bench_function("graph", |b| b.iter(|| build_graph(black_box(&locs), 1000.0).unwrap()));
    g.bench_function("fit_20_alternations", |b| b.iter(|| fit_embedding(&x, &graph, &cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, filter, contacts, embedding);
criterion_main!(benches);
