//! Acceptance suite. Criteria run one after another inside a single test so
//! that their runtime limits are measured without contention; each prints a
//! PASS/FAIL line. `METAPOP_ACCEPTANCE=1,4` runs a subset.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use metapop_core::clustering::{build_graph, cluster_pois, embedding_objective, fit_embedding, ClusteringConfig, EmbeddingConfig};
use metapop_core::data::{generate_scenario, ScenarioConfig};
use metapop_core::ekf::{run_filter, GaussianBelief, LinearGaussianModel, ObservationSeries};
use metapop_core::estimator::{
    evaluate, forecast_after_fit, multi_restart_fit, objective, persistence_rmse, EpiData, FitConfig, ParamVector,
};
use metapop_core::mobility::{
    benchmark_modes, build_contact_series, expected_contacts, posterior_visits, ClusterPriors, NetworkMode,
    OriginPosterior, PoiPosterior, PoiRecord, PoiWeek, PriorConfig, SamplingRates, VisitPosterior,
};
use metapop_core::model::Compartment;
use metapop_core::Membership;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Dirichlet, Distribution, Poisson, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn report(id: u32, name: &str, out: &Outcome, elapsed: Duration, limit: Duration) -> bool {
    let in_time = elapsed <= limit;
    let pass = out.pass && in_time;
    let mut line = format!(
        "criterion {id} [{name}]: {} | {} | {:.1}s of {}s",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    if !in_time {
        line += " (over time)";
    }
    // Written straight to stdout so the line shows even when output is captured.
    let _ = writeln!(std::io::stdout(), "{line}");
    pass
}

fn guarded<T>(f: impl FnOnce() -> T) -> Result<T, String> {
    catch_unwind(AssertUnwindSafe(f)).map_err(|e| {
        e.downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())
    })
}

fn single(id: u32, name: &str, limit_secs: u64, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let out = guarded(f).unwrap_or_else(|e| Outcome::new(false, format!("panic: {e}")));
    report(id, name, &out, t0.elapsed(), Duration::from_secs(limit_secs))
}

fn selected() -> Option<Vec<u32>> {
    std::env::var("METAPOP_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect())
}

#[test]
fn acceptance() {
    let only = selected();
    let want = |id: u32| only.as_ref().is_none_or(|s| s.contains(&id));
    let mut failed = Vec::new();
    let mut check = |id: u32, pass: bool| {
        if !pass {
            failed.push(id);
        }
    };

    if want(1) {
        check(1, single(1, "Kalman equivalence", 10, kalman_equivalence));
    }
    if want(2) {
        check(2, single(2, "score exactness", 60, score_exactness));
    }
    if want(3) || want(7) {
        let t0 = Instant::now();
        let (c3, c7) = guarded(recovery_and_forecast).unwrap_or_else(|e| {
            (Outcome::new(false, format!("panic: {e}")), Outcome::new(false, format!("panic: {e}")))
        });
        let elapsed = t0.elapsed();
        let limit = Duration::from_secs(600);
        if want(3) {
            check(3, report(3, "parameter recovery", &c3, elapsed, limit));
        }
        if want(7) {
            check(7, report(7, "forecast beats persistence", &c7, elapsed, limit));
        }
    }
    if want(4) {
        check(4, single(4, "conjugacy oracle", 10, conjugacy));
    }
    if want(5) {
        check(5, single(5, "contact expectation", 30, contact_expectation));
    }
    if want(6) {
        check(6, single(6, "embedding monotonicity", 60, embedding_monotonicity));
    }
    if want(8) {
        check(8, single(8, "benchmark-mode ordering", 900, mode_ordering));
    }
    if want(9) {
        check(9, single(9, "end-to-end determinism", 300, determinism));
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

// ---------------------------------------------------------------- 1

fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn spd(rng: &mut ChaCha8Rng, d: usize, ridge: f64) -> DMatrix<f64> {
    let b = normal_matrix(rng, d, d, 1.0 / (d as f64).sqrt());
    &b * b.transpose() + DMatrix::identity(d, d) * ridge
}

/// Textbook Kalman filter: the first observation updates the prior without
/// being scored, every later one is scored from the one-step prediction.
fn reference_kalman(
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
    h: &DMatrix<f64>,
    m0: &DVector<f64>,
    p0: &DMatrix<f64>,
    ys: &[DVector<f64>],
    rs: &[DMatrix<f64>],
) -> f64 {
    let d = m0.len();
    let (mut m, mut p) = (m0.clone(), p0.clone());
    let mut ll = 0.0;
    for (t, (y, r)) in ys.iter().zip(rs).enumerate() {
        if t > 0 {
            m = a * &m;
            p = a * &p * a.transpose() + q;
        }
        let s = h * &p * h.transpose() + r;
        let lu = s.clone().lu();
        let s_inv = lu.try_inverse().expect("innovation covariance is invertible");
        let e = y - h * &m;
        if t > 0 {
            let det = s.determinant();
            let k = y.len() as f64;
            ll -= 0.5 * (k * (2.0 * std::f64::consts::PI).ln() + det.ln() + (e.transpose() * &s_inv * &e)[(0, 0)]);
        }
        let gain = &p * h.transpose() * &s_inv;
        m += &gain * e;
        p = (DMatrix::identity(d, d) - &gain * h) * &p;
        p = (&p + p.transpose()) * 0.5;
    }
    ll
}

fn kalman_equivalence() -> Outcome {
    let (d, k, steps) = (8, 3, 50);
    let mut worst: f64 = 0.0;
    for sys in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + sys);
        let a = normal_matrix(&mut rng, d, d, 0.9 / (d as f64).sqrt());
        let q = spd(&mut rng, d, 0.1);
        let h = normal_matrix(&mut rng, k, d, 1.0);
        let m0 = normal_matrix(&mut rng, d, 1, 1.0).column(0).into_owned();
        let p0 = spd(&mut rng, d, 0.5);
        let mut x = m0.clone();
        let (mut ys, mut rs) = (Vec::new(), Vec::new());
        for _ in 0..steps {
            let r = spd(&mut rng, k, 0.2);
            let y = &h * &x + normal_matrix(&mut rng, k, 1, 0.7).column(0);
            ys.push(y);
            rs.push(r);
            x = &a * &x + normal_matrix(&mut rng, d, 1, 0.3).column(0);
        }
        let model = LinearGaussianModel::new(a.clone(), q.clone(), h.clone()).unwrap();
        let obs = ObservationSeries::new(ys.clone(), rs.clone()).unwrap();
        let got = run_filter(&model, &GaussianBelief::new(m0.clone(), p0.clone()).unwrap(), &obs)
            .unwrap()
            .loglik;
        let want = reference_kalman(&a, &q, &h, &m0, &p0, &ys, &rs);
        worst = worst.max((got - want).abs() / want.abs());
    }
    Outcome::new(worst <= 1e-10, format!("max relative difference {worst:.2e} over 20 systems (rtol 1e-10)"))
}

// ---------------------------------------------------------------- 2

fn score_exactness() -> Outcome {
    let sc = generate_scenario(&ScenarioConfig {
        n_tracts: 5,
        n_pois: 200,
        horizon: 30,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let pops = sc.populations();
    let obs = sc.reports.observations(1, 0).unwrap();
    let data = EpiData::new(pops.clone(), sc.true_contacts.clone(), obs).unwrap();
    let cfg = FitConfig::default();
    let series = data.series(&cfg.noise).unwrap();
    let n = pops.len();
    // Off the truth so that no gradient component vanishes by symmetry.
    let p = &sc.config.params;
    let params = metapop_core::model::EpidemicParams::new(p.beta * 1.1, p.kappa * 0.9, p.delta * 1.05, p.rho * 1.2).unwrap();
    let e: Vec<f64> = (0..n).map(|i| sc.initial.get(Compartment::E, i) * 0.8 + 1.0).collect();
    let inf: Vec<f64> = (0..n).map(|i| sc.initial.get(Compartment::I, i) * 1.2 + 1.0).collect();
    let u = ParamVector::encode(&params, &e, &inf, &pops, cfg.ranges.initial_cap).unwrap();
    let (_, grad) = objective(&data, &cfg, &u, &series).unwrap();
    let value = |v: &[f64]| {
        objective(&data, &cfg, &ParamVector::from_values(v.to_vec()).unwrap(), &series)
            .unwrap()
            .0
    };
    let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let atol = 1e-7 * scale;
    let mut worst_abs: f64 = 0.0;
    let mut worst_rel: f64 = 0.0;
    let mut bad = Vec::new();
    for k in 0..grad.len() {
        let h = 1e-5 * u.values[k].abs().max(1.0);
        let mut plus = u.values.clone();
        let mut minus = u.values.clone();
        plus[k] += h;
        minus[k] -= h;
        let fd = (value(&plus) - value(&minus)) / (2.0 * h);
        let err = (grad[k] - fd).abs();
        let size = grad[k].abs().max(fd.abs());
        if err > 1e-4 * size + atol {
            bad.push(k);
        }
        worst_abs = worst_abs.max(err);
        if size > 1e-3 * scale {
            worst_rel = worst_rel.max(err / size);
        }
    }
    Outcome::new(
        bad.is_empty(),
        format!(
            "{} coordinates, max |adjoint - fd| {worst_abs:.1e} (atol {atol:.1e}), max relative error {worst_rel:.1e} (rtol 1e-4), failing {bad:?}",
            grad.len()
        ),
    )
}

// ---------------------------------------------------------------- 3 and 7

fn recovery_and_forecast() -> (Outcome, Outcome) {
    let sc = generate_scenario(&ScenarioConfig::default()).unwrap();
    let pops = sc.populations();
    let obs = sc.reports.observations(1, 0).unwrap();
    let data = EpiData::new(pops.clone(), sc.true_contacts.clone(), obs.clone()).unwrap();
    let cfg = FitConfig {
        n_restarts: 20,
        adam: metapop_core::estimator::AdamConfig {
            max_iters: 600,
            ..Default::default()
        },
        ..Default::default()
    };
    let fit = multi_restart_fit(&data.truncated(90).unwrap(), &cfg, 3).unwrap();

    let truth = sc.config.params.to_array();
    let got = fit.params.to_array();
    let names = ["beta", "kappa", "delta", "rho"];
    let mut ok = true;
    let mut parts = Vec::new();
    for k in 0..4 {
        let rel = (got[k] - truth[k]) / truth[k];
        ok &= rel.abs() <= 0.2;
        parts.push(format!("{} {:.4} ({:+.1}%)", names[k], got[k], 100.0 * rel));
    }
    let n = pops.len();
    let true_ei: f64 = (0..n)
        .map(|i| sc.initial.get(Compartment::E, i) + sc.initial.get(Compartment::I, i))
        .sum();
    let fit_ei: f64 = fit.initial_exposed.iter().chain(&fit.initial_infected).sum();
    let rel_ei = (fit_ei - true_ei) / true_ei;
    ok &= rel_ei.abs() <= 0.3;
    parts.push(format!("sum(E+I) {fit_ei:.0} vs {true_ei:.0} ({:+.1}%)", 100.0 * rel_ei));
    let c3 = Outcome::new(ok, parts.join(", "));

    let c7 = (|| {
        let fc = forecast_after_fit(&data, &cfg, &fit.best, 90, 30).ok()?;
        let held = &obs[90..120];
        let ev = evaluate(&fc, held).ok()?;
        let base = persistence_rmse(&obs[89], held);
        Some(Outcome::new(
            ev.rmse[0] < base[0],
            format!("cases RMSE {:.1} vs persistence {:.1} over days 90..120", ev.rmse[0], base[0]),
        ))
    })()
    .unwrap_or_else(|| Outcome::new(false, "forecast failed"));
    (c3, c7)
}

// ---------------------------------------------------------------- 4

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// p(z | x) over z = 0..=z_max by direct enumeration of
/// Poisson(z; nu_a) * Binomial(x; z, theta).
fn enumerate_posterior(x: u64, theta: f64, nu_a: f64, z_max: u64) -> Vec<f64> {
    let log_w: Vec<f64> = (0..=z_max)
        .map(|z| {
            if z < x {
                return f64::NEG_INFINITY;
            }
            let prior = z as f64 * nu_a.ln() - nu_a - ln_factorial(z);
            let like = ln_factorial(z) - ln_factorial(x) - ln_factorial(z - x)
                + x as f64 * theta.ln()
                + (z - x) as f64 * (1.0 - theta).ln();
            prior + like
        })
        .collect();
    let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

fn single_poi(visits: Vec<u64>, origin: Option<(usize, f64)>, area: f64) -> PoiRecord {
    PoiRecord {
        poi_id: "p".into(),
        area,
        dwell: 1.0,
        lat: 0.0,
        lon: 0.0,
        home_tract: 0,
        weeks: vec![PoiWeek {
            visits,
            origins: origin.into_iter().collect(),
        }],
    }
}

fn conjugacy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut worst_tv: f64 = 0.0;
    for _ in 0..100 {
        let x: u64 = rng.random_range(0..=40);
        let theta: f64 = rng.random_range(0.05..0.95);
        let nu_a: f64 = rng.random_range(0.5..20.0);
        let area: f64 = rng.random_range(10.0..500.0);
        let pois = vec![single_poi(vec![x, 0], (x > 0).then_some((0, x as f64)), area)];
        let priors = ClusterPriors {
            zeta: vec![vec![1.0, 1.0]],
            nu: vec![vec![nu_a / area]],
        };
        let rates = SamplingRates::new(vec![theta]).unwrap();
        let post = posterior_visits(&pois, 0, &Membership::singletons(1), &priors, &rates).unwrap();
        let origin = post.pois[0].origins.first().copied().unwrap_or(OriginPosterior {
            tract: 0,
            observed: 0.0,
            residual: 0.0,
        });
        let z_max = 200;
        let oracle = enumerate_posterior(x, theta, nu_a, z_max);
        let mut covered = 0.0;
        let mut tv = 0.0;
        for (z, q) in oracle.iter().enumerate() {
            let p = origin.pmf(z as u64);
            covered += p;
            tv += (p - q).abs();
        }
        tv = 0.5 * (tv + (1.0 - covered).max(0.0));
        worst_tv = worst_tv.max(tv);
    }

    let mut dirichlet_exact = true;
    for _ in 0..100 {
        let bins = rng.random_range(2..12);
        let zeta: Vec<f64> = (0..bins).map(|_| rng.random_range(0.01..5.0)).collect();
        let v: Vec<u64> = (0..bins).map(|_| rng.random_range(0..30)).collect();
        let pois = vec![single_poi(v.clone(), None, 100.0)];
        let priors = ClusterPriors {
            zeta: vec![zeta.clone()],
            nu: vec![vec![0.0]],
        };
        let rates = SamplingRates::new(vec![0.5]).unwrap();
        let post = posterior_visits(&pois, 0, &Membership::singletons(1), &priors, &rates).unwrap();
        let alpha = &post.pois[0].alpha;
        dirichlet_exact &= alpha.len() == bins && (0..bins).all(|t| alpha[t] == zeta[t] + v[t] as f64);
    }
    Outcome::new(
        worst_tv <= 1e-6 && dirichlet_exact,
        format!(
            "max total variation {worst_tv:.2e} over 100 triples (limit 1e-6); Dirichlet update exact on 100 pairs: {dirichlet_exact}"
        ),
    )
}

// ---------------------------------------------------------------- 5

fn sample_multinomial(n: u64, p: &[f64], rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut left = n;
    let mut mass = 1.0;
    let mut out = vec![0; p.len()];
    for (k, pk) in p.iter().enumerate() {
        if left == 0 {
            break;
        }
        if k + 1 == p.len() {
            out[k] = left;
            break;
        }
        let q = (pk / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(left, q).unwrap().sample(rng);
        out[k] = draw;
        left -= draw;
        mass -= pk;
    }
    out
}

fn contact_expectation() -> Outcome {
    let (dwell, area) = (1.5, 40.0);
    let mut poi = single_poi(vec![0, 0, 0], None, area);
    poi.dwell = dwell;
    let posterior = VisitPosterior {
        pois: vec![PoiPosterior {
            alpha: vec![2.5, 1.0, 4.0],
            origins: vec![
                OriginPosterior {
                    tract: 0,
                    observed: 6.0,
                    residual: 3.5,
                },
                OriginPosterior {
                    tract: 1,
                    observed: 2.0,
                    residual: 5.0,
                },
            ],
        }],
    };
    let m = expected_contacts(&posterior, std::slice::from_ref(&poi), 2, 3).unwrap();
    let exact = m.day(0).unwrap().clone();

    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let dir = Dirichlet::new([2.5, 1.0, 4.0]).unwrap();
    let origins = &posterior.pois[0].origins;
    let samples = 100_000;
    let mut acc = DMatrix::<f64>::zeros(2, 2);
    for _ in 0..samples {
        let mu: [f64; 3] = dir.sample(&mut rng);
        let y: Vec<Vec<u64>> = origins
            .iter()
            .map(|o| {
                let z = o.observed as u64 + Poisson::new(o.residual).unwrap().sample(&mut rng) as u64;
                sample_multinomial(z, &mu, &mut rng)
            })
            .collect();
        for t in 0..3 {
            for i in 0..2 {
                for j in 0..2 {
                    let (a, b) = (y[i][t] as f64, y[j][t] as f64);
                    acc[(i, j)] += if i == j { a * (a - 1.0) } else { a * b };
                }
            }
        }
    }
    let mc = acc * (dwell * dwell / area / samples as f64);
    let worst = (0..4)
        .map(|k| ((exact[k] - mc[k]) / mc[k]).abs())
        .fold(0.0f64, f64::max);
    Outcome::new(
        worst <= 0.02,
        format!("max relative gap {:.2}% between exact and 1e5-sample Monte Carlo (limit 2%)", 100.0 * worst),
    )
}

// ---------------------------------------------------------------- 6

fn embedding_monotonicity() -> Outcome {
    let (n, t, d) = (200, 60, 8);
    let mut worst_rise: f64 = 0.0;
    let mut alternations = 0;
    for inst in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + inst);
        let base = DMatrix::from_fn(n, 3, |_, _| rng.random_range(0.0..1.0))
            * DMatrix::from_fn(3, t, |_, _| rng.random_range(0.0..1.0));
        let x = base.map(|v| v + rng.random_range(0.0..0.3));
        let locs: Vec<(f64, f64)> = (0..n)
            .map(|_| (39.95 + rng.random_range(-0.02..0.02), -75.16 + rng.random_range(-0.02..0.02)))
            .collect();
        let graph = build_graph(&locs, 1000.0).unwrap();
        let cfg = EmbeddingConfig {
            dim: d,
            lambda: 1.0,
            iters: 100,
        };
        let emb = fit_embedding(&x, &graph, &cfg).unwrap();
        // Recompute the final objective independently of the fitter's record.
        let last = embedding_objective(&x, &graph, cfg.lambda, &emb.c, &emb.w);
        assert!((last - emb.objective.last().unwrap()).abs() <= 1e-9 * last);
        for w in emb.objective.windows(2) {
            worst_rise = worst_rise.max((w[1] - w[0]) / w[0]);
        }
        alternations += emb.objective.len() - 1;
    }

    let a = DMatrix::from_fn(n, 1, |i, _| 1.0 + (i % 17) as f64 * 0.1);
    let b = DMatrix::from_fn(1, t, |_, j| 0.5 + (j as f64 * 0.3).sin().abs());
    let x = &a * &b;
    let mut rng = ChaCha8Rng::seed_from_u64(699);
    let locs: Vec<(f64, f64)> = (0..n)
        .map(|_| (39.95 + rng.random_range(-0.02..0.02), -75.16 + rng.random_range(-0.02..0.02)))
        .collect();
    let graph = build_graph(&locs, 1000.0).unwrap();
    let emb = fit_embedding(&x, &graph, &EmbeddingConfig { dim: 1, lambda: 0.0, iters: 100 }).unwrap();
    let rank_one = *emb.objective.last().unwrap();

    Outcome::new(
        worst_rise <= 0.0 && rank_one <= 1e-8,
        format!(
            "{alternations} alternations on 10 instances, largest relative rise {worst_rise:.1e}; rank-1 objective {rank_one:.1e} (limit 1e-8)"
        ),
    )
}

// ---------------------------------------------------------------- 8

fn mode_ordering() -> Outcome {
    let seed = 1;
    let sc = generate_scenario(&ScenarioConfig {
        seed,
        ..Default::default()
    })
    .unwrap();
    let pops = sc.populations();
    let obs = sc.reports.observations(1, 0).unwrap();
    let clustering = cluster_pois(
        &sc.pois,
        &ClusteringConfig {
            k: Some(10),
            ..Default::default()
        },
        seed,
    )
    .unwrap();
    let cfg = FitConfig {
        n_restarts: 8,
        adam: metapop_core::estimator::AdamConfig {
            max_iters: 600,
            ..Default::default()
        },
        ..Default::default()
    };
    let mobility = sc.mobility();
    let mut oos = Vec::new();
    for mode in NetworkMode::ALL {
        let membership = benchmark_modes(mode, &sc.pois, Some(&clustering.membership)).unwrap();
        let contacts = build_contact_series(&mobility, &pops, &membership, &PriorConfig::default()).unwrap();
        let data = EpiData::new(pops.clone(), contacts, obs.clone()).unwrap();
        let fit = multi_restart_fit(&data.truncated(90).unwrap(), &cfg, seed).unwrap();
        let fc = forecast_after_fit(&data, &cfg, &fit.best, 90, 30).unwrap();
        oos.push((mode, evaluate(&fc, &obs[90..120]).unwrap().loglik));
    }
    let ordered = oos[2].1 >= oos[1].1 && oos[1].1 >= oos[0].1;
    let detail = oos
        .iter()
        .map(|(m, l)| format!("{m} {l:.1}"))
        .collect::<Vec<_>>()
        .join(", ");
    Outcome::new(ordered, format!("out-of-sample log-likelihood {detail}; need pattern >= tract >= none"))
}

// ---------------------------------------------------------------- 9

const PIPELINE_CONFIG: &str = r#"
seed = 21

[pipeline]
fit_days = 40
horizon = 14
smoothing_window = 7

[scenario]
n_tracts = 10
n_pois = 300
horizon = 60

[clustering]
k = 6

[fit]
n_restarts = 3

[fit.adam]
max_iters = 150
"#;

fn run_pipeline(config: &Path, out: &Path) -> Result<(), String> {
    for stage in ["synth", "cluster", "networks", "calibrate", "forecast", "evaluate"] {
        let o = Command::new(env!("CARGO_BIN_EXE_metapop"))
            .args([stage, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .env("RUST_LOG", "warn")
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!("{stage} exited with {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)));
        }
    }
    Ok(())
}

/// Every file under `root` except run manifests, which record wall time.
fn artifacts(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            let rel = p.strip_prefix(root).unwrap().to_path_buf();
            if rel.starts_with("manifests") {
                continue;
            }
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(rel);
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("pipeline.toml");
    std::fs::write(&config, PIPELINE_CONFIG).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        if let Err(e) = run_pipeline(&config, out) {
            return Outcome::new(false, e);
        }
    }
    let files = artifacts(&a);
    if files != artifacts(&b) {
        return Outcome::new(false, "the two runs wrote different file sets");
    }
    let differing: Vec<String> = files
        .iter()
        .filter(|f| std::fs::read(a.join(f)).unwrap() != std::fs::read(b.join(f)).unwrap())
        .map(|f| f.display().to_string())
        .collect();
    Outcome::new(
        differing.is_empty() && files.len() > 10,
        format!("{} files compared, {} differ {:?}", files.len(), differing.len(), differing),
    )
}
