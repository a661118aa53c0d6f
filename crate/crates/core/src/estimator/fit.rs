use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{adam_fit, lhs_sample, EpiData, FitConfig, InitialCovConfig, ParamVector};
use crate::ekf::{run_filter, score, GaussianBelief, LikelihoodResult, ObservationSeries};
use crate::error::{Error, Result};
use crate::model::{Compartment, EpidemicParams, MetapopState, SeirdSystem};

/// Initial belief centered on `state` with the configured diagonal covariance.
pub fn initial_belief(state: &MetapopState, cfg: &InitialCovConfig) -> GaussianBelief {
    let n = state.n_tracts();
    let mut cov = DMatrix::zeros(5 * n, 5 * n);
    for (i, pop) in state.populations().iter().enumerate() {
        let s = Compartment::S.index(i, n);
        cov[(s, s)] = (cfg.s_frac * pop).powi(2);
        for c in [Compartment::E, Compartment::I] {
            let k = c.index(i, n);
            cov[(k, k)] = cfg.ei_std * cfg.ei_std;
        }
    }
    GaussianBelief {
        mean: state.values().clone(),
        cov,
    }
}

/// Filter log-likelihood of `obs` (starting at model day 0) and its gradient
/// in unconstrained coordinates.
pub fn objective(
    data: &EpiData,
    cfg: &FitConfig,
    u: &ParamVector,
    obs: &ObservationSeries,
) -> Result<(f64, Vec<f64>)> {
    let cap = cfg.ranges.initial_cap;
    let decoded = u.decode(&data.populations, cap)?;
    let sys = SeirdSystem::new(decoded.params, data.populations.clone(), &data.contacts, 0)?;
    let belief = initial_belief(&decoded.initial, &cfg.initial_cov);
    let res = score(&sys, &belief, obs)?;
    let grad = u.pullback(&data.populations, cap, &res.grad_params, &res.grad_initial_mean);
    Ok((res.loglik, grad))
}

/// Runs the filter at decoded parameters over all of `obs`.
pub fn filter_at(
    data: &EpiData,
    cfg: &FitConfig,
    u: &ParamVector,
    obs: &ObservationSeries,
) -> Result<LikelihoodResult> {
    let decoded = u.decode(&data.populations, cfg.ranges.initial_cap)?;
    let sys = SeirdSystem::new(decoded.params, data.populations.clone(), &data.contacts, 0)?;
    run_filter(&sys, &initial_belief(&decoded.initial, &cfg.initial_cov), obs)
}

/// Lengths of the fitting window and the trailing restart-selection window.
pub fn split_lengths(total: usize, test_fraction: f64) -> Result<(usize, usize)> {
    let test = ((total as f64 * test_fraction).round() as usize).max(1);
    if total < test + 2 {
        return Err(Error::Structural(format!(
            "{total} days are too few to hold out {test} for restart selection"
        )));
    }
    Ok((total - test, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub index: usize,
    pub start: Vec<f64>,
    /// Fitting-window log-likelihood at each Adam iterate.
    pub trajectory: Vec<f64>,
    /// Best iterate in unconstrained coordinates.
    pub optimum: Option<Vec<f64>>,
    pub fit_loglik: Option<f64>,
    pub test_loglik: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub best: ParamVector,
    pub params: EpidemicParams,
    pub initial_exposed: Vec<f64>,
    pub initial_infected: Vec<f64>,
    pub best_restart: usize,
    pub fit_loglik: f64,
    pub test_loglik: f64,
    pub fit_days: usize,
    pub test_days: usize,
    pub lag: usize,
    pub restarts: Vec<RestartRecord>,
}

fn starting_points(n_tracts: usize, cfg: &FitConfig, seed: u64) -> Result<Vec<ParamVector>> {
    let r = &cfg.ranges;
    let mut boxes = vec![
        (r.beta[0], r.beta[1]),
        (r.kappa[0], r.kappa[1]),
        (r.delta[0], r.delta[1]),
        (r.rho[0], r.rho[1]),
    ];
    boxes.extend(std::iter::repeat_n((0.0, 1.0), 2 * n_tracts));
    Ok(lhs_sample(cfg.n_restarts, &boxes, seed)?
        .into_iter()
        .map(|p| {
            let (rates, fracs) = p.split_at(4);
            let (e, i) = fracs.split_at(n_tracts);
            ParamVector::encode_clamped([rates[0], rates[1], rates[2], rates[3]], e, i)
        })
        .collect())
}

fn run_restart(
    data: &EpiData,
    cfg: &FitConfig,
    index: usize,
    start: &ParamVector,
    obs_all: &ObservationSeries,
    fit_days: usize,
) -> (RestartRecord, Option<ParamVector>) {
    let obs_fit = obs_all.window(0, fit_days);
    let mut record = RestartRecord {
        index,
        start: start.values.clone(),
        trajectory: Vec::new(),
        optimum: None,
        fit_loglik: None,
        test_loglik: None,
        converged: false,
        error: None,
    };
    let outcome = adam_fit(
        &start.values,
        |u| objective(data, cfg, &ParamVector { values: u.to_vec() }, &obs_fit),
        &cfg.adam,
    );
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            record.error = Some(e.to_string());
            return (record, None);
        }
    };
    record.trajectory = outcome.trajectory;
    record.converged = outcome.converged;
    record.fit_loglik = Some(outcome.best_value);
    record.optimum = Some(outcome.best.clone());
    let best = ParamVector {
        values: outcome.best,
    };
    match filter_at(data, cfg, &best, obs_all) {
        Ok(res) => {
            record.test_loglik = Some(res.loglik_between(fit_days, obs_all.len()));
            (record, Some(best))
        }
        Err(e) => {
            record.error = Some(e.to_string());
            (record, None)
        }
    }
}

/// Fits from `cfg.n_restarts` Latin-hypercube starts in parallel and keeps
/// the restart with the best log-likelihood on the trailing test window.
pub fn multi_restart_fit(data: &EpiData, cfg: &FitConfig, seed: u64) -> Result<FitResult> {
    cfg.validate()?;
    let (fit_days, test_days) = split_lengths(data.len(), cfg.test_fraction)?;
    let obs_all = data.series(&cfg.noise)?;
    let starts = starting_points(data.n_tracts(), cfg, seed)?;
    let results: Vec<(RestartRecord, Option<ParamVector>)> = starts
        .par_iter()
        .enumerate()
        .map(|(k, start)| run_restart(data, cfg, k, start, &obs_all, fit_days))
        .collect();

    let mut chosen: Option<(usize, f64)> = None;
    for (k, (rec, best)) in results.iter().enumerate() {
        if let (Some(t), Some(_)) = (rec.test_loglik, best) {
            if chosen.is_none_or(|(_, b)| t > b) {
                chosen = Some((k, t));
            }
        }
    }
    let Some((k, test_loglik)) = chosen else {
        let reasons: Vec<String> = results
            .iter()
            .filter_map(|(r, _)| r.error.as_ref().map(|e| format!("restart {}: {e}", r.index)))
            .take(3)
            .collect();
        return Err(Error::Estimation(format!(
            "all {} restarts failed ({})",
            results.len(),
            reasons.join("; ")
        )));
    };
    let best = results[k].1.clone().expect("selected restart has an optimum");
    let decoded = best.decode(&data.populations, cfg.ranges.initial_cap)?;
    let n = data.n_tracts();
    let fit_loglik = results[k].0.fit_loglik.unwrap_or(f64::NAN);
    Ok(FitResult {
        params: decoded.params,
        initial_exposed: (0..n).map(|i| decoded.initial.get(Compartment::E, i)).collect(),
        initial_infected: (0..n).map(|i| decoded.initial.get(Compartment::I, i)).collect(),
        best,
        best_restart: k,
        fit_loglik,
        test_loglik,
        fit_days,
        test_days,
        lag: 0,
        restarts: results.into_iter().map(|(r, _)| r).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagScore {
    pub lag: usize,
    pub test_loglik: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSelection {
    pub lag: usize,
    pub scores: Vec<LagScore>,
}

/// Picks the reporting lag with the best restart-selection log-likelihood.
/// Every candidate is fitted on the same number of days, and ties go to the
/// smallest lag.
pub fn tune_lag(data: &EpiData, grid: &[usize], cfg: &FitConfig, seed: u64) -> Result<LagSelection> {
    cfg.validate()?;
    let Some(&max_lag) = grid.iter().max() else {
        return Err(Error::Config("lag grid is empty".into()));
    };
    let mut grid = grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid.len() == 1 {
        return Ok(LagSelection {
            lag: grid[0],
            scores: vec![LagScore {
                lag: grid[0],
                test_loglik: None,
            }],
        });
    }
    let common = data
        .len()
        .checked_sub(max_lag)
        .filter(|c| *c >= 2)
        .ok_or_else(|| Error::Structural(format!("lag {max_lag} leaves too few days")))?;
    let mut scores = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64)> = None;
    for lag in grid {
        let lagged = data.lagged(lag)?.truncated(common)?;
        let score = multi_restart_fit(&lagged, cfg, seed).ok().map(|f| f.test_loglik);
        if let Some(s) = score {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((lag, s));
            }
        }
        scores.push(LagScore {
            lag,
            test_loglik: score,
        });
    }
    let (lag, _) = best.ok_or_else(|| Error::Estimation("no lag could be fitted".into()))?;
    Ok(LagSelection { lag, scores })
}
