use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{filter_at, EpiData, FitConfig, ParamVector};
use crate::ekf::{predict, GaussianBelief, StateSpaceModel};
use crate::error::{Error, Result};
use crate::model::SeirdSystem;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Predicted observation distributions for days `1..=H` after the belief.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    /// Means, floored at zero.
    pub mean: Vec<DVector<f64>>,
    pub cov: Vec<DMatrix<f64>>,
    pub lower: Vec<DVector<f64>>,
    pub upper: Vec<DVector<f64>>,
}

impl Forecast {
    pub fn horizon(&self) -> usize {
        self.mean.len()
    }
}

/// Propagates `belief` (the filtered belief at filter step `first_step`)
/// through `horizon` predictions without updates. Each day's observation
/// covariance is `H P H^T + noise(mean)`.
pub fn forecast<M: StateSpaceModel + ?Sized>(
    model: &M,
    belief: &GaussianBelief,
    first_step: usize,
    horizon: usize,
    noise: impl Fn(&DVector<f64>) -> DMatrix<f64>,
) -> Result<Forecast> {
    if horizon == 0 {
        return Err(Error::Config("forecast horizon must be at least 1".into()));
    }
    let h = model.observation_matrix();
    let mut out = Forecast {
        mean: Vec::with_capacity(horizon),
        cov: Vec::with_capacity(horizon),
        lower: Vec::with_capacity(horizon),
        upper: Vec::with_capacity(horizon),
    };
    let mut b = belief.clone();
    for k in 0..horizon {
        b = predict(model, first_step + k, &b)?;
        let mean = (h * &b.mean).map(|v| v.max(0.0));
        let cov = h * &b.cov * h.transpose() + noise(&mean);
        let sd = cov.diagonal().map(|v| v.max(0.0).sqrt());
        out.lower
            .push(mean.zip_map(&sd, |m, s| (m - Z95 * s).max(0.0)));
        out.upper.push(mean.zip_map(&sd, |m, s| m + Z95 * s));
        out.mean.push(mean);
        out.cov.push(cov);
    }
    Ok(out)
}

/// Forecasts `horizon` days past the first `fit_len` observations of
/// `data`, starting from the filtered belief at the fitted parameters.
/// Contacts must cover the forecast days.
pub fn forecast_after_fit(
    data: &EpiData,
    cfg: &FitConfig,
    best: &ParamVector,
    fit_len: usize,
    horizon: usize,
) -> Result<Forecast> {
    if fit_len < 2 || fit_len > data.len() {
        return Err(Error::Structural(format!(
            "cannot forecast after {fit_len} of {} observed days",
            data.len()
        )));
    }
    let obs = data.series(&cfg.noise)?.window(0, fit_len);
    let res = filter_at(data, cfg, best, &obs)?;
    let decoded = best.decode(&data.populations, cfg.ranges.initial_cap)?;
    let sys = SeirdSystem::new(decoded.params, data.populations.clone(), &data.contacts, 0)?;
    let last = res.filtered.last().expect("filter ran over at least two days");
    forecast(&sys, last, fit_len - 1, horizon, |m| cfg.noise.covariance(m))
}

/// Held-out fit of a forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Sum over days of the Gaussian log-density of the observation under
    /// that day's forecast distribution.
    pub loglik: f64,
    /// Root-mean-square error of the forecast mean, per observed component.
    pub rmse: Vec<f64>,
}

pub fn evaluate(forecast: &Forecast, observed: &[DVector<f64>]) -> Result<Evaluation> {
    if observed.len() != forecast.horizon() {
        return Err(Error::Structural(format!(
            "forecast covers {} days, {} observations given",
            forecast.horizon(),
            observed.len()
        )));
    }
    let m = forecast.mean.first().map_or(0, |v| v.len());
    let mut loglik = 0.0;
    let mut sq = vec![0.0; m];
    for (t, y) in observed.iter().enumerate() {
        if y.len() != m {
            return Err(Error::Structural(format!(
                "observation {t} has dimension {}, expected {m}",
                y.len()
            )));
        }
        let e = y - &forecast.mean[t];
        let chol = forecast.cov[t]
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numeric_at(t, "forecast covariance is singular"))?;
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let quad = e.dot(&chol.solve(&e));
        loglik += -0.5 * (m as f64 * (2.0 * PI).ln() + log_det + quad);
        for (k, v) in e.iter().enumerate() {
            sq[k] += v * v;
        }
    }
    let days = observed.len() as f64;
    Ok(Evaluation {
        loglik,
        rmse: sq.into_iter().map(|s| (s / days).sqrt()).collect(),
    })
}

/// RMSE per component of carrying `last` forward over `observed`.
pub fn persistence_rmse(last: &DVector<f64>, observed: &[DVector<f64>]) -> Vec<f64> {
    let days = observed.len().max(1) as f64;
    (0..last.len())
        .map(|k| {
            let s: f64 = observed.iter().map(|y| (y[k] - last[k]).powi(2)).sum();
            (s / days).sqrt()
        })
        .collect()
}
