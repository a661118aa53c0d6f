//! Maximum-likelihood calibration of the SEIRD model through the filter
//! likelihood: reparameterization, Latin-hypercube restarts of Adam, lag
//! selection, forecasting and held-out evaluation.

mod adam;
mod fit;
mod forecast;
mod lhs;
mod reparam;

pub use adam::{adam_fit, AdamConfig, AdamOutcome};
pub use fit::{
    filter_at, initial_belief, multi_restart_fit, objective, split_lengths, tune_lag, FitResult,
    LagScore, LagSelection, RestartRecord,
};
pub use forecast::{
    evaluate, forecast, forecast_after_fit, persistence_rmse, Evaluation, Forecast,
};
pub use lhs::lhs_sample;
pub use reparam::{Decoded, ParamVector, N_RATES};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ekf::ObservationSeries;
use crate::error::{Error, Result};
use crate::model::ContactMatrixSeries;

/// Observation noise `R_t = diag(max(floor_cases^2, scale * y_cases),
/// max(floor_deaths^2, scale * y_deaths))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub floor_cases: f64,
    pub floor_deaths: f64,
    pub scale: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            floor_cases: 1.0,
            floor_deaths: 1.0,
            scale: 0.1,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.floor_cases > 0.0 && self.floor_deaths > 0.0 && self.scale >= 0.0) {
            return Err(Error::Config(format!("invalid observation noise {self:?}")));
        }
        Ok(())
    }

    pub fn covariance(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let floors = [self.floor_cases, self.floor_deaths];
        DMatrix::from_diagonal(&DVector::from_iterator(
            y.len(),
            y.iter()
                .zip(floors.iter().chain(std::iter::repeat(&self.floor_deaths)))
                .map(|(v, f)| (f * f).max(self.scale * v)),
        ))
    }
}

/// Diagonal initial covariance: standard deviation `s_frac * N_i` on S and
/// `ei_std` on E and I; R and D are known to be zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialCovConfig {
    pub s_frac: f64,
    pub ei_std: f64,
}

impl Default for InitialCovConfig {
    fn default() -> Self {
        Self {
            s_frac: 0.1,
            ei_std: 1.0,
        }
    }
}

/// Natural-scale boxes for restart starting points. Initial E and I are
/// drawn as fractions of `initial_cap * N_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LhsRanges {
    pub beta: [f64; 2],
    pub kappa: [f64; 2],
    pub delta: [f64; 2],
    pub rho: [f64; 2],
    pub initial_cap: f64,
}

impl Default for LhsRanges {
    fn default() -> Self {
        Self {
            beta: [0.01, 2.0],
            kappa: [0.05, 1.0],
            delta: [0.05, 1.0],
            rho: [0.0005, 0.05],
            initial_cap: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub adam: AdamConfig,
    pub n_restarts: usize,
    pub ranges: LhsRanges,
    pub noise: NoiseConfig,
    pub initial_cov: InitialCovConfig,
    /// Trailing share of the training window used to select among restarts.
    pub test_fraction: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            n_restarts: 50,
            ranges: LhsRanges::default(),
            noise: NoiseConfig::default(),
            initial_cov: InitialCovConfig::default(),
            test_fraction: 0.15,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        self.noise.validate()?;
        if self.n_restarts == 0 {
            return Err(Error::Config("n_restarts must be at least 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction must be in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if !(self.initial_cov.s_frac >= 0.0 && self.initial_cov.ei_std >= 0.0) {
            return Err(Error::Config("initial covariance settings must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Populations, contacts and aligned observations: `observations[t]` holds
/// `[cases, deaths]` for model day `t`, and `contacts.day(t)` drives the
/// transition from day `t` to `t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpiData {
    pub populations: Vec<f64>,
    pub contacts: ContactMatrixSeries,
    pub observations: Vec<DVector<f64>>,
}

impl EpiData {
    pub fn new(
        populations: Vec<f64>,
        contacts: ContactMatrixSeries,
        observations: Vec<DVector<f64>>,
    ) -> Result<Self> {
        if contacts.n_tracts() != populations.len() {
            return Err(Error::Structural(format!(
                "{} populations but contacts over {} tracts",
                populations.len(),
                contacts.n_tracts()
            )));
        }
        if observations.len() < 2 {
            return Err(Error::Structural("need at least two observation days".into()));
        }
        if contacts.len() + 1 < observations.len() {
            return Err(Error::Structural(format!(
                "{} observation days need at least {} contact days, got {}",
                observations.len(),
                observations.len() - 1,
                contacts.len()
            )));
        }
        for (t, y) in observations.iter().enumerate() {
            if y.len() != 2 || y.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Structural(format!(
                    "observation on day {t} must be two nonnegative numbers"
                )));
            }
        }
        Ok(Self {
            populations,
            contacts,
            observations,
        })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn n_tracts(&self) -> usize {
        self.populations.len()
    }

    /// Keeps the first `len` observation days.
    pub fn truncated(&self, len: usize) -> Result<Self> {
        if len > self.len() {
            return Err(Error::Structural(format!(
                "cannot truncate {} days to {len}",
                self.len()
            )));
        }
        Self::new(
            self.populations.clone(),
            self.contacts.clone(),
            self.observations[..len].to_vec(),
        )
    }

    /// Shifts observations so model day `t` sees the value reported on day `t + lag`.
    pub fn lagged(&self, lag: usize) -> Result<Self> {
        Self::new(
            self.populations.clone(),
            self.contacts.clone(),
            crate::data::apply_lag(&self.observations, lag)?,
        )
    }

    pub fn series(&self, noise: &NoiseConfig) -> Result<ObservationSeries> {
        ObservationSeries::new(
            self.observations.clone(),
            self.observations.iter().map(|y| noise.covariance(y)).collect(),
        )
    }
}
