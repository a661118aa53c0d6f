//! Discrete-time stochastic SEIRD metapopulation model.
//!
//! Each census tract `i` carries five compartments `S, E, I, R, D`. Per day
//! the four transitions are Poisson with intensities
//!
//! ```text
//! S_i -> E_i : beta * sum_j M_ij * S_i * I_j / (N_i * N_j)
//! E_i -> I_i : kappa * E_i
//! I_i -> R_i : delta * I_i
//! I_i -> D_i : rho   * I_i
//! ```
//!
//! State vectors use compartment-major block ordering: index
//! `c * n_tracts + i` for compartment `c` in `S, E, I, R, D` order and tract `i`.

mod dynamics;
mod sampling;
mod system;

pub use dynamics::{
    mean_step, observation_matrix, observe, process_noise, state_jacobian, transition_rates,
    FlowKind, Linearization, StoichJacobian, PROCESS_NOISE_JITTER,
};
pub use sampling::{sample_step, sample_transitions, TransitionCounts};
pub use system::SeirdSystem;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_COMPARTMENTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Compartment {
    S = 0,
    E = 1,
    I = 2,
    R = 3,
    D = 4,
}

impl Compartment {
    pub const ALL: [Compartment; 5] = [
        Compartment::S,
        Compartment::E,
        Compartment::I,
        Compartment::R,
        Compartment::D,
    ];

    /// Position of `(self, tract)` in a state vector for `n_tracts` tracts.
    #[inline]
    pub fn index(self, tract: usize, n_tracts: usize) -> usize {
        self as usize * n_tracts + tract
    }
}

/// Rate parameters of the transition model, all per day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpidemicParams {
    /// Infection rate per contact.
    pub beta: f64,
    /// Exposed to infected rate (inverse latency).
    pub kappa: f64,
    /// Recovery rate.
    pub delta: f64,
    /// Fatality rate.
    pub rho: f64,
}

impl EpidemicParams {
    pub fn new(beta: f64, kappa: f64, delta: f64, rho: f64) -> Result<Self> {
        let p = Self {
            beta,
            kappa,
            delta,
            rho,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("beta", self.beta),
            ("kappa", self.kappa),
            ("delta", self.delta),
            ("rho", self.rho),
        ];
        for (name, v) in named {
            if !v.is_finite() {
                return Err(Error::numeric(format!("{name} is not finite")));
            }
            if v <= 0.0 {
                return Err(Error::Structural(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in &named[1..] {
            if *v > 1.0 {
                return Err(Error::Structural(format!(
                    "{name} is a daily probability at the mean level and must be <= 1, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.beta, self.kappa, self.delta, self.rho]
    }
}

/// Compartment sizes for every tract plus the (constant) tract populations.
#[derive(Debug, Clone, PartialEq)]
pub struct MetapopState {
    populations: Vec<f64>,
    values: DVector<f64>,
}

impl MetapopState {
    /// Builds a state and checks the nonnegativity and mass invariants.
    pub fn new(populations: Vec<f64>, values: DVector<f64>) -> Result<Self> {
        let state = Self::from_parts(populations, values)?;
        state.check_invariants()?;
        Ok(state)
    }

    /// Builds a state checking shapes only. Filter means may leave the
    /// feasible set, so model functions accept such states.
    pub fn from_parts(populations: Vec<f64>, values: DVector<f64>) -> Result<Self> {
        let n = populations.len();
        if n == 0 {
            return Err(Error::Structural("state needs at least one tract".into()));
        }
        if values.len() != N_COMPARTMENTS * n {
            return Err(Error::Structural(format!(
                "state vector has length {} but {} tracts need {}",
                values.len(),
                n,
                N_COMPARTMENTS * n
            )));
        }
        if let Some(p) = populations.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::Structural(format!("population must be positive, got {p}")));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::numeric("state contains NaN"));
        }
        Ok(Self {
            populations,
            values,
        })
    }

    /// Disease-free start: everyone susceptible except the given exposed and
    /// infected counts.
    pub fn seeded(populations: Vec<f64>, exposed: &[f64], infected: &[f64]) -> Result<Self> {
        let n = populations.len();
        if exposed.len() != n || infected.len() != n {
            return Err(Error::Structural("seed vectors must have one entry per tract".into()));
        }
        let mut values = DVector::zeros(N_COMPARTMENTS * n);
        for i in 0..n {
            values[Compartment::S.index(i, n)] = populations[i] - exposed[i] - infected[i];
            values[Compartment::E.index(i, n)] = exposed[i];
            values[Compartment::I.index(i, n)] = infected[i];
        }
        Self::new(populations, values)
    }

    pub fn check_invariants(&self) -> Result<()> {
        let n = self.n_tracts();
        if let Some(v) = self.values.iter().find(|v| **v < 0.0) {
            return Err(Error::Structural(format!("compartment value {v} is negative")));
        }
        for i in 0..n {
            let total = self.tract_total(i);
            let pop = self.populations[i];
            if (total - pop).abs() > 1e-6 * pop {
                return Err(Error::Structural(format!(
                    "tract {i}: compartments sum to {total}, population is {pop}"
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn n_tracts(&self) -> usize {
        self.populations.len()
    }

    pub fn populations(&self) -> &[f64] {
        &self.populations
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, c: Compartment, tract: usize) -> f64 {
        self.values[c.index(tract, self.n_tracts())]
    }

    pub fn set(&mut self, c: Compartment, tract: usize, v: f64) {
        let n = self.n_tracts();
        self.values[c.index(tract, n)] = v;
    }

    pub fn tract_total(&self, tract: usize) -> f64 {
        Compartment::ALL.iter().map(|c| self.get(*c, tract)).sum()
    }

    pub fn compartment_total(&self, c: Compartment) -> f64 {
        (0..self.n_tracts()).map(|i| self.get(c, i)).sum()
    }
}

/// Daily expected-contact matrices between tracts.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactMatrixSeries {
    days: Vec<DMatrix<f64>>,
}

impl ContactMatrixSeries {
    /// Validates that every matrix is square with matching size, entrywise
    /// nonnegative and symmetric (relative tolerance 1e-9).
    pub fn new(days: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = days.first() else {
            return Ok(Self { days });
        };
        let n = first.nrows();
        for (t, m) in days.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Structural(format!(
                    "contact matrix for day {t} is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            let scale = m.amax().max(1.0);
            for i in 0..n {
                for j in 0..n {
                    let v = m[(i, j)];
                    if !v.is_finite() || v < 0.0 {
                        return Err(Error::Structural(format!(
                            "contact matrix for day {t} has invalid entry {v} at ({i}, {j})"
                        )));
                    }
                    if j > i && (v - m[(j, i)]).abs() > 1e-9 * scale {
                        return Err(Error::Structural(format!(
                            "contact matrix for day {t} is not symmetric at ({i}, {j})"
                        )));
                    }
                }
            }
        }
        Ok(Self { days })
    }

    /// Constant contacts for `n_days` days.
    pub fn constant(m: DMatrix<f64>, n_days: usize) -> Result<Self> {
        Self::new(vec![m; n_days])
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn n_tracts(&self) -> usize {
        self.days.first().map_or(0, |m| m.nrows())
    }

    pub fn day(&self, t: usize) -> Option<&DMatrix<f64>> {
        self.days.get(t)
    }

    pub fn days(&self) -> &[DMatrix<f64>] {
        &self.days
    }

    /// Applies the same tract permutation to every matrix: new index `k`
    /// takes old index `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = perm.len();
        let days = self
            .days
            .iter()
            .map(|m| DMatrix::from_fn(n, n, |a, b| m[(perm[a], perm[b])]))
            .collect();
        Self { days }
    }
}

/// Raw Poisson intensities of the four transitions, one entry per tract.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRates {
    pub s_to_e: Vec<f64>,
    pub e_to_i: Vec<f64>,
    pub i_to_r: Vec<f64>,
    pub i_to_d: Vec<f64>,
}
