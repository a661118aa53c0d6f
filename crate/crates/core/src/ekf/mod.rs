//! Extended Kalman filter over a generic state-space model, with the data
//! log-likelihood and its exact gradient.
//!
//! The filter scores observations `1..T` (0-based) by their one-step
//! predictive densities; the first observation conditions the initial belief
//! without being scored.

mod diagnostics;
mod filter;
mod linear;
mod score;

pub use diagnostics::write_diagnostics;
pub use filter::{predict, run_filter, update, LikelihoodResult, StepRecord, UpdateOutcome};
pub use linear::LinearGaussianModel;
pub use score::{score, ScoreResult};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::StoichJacobian;

/// Mean and covariance of the latent state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::Structural(format!(
                "covariance is {}x{} for a state of dimension {n}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub(crate) fn check_finite(&self, step: usize) -> Result<()> {
        if self.mean.iter().chain(self.cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::numeric_at(step, "belief became non-finite"));
        }
        Ok(())
    }
}

/// Observations and their noise covariances, one pair per day.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    y: Vec<DVector<f64>>,
    r: Vec<DMatrix<f64>>,
}

impl ObservationSeries {
    /// Checks matching lengths and dimensions, and that every `R_t` is
    /// symmetric positive definite.
    pub fn new(y: Vec<DVector<f64>>, r: Vec<DMatrix<f64>>) -> Result<Self> {
        if y.len() != r.len() {
            return Err(Error::Structural(format!(
                "{} observations but {} noise covariances",
                y.len(),
                r.len()
            )));
        }
        let m = y.first().map_or(0, |v| v.len());
        for (t, (yt, rt)) in y.iter().zip(&r).enumerate() {
            if yt.len() != m || rt.nrows() != m || rt.ncols() != m {
                return Err(Error::Structural(format!(
                    "observation {t} has inconsistent dimensions"
                )));
            }
            if yt.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric_at(t, "observation is not finite"));
            }
            if (rt - rt.transpose()).amax() > 1e-10 * rt.amax().max(1.0) {
                return Err(Error::Structural(format!("R at step {t} is not symmetric")));
            }
            if rt.clone().cholesky().is_none() {
                return Err(Error::Structural(format!(
                    "R at step {t} is not positive definite"
                )));
            }
        }
        Ok(Self { y, r })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.y.first().map_or(0, |v| v.len())
    }

    pub fn y(&self, t: usize) -> &DVector<f64> {
        &self.y[t]
    }

    pub fn r(&self, t: usize) -> &DMatrix<f64> {
        &self.r[t]
    }

    /// Keeps days `start..end`.
    pub fn window(&self, start: usize, end: usize) -> Self {
        Self {
            y: self.y[start..end].to_vec(),
            r: self.r[start..end].to_vec(),
        }
    }
}

/// Jacobian of a transition, either dense or in stoichiometric factored form.
#[derive(Debug, Clone)]
pub enum Jacobian {
    Dense(DMatrix<f64>),
    Stoich(StoichJacobian),
}

impl Jacobian {
    pub fn dim(&self) -> usize {
        match self {
            Jacobian::Dense(j) => j.nrows(),
            Jacobian::Stoich(j) => j.dim(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Jacobian::Dense(j) => j.clone(),
            Jacobian::Stoich(j) => j.to_dense(),
        }
    }

    pub fn mul_vec(&self, a: &DVector<f64>) -> DVector<f64> {
        match self {
            Jacobian::Dense(j) => j * a,
            Jacobian::Stoich(j) => {
                let mut out = DVector::zeros(a.len());
                j.apply_vec(a.as_slice(), out.as_mut_slice());
                out
            }
        }
    }

    pub fn tr_mul_vec(&self, a: &DVector<f64>) -> DVector<f64> {
        match self {
            Jacobian::Dense(j) => j.tr_mul(a),
            Jacobian::Stoich(j) => {
                let mut out = DVector::zeros(a.len());
                j.apply_transpose_vec(a.as_slice(), out.as_mut_slice());
                out
            }
        }
    }

    /// `J A`.
    pub fn mul(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Jacobian::Dense(j) => j * a,
            Jacobian::Stoich(j) => columnwise(a, |src, dst| j.apply_vec(src, dst)),
        }
    }

    /// `J^T A`.
    pub fn tr_mul(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Jacobian::Dense(j) => j.tr_mul(a),
            Jacobian::Stoich(j) => columnwise(a, |src, dst| j.apply_transpose_vec(src, dst)),
        }
    }
}

fn columnwise(a: &DMatrix<f64>, f: impl Fn(&[f64], &mut [f64])) -> DMatrix<f64> {
    let rows = a.nrows();
    let mut out = DMatrix::zeros(rows, a.ncols());
    for (src, dst) in a
        .as_slice()
        .chunks_exact(rows)
        .zip(out.as_mut_slice().chunks_exact_mut(rows))
    {
        f(src, dst);
    }
    out
}

/// One linearized transition: predicted mean, Jacobian, process noise.
#[derive(Debug, Clone)]
pub struct Transition {
    pub mean: DVector<f64>,
    pub jacobian: Jacobian,
    pub noise: DMatrix<f64>,
}

/// Dynamics `x_{t+1} = f(x_t) + v_t` and a linear observation `y = H x + w`.
pub trait StateSpaceModel {
    fn state_dim(&self) -> usize;

    /// Linearizes the transition leaving filter step `step` at state `x`.
    fn transition(&self, step: usize, x: &DVector<f64>) -> Result<Transition>;

    fn observation_matrix(&self) -> &DMatrix<f64>;

    fn obs_dim(&self) -> usize {
        self.observation_matrix().nrows()
    }
}

/// A model whose transition and observation depend smoothly on a parameter
/// vector, with reverse-mode pullbacks for the parts the engine cannot see.
pub trait DifferentiableModel: StateSpaceModel {
    fn n_params(&self) -> usize;

    /// Pulls back adjoints of the predicted mean (`mean_bar`) and covariance
    /// (`cov_bar`, symmetric) through the parameter dependence of `f`, and
    /// through the state and parameter dependence of `J` and `Q`. The engine
    /// itself adds `J^T mean_bar` to `x_bar`; `jp` is `J P` at the filtered
    /// covariance `P` the transition was applied to.
    #[allow(clippy::too_many_arguments)]
    fn transition_adjoint(
        &self,
        step: usize,
        x: &DVector<f64>,
        jp: &DMatrix<f64>,
        mean_bar: &DVector<f64>,
        cov_bar: &DMatrix<f64>,
        x_bar: &mut DVector<f64>,
        theta_bar: &mut [f64],
    ) -> Result<()>;

    /// Pulls back the adjoint of the observation matrix onto the parameters.
    fn observation_adjoint(&self, h_bar: &DMatrix<f64>, theta_bar: &mut [f64]);
}

#[inline]
pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
