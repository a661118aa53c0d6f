use nalgebra::{DMatrix, DVector};

use super::{DifferentiableModel, Jacobian, StateSpaceModel, Transition};
use crate::error::{Error, Result};

/// Time-invariant linear-Gaussian model `x' = A x + v`, `y = H x + w`, on
/// which the filter reduces to the ordinary Kalman filter.
#[derive(Debug, Clone)]
pub struct LinearGaussianModel {
    a: DMatrix<f64>,
    q: DMatrix<f64>,
    h: DMatrix<f64>,
}

impl LinearGaussianModel {
    pub fn new(a: DMatrix<f64>, q: DMatrix<f64>, h: DMatrix<f64>) -> Result<Self> {
        let d = a.nrows();
        if a.ncols() != d || q.shape() != (d, d) || h.ncols() != d {
            return Err(Error::Structural("inconsistent linear model dimensions".into()));
        }
        Ok(Self { a, q, h })
    }
}

impl StateSpaceModel for LinearGaussianModel {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn transition(&self, _step: usize, x: &DVector<f64>) -> Result<Transition> {
        Ok(Transition {
            mean: &self.a * x,
            jacobian: Jacobian::Dense(self.a.clone()),
            noise: self.q.clone(),
        })
    }

    fn observation_matrix(&self) -> &DMatrix<f64> {
        &self.h
    }
}

/// No free parameters; the score still differentiates the initial mean.
impl DifferentiableModel for LinearGaussianModel {
    fn n_params(&self) -> usize {
        0
    }

    fn transition_adjoint(
        &self,
        _step: usize,
        _x: &DVector<f64>,
        _jp: &DMatrix<f64>,
        _mean_bar: &DVector<f64>,
        _cov_bar: &DMatrix<f64>,
        _x_bar: &mut DVector<f64>,
        _theta_bar: &mut [f64],
    ) -> Result<()> {
        Ok(())
    }

    fn observation_adjoint(&self, _h_bar: &DMatrix<f64>, _theta_bar: &mut [f64]) {}
}
