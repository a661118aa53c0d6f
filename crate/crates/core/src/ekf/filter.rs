use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::{symmetrize, GaussianBelief, ObservationSeries, StateSpaceModel, Transition};
use crate::error::{Error, Result};

/// Per-step filter artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Predictive log-density of this step's observation. Step 0 is not
    /// scored and carries its conditioning density for diagnostics only.
    pub loglik: f64,
    pub scored: bool,
    pub innovation: DVector<f64>,
    pub innovation_cov: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct LikelihoodResult {
    pub loglik: f64,
    pub steps: Vec<StepRecord>,
    pub filtered: Vec<GaussianBelief>,
}

impl LikelihoodResult {
    /// Sum of scored contributions over steps `start..end`.
    pub fn loglik_between(&self, start: usize, end: usize) -> f64 {
        self.steps[start..end]
            .iter()
            .filter(|s| s.scored)
            .map(|s| s.loglik)
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct UpdateOutcome {
    pub belief: GaussianBelief,
    pub loglik: f64,
    pub innovation: DVector<f64>,
    pub innovation_cov: DMatrix<f64>,
}

pub(crate) fn predict_with(
    trans: &Transition,
    belief: &GaussianBelief,
    step: usize,
) -> Result<(GaussianBelief, DMatrix<f64>)> {
    let jp = trans.jacobian.mul(&belief.cov);
    // J P J^T = J (J P)^T for symmetric P.
    let mut cov = trans.jacobian.mul(&jp.transpose()) + &trans.noise;
    symmetrize(&mut cov);
    let predicted = GaussianBelief {
        mean: trans.mean.clone(),
        cov,
    };
    predicted.check_finite(step)?;
    Ok((predicted, jp))
}

/// Propagates the belief through the transition leaving `step`.
pub fn predict<M: StateSpaceModel + ?Sized>(
    model: &M,
    step: usize,
    belief: &GaussianBelief,
) -> Result<GaussianBelief> {
    if belief.dim() != model.state_dim() {
        return Err(Error::Structural(format!(
            "belief dimension {} does not match model dimension {}",
            belief.dim(),
            model.state_dim()
        )));
    }
    let trans = model.transition(step, &belief.mean).map_err(|e| e.at_step(step))?;
    Ok(predict_with(&trans, belief, step)?.0)
}

/// Quantities of one measurement update that the reverse pass reuses.
pub(crate) struct UpdateParts {
    pub(crate) outcome: UpdateOutcome,
    /// `P H^T`.
    pub(crate) pht: DMatrix<f64>,
    pub(crate) s_inv: DMatrix<f64>,
    /// Gain `P H^T S^-1`.
    pub(crate) gain: DMatrix<f64>,
}

pub(crate) fn update_parts(
    belief: &GaussianBelief,
    y: &DVector<f64>,
    r: &DMatrix<f64>,
    h: &DMatrix<f64>,
    step: usize,
) -> Result<UpdateParts> {
    if h.ncols() != belief.dim() || h.nrows() != y.len() || r.nrows() != y.len() {
        return Err(Error::Structural(format!(
            "update at step {step}: observation dimensions do not match"
        )));
    }
    let m = y.len() as f64;
    let pht = &belief.cov * h.transpose();
    let mut s = h * &pht + r;
    symmetrize(&mut s);
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numeric_at(step, "innovation covariance is singular"))?;
    let s_inv = chol.inverse();
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let innovation = y - h * &belief.mean;
    let quad = innovation.dot(&(&s_inv * &innovation));
    let loglik = -0.5 * (m * (2.0 * PI).ln() + log_det + quad);

    let gain = &pht * &s_inv;
    let mean = &belief.mean + &gain * &innovation;
    // Joseph form (I - K H) P (I - K H)^T + K R K^T, expanded with
    // H P = (P H^T)^T and H P H^T + R = S.
    let k_pht_t = &gain * pht.transpose();
    let mut cov = &belief.cov - &k_pht_t - k_pht_t.transpose() + &gain * &s * gain.transpose();
    symmetrize(&mut cov);
    let belief = GaussianBelief { mean, cov };
    belief.check_finite(step)?;
    if !loglik.is_finite() {
        return Err(Error::numeric_at(step, "log-likelihood is not finite"));
    }
    Ok(UpdateParts {
        outcome: UpdateOutcome {
            belief,
            loglik,
            innovation,
            innovation_cov: s,
        },
        pht,
        s_inv,
        gain,
    })
}

/// Conditions the belief on `y` with noise covariance `r`. Returns the
/// posterior and the predictive log-density `log N(y; H x, H P H^T + R)`.
pub fn update<M: StateSpaceModel + ?Sized>(
    model: &M,
    belief: &GaussianBelief,
    y: &DVector<f64>,
    r: &DMatrix<f64>,
) -> Result<UpdateOutcome> {
    Ok(update_parts(belief, y, r, model.observation_matrix(), 0)?.outcome)
}

pub(crate) fn check_lengths<M: StateSpaceModel + ?Sized>(
    model: &M,
    initial: &GaussianBelief,
    obs: &ObservationSeries,
) -> Result<()> {
    if obs.len() < 2 {
        return Err(Error::Structural(format!(
            "filter needs at least 2 observations, got {}",
            obs.len()
        )));
    }
    if initial.dim() != model.state_dim() {
        return Err(Error::Structural(format!(
            "initial belief has dimension {}, model has {}",
            initial.dim(),
            model.state_dim()
        )));
    }
    if obs.obs_dim() != model.obs_dim() {
        return Err(Error::Structural(format!(
            "observations have dimension {}, model emits {}",
            obs.obs_dim(),
            model.obs_dim()
        )));
    }
    Ok(())
}

/// Alternates predict and update over the series and accumulates the
/// log-likelihood of observations `1..T`.
pub fn run_filter<M: StateSpaceModel + ?Sized>(
    model: &M,
    initial: &GaussianBelief,
    obs: &ObservationSeries,
) -> Result<LikelihoodResult> {
    check_lengths(model, initial, obs)?;
    let h = model.observation_matrix();
    let mut steps = Vec::with_capacity(obs.len());
    let mut filtered = Vec::with_capacity(obs.len());
    let mut belief = initial.clone();
    let mut total = 0.0;
    for t in 0..obs.len() {
        if t > 0 {
            belief = predict(model, t - 1, &belief)?;
        }
        let out = update_parts(&belief, obs.y(t), obs.r(t), h, t)?.outcome;
        let scored = t > 0;
        if scored {
            total += out.loglik;
        }
        steps.push(StepRecord {
            loglik: out.loglik,
            scored,
            innovation: out.innovation,
            innovation_cov: out.innovation_cov,
        });
        belief = out.belief;
        filtered.push(belief.clone());
    }
    Ok(LikelihoodResult {
        loglik: total,
        steps,
        filtered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ekf::LinearGaussianModel;
    use approx::assert_relative_eq;

    fn scalar(q: f64) -> LinearGaussianModel {
        LinearGaussianModel::new(
            DMatrix::identity(1, 1),
            DMatrix::from_element(1, 1, q),
            DMatrix::identity(1, 1),
        )
        .unwrap()
    }

    fn belief(m: f64, v: f64) -> GaussianBelief {
        GaussianBelief::new(DVector::from_element(1, m), DMatrix::from_element(1, 1, v)).unwrap()
    }

    #[test]
    fn scalar_predict_adds_noise() {
        let b = predict(&scalar(1.0), 0, &belief(0.0, 1.0)).unwrap();
        assert_eq!(b.mean[0], 0.0);
        assert_relative_eq!(b.cov[(0, 0)], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn identity_without_noise_keeps_covariance() {
        let model = LinearGaussianModel::new(
            DMatrix::identity(3, 3),
            DMatrix::zeros(3, 3),
            DMatrix::identity(3, 3),
        )
        .unwrap();
        let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, 0.2, 0.1, 0.2, 3.0]);
        let b = GaussianBelief::new(DVector::from_element(3, 1.0), cov.clone()).unwrap();
        assert_eq!(predict(&model, 0, &b).unwrap().cov, cov);
    }

    #[test]
    fn scalar_update_by_hand() {
        let out = update(
            &scalar(0.0),
            &belief(0.0, 2.0),
            &DVector::from_element(1, 2.0),
            &DMatrix::from_element(1, 1, 2.0),
        )
        .unwrap();
        assert_relative_eq!(out.belief.mean[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(out.belief.cov[(0, 0)], 1.0, epsilon = 1e-15);
        let expect = -0.5 * (2.0 * PI * 4.0).ln() - 4.0 / 8.0;
        assert_relative_eq!(out.loglik, expect, epsilon = 1e-14);
        assert_relative_eq!(out.loglik, -2.1121, epsilon = 5e-5);
    }

    #[test]
    fn uninformative_update_keeps_prior() {
        let out = update(
            &scalar(0.0),
            &belief(3.0, 2.0),
            &DVector::from_element(1, 50.0),
            &DMatrix::from_element(1, 1, 1e12),
        )
        .unwrap();
        assert!((out.belief.mean[0] - 3.0).abs() <= 1e-6);
    }

    #[test]
    fn zero_innovation_keeps_mean_and_shrinks_cov() {
        let out = update(
            &scalar(0.0),
            &belief(3.0, 2.0),
            &DVector::from_element(1, 3.0),
            &DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        assert_eq!(out.belief.mean[0], 3.0);
        assert!(out.belief.cov[(0, 0)] < 2.0);
    }

    #[test]
    fn two_steps_score_one_update() {
        // y_0 conditions (0, 1) -> (0.5 * y0, 0.5) with R = 1; predict adds Q = 1.5
        // to give (y0/2, 2); then y_1 = 2 + y0/2 with R = 2 gives the hand value.
        let model = scalar(1.5);
        let y0 = 0.8;
        let obs = ObservationSeries::new(
            vec![DVector::from_element(1, y0), DVector::from_element(1, 2.0 + y0 / 2.0)],
            vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 2.0)],
        )
        .unwrap();
        let res = run_filter(&model, &belief(0.0, 1.0), &obs).unwrap();
        let expect = -0.5 * (2.0 * PI * 4.0).ln() - 4.0 / 8.0;
        assert_relative_eq!(res.loglik, expect, epsilon = 1e-14);
        assert!(!res.steps[0].scored);
        assert_eq!(res.filtered.len(), 2);
    }

    #[test]
    fn larger_noise_lowers_loglik_of_large_innovations() {
        // innovations of size 5 against S = P + R with R in {0.5, 1}.
        let model = scalar(0.0);
        let ys = [0.0, 5.0, -5.0, 5.0, -5.0, 5.0];
        let run = |r: f64| {
            let obs = ObservationSeries::new(
                ys.iter().map(|y| DVector::from_element(1, *y)).collect(),
                vec![DMatrix::from_element(1, 1, r); ys.len()],
            )
            .unwrap();
            run_filter(&model, &belief(0.0, 1e-9), &obs).unwrap()
        };
        let (a, b) = (run(0.5), run(1.0));
        for t in 1..ys.len() {
            assert!(b.steps[t].loglik > a.steps[t].loglik);
        }
        // ... while for small innovations extra noise costs likelihood.
        let model_small = scalar(0.0);
        let obs = |r: f64| {
            ObservationSeries::new(
                vec![DVector::from_element(1, 0.0); 4],
                vec![DMatrix::from_element(1, 1, r); 4],
            )
            .unwrap()
        };
        let small = run_filter(&model_small, &belief(0.0, 1e-9), &obs(1.0)).unwrap();
        let doubled = run_filter(&model_small, &belief(0.0, 1e-9), &obs(2.0)).unwrap();
        for t in 1..4 {
            assert!(doubled.steps[t].loglik < small.steps[t].loglik);
        }
    }

    #[test]
    fn short_series_is_rejected() {
        let obs = ObservationSeries::new(
            vec![DVector::from_element(1, 0.0)],
            vec![DMatrix::from_element(1, 1, 1.0)],
        )
        .unwrap();
        assert!(matches!(
            run_filter(&scalar(1.0), &belief(0.0, 1.0), &obs),
            Err(Error::Structural(_))
        ));
    }
}
