use nalgebra::{DMatrix, DVector};

use super::filter::{check_lengths, predict_with, update_parts};
use super::{symmetrize, DifferentiableModel, GaussianBelief, Jacobian, ObservationSeries};
use crate::error::{Error, Result};

/// Log-likelihood with its gradient with respect to the model parameters
/// and the initial mean.
#[derive(Debug, Clone)]
pub struct ScoreResult {
    pub loglik: f64,
    pub grad_params: Vec<f64>,
    pub grad_initial_mean: DVector<f64>,
}

struct TapeEntry {
    /// Filtered mean the transition was applied to (absent at step 0).
    x_prev: Option<DVector<f64>>,
    jacobian: Option<Jacobian>,
    jp: Option<DMatrix<f64>>,
    prior: GaussianBelief,
    pht: DMatrix<f64>,
    s_inv: DMatrix<f64>,
    gain: DMatrix<f64>,
    innovation: DVector<f64>,
}

/// Runs the filter forward, then propagates adjoints backward through every
/// update and prediction, giving the exact gradient of the filter
/// log-likelihood (the same quantity [`super::run_filter`] returns).
pub fn score<M: DifferentiableModel + ?Sized>(
    model: &M,
    initial: &GaussianBelief,
    obs: &ObservationSeries,
) -> Result<ScoreResult> {
    check_lengths(model, initial, obs)?;
    let h = model.observation_matrix();
    let d = model.state_dim();
    let mut tape: Vec<TapeEntry> = Vec::with_capacity(obs.len());
    let mut belief = initial.clone();
    let mut loglik = 0.0;
    for t in 0..obs.len() {
        let (x_prev, jacobian, jp, prior) = if t == 0 {
            (None, None, None, belief.clone())
        } else {
            let trans = model
                .transition(t - 1, &belief.mean)
                .map_err(|e| e.at_step(t - 1))?;
            let (prior, jp) = predict_with(&trans, &belief, t - 1)?;
            (Some(belief.mean.clone()), Some(trans.jacobian), Some(jp), prior)
        };
        let parts = update_parts(&prior, obs.y(t), obs.r(t), h, t)?;
        if t > 0 {
            loglik += parts.outcome.loglik;
        }
        belief = parts.outcome.belief;
        tape.push(TapeEntry {
            x_prev,
            jacobian,
            jp,
            prior,
            pht: parts.pht,
            s_inv: parts.s_inv,
            gain: parts.gain,
            innovation: parts.outcome.innovation,
        });
    }

    let mut x_bar = DVector::zeros(d);
    let mut p_bar = DMatrix::zeros(d, d);
    let mut h_bar = DMatrix::zeros(h.nrows(), d);
    let mut theta_bar = vec![0.0; model.n_params()];
    for (t, tp) in tape.iter().enumerate().rev() {
        let w = if t > 0 { 1.0 } else { 0.0 };
        let (u, si, v, e) = (&tp.pht, &tp.s_inv, &tp.gain, &tp.innovation);
        let v_bar = &x_bar * e.transpose() - &p_bar * u;
        let e_bar = v.tr_mul(&x_bar) - (si * e) * w;
        let si_bar = u.tr_mul(&v_bar) - (e * e.transpose()) * (0.5 * w);
        let mut s_bar = -(si * si_bar * si) - si * (0.5 * w);
        symmetrize(&mut s_bar);
        let u_bar = &v_bar * si - p_bar.tr_mul(v) + h.tr_mul(&s_bar);
        h_bar += &s_bar * u.transpose() + u_bar.tr_mul(&tp.prior.cov)
            - &e_bar * tp.prior.mean.transpose();
        let mut prior_cov_bar = &p_bar + &u_bar * h;
        symmetrize(&mut prior_cov_bar);
        let prior_mean_bar = &x_bar - h.tr_mul(&e_bar);

        match (&tp.x_prev, &tp.jacobian, &tp.jp) {
            (Some(x_prev), Some(jac), Some(jp)) => {
                let mut prev_bar = jac.tr_mul_vec(&prior_mean_bar);
                model
                    .transition_adjoint(
                        t - 1,
                        x_prev,
                        jp,
                        &prior_mean_bar,
                        &prior_cov_bar,
                        &mut prev_bar,
                        &mut theta_bar,
                    )
                    .map_err(|err| err.at_step(t - 1))?;
                let jt_pb = jac.tr_mul(&prior_cov_bar);
                let mut cov_bar = jac.tr_mul(&jt_pb.transpose());
                symmetrize(&mut cov_bar);
                x_bar = prev_bar;
                p_bar = cov_bar;
            }
            _ => x_bar = prior_mean_bar,
        }
    }
    model.observation_adjoint(&h_bar, &mut theta_bar);
    if theta_bar.iter().chain(x_bar.iter()).any(|g| !g.is_finite()) {
        return Err(Error::numeric("gradient is not finite"));
    }
    Ok(ScoreResult {
        loglik,
        grad_params: theta_bar,
        grad_initial_mean: x_bar,
    })
}
