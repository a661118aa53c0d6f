use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_iters: usize,
    /// Stop once the largest gradient component falls below this.
    pub tol: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_iters: 2000,
            tol: 1e-4,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.tol >= 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamOutcome {
    /// Iterate with the highest objective seen.
    pub best: Vec<f64>,
    pub best_value: f64,
    /// Objective at every evaluated iterate, starting with the start point.
    pub trajectory: Vec<f64>,
    pub converged: bool,
    /// Set when a later iterate could not be evaluated and the run stopped early.
    pub stopped_by: Option<String>,
}

/// Maximizes `objective` (which returns value and gradient) with Adam.
///
/// Returns the best iterate visited, so the result is never worse than the
/// start. An error at the start point is returned; errors at later iterates
/// end the run.
pub fn adam_fit<F>(start: &[f64], mut objective: F, cfg: &AdamConfig) -> Result<AdamOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    let dim = start.len();
    let mut u = start.to_vec();
    let (mut value, mut grad) = objective(&u)?;
    if !value.is_finite() || grad.len() != dim || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Estimation(
            "objective is not finite at the starting point".into(),
        ));
    }
    let mut out = AdamOutcome {
        best: u.clone(),
        best_value: value,
        trajectory: vec![value],
        converged: false,
        stopped_by: None,
    };
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    for iter in 1..=cfg.max_iters {
        if grad.iter().fold(0.0f64, |a, g| a.max(g.abs())) < cfg.tol {
            out.converged = true;
            break;
        }
        let c1 = 1.0 - cfg.beta1.powi(iter as i32);
        let c2 = 1.0 - cfg.beta2.powi(iter as i32);
        for k in 0..dim {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * grad[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
            u[k] += cfg.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + cfg.eps);
        }
        match objective(&u) {
            Ok((val, g)) if val.is_finite() && g.iter().all(|x| x.is_finite()) => {
                value = val;
                grad = g;
            }
            Ok(_) => {
                out.stopped_by = Some(format!("non-finite objective at iteration {iter}"));
                break;
            }
            Err(e) => {
                out.stopped_by = Some(format!("iteration {iter}: {e}"));
                break;
            }
        }
        out.trajectory.push(value);
        if value > out.best_value {
            out.best_value = value;
            out.best.clone_from(&u);
        }
    }
    Ok(out)
}
