use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Compartment, EpidemicParams, MetapopState, N_COMPARTMENTS};

/// Number of rate coordinates at the front of a [`ParamVector`].
pub const N_RATES: usize = 4;

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Unconstrained coordinates `[u_beta, u_kappa, u_delta, u_rho, u_E(0..n),
/// u_I(0..n)]`.
///
/// `beta = exp(u_beta)`; `kappa, delta, rho = sigmoid(u)` so they stay in
/// `(0, 1)`; initial `E_i = N_i * cap * sigmoid(u_E,i)` and likewise `I_i`,
/// with `S_i = N_i - E_i - I_i` and `R_i = D_i = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
}

/// A [`ParamVector`] mapped back to model quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub params: EpidemicParams,
    pub initial: MetapopState,
}

impl ParamVector {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < N_RATES + 2 || (values.len() - N_RATES) % 2 != 0 {
            return Err(Error::Structural(format!(
                "parameter vector of length {} does not fit 4 rates plus 2 per tract",
                values.len()
            )));
        }
        Ok(Self { values })
    }

    pub fn n_tracts(&self) -> usize {
        (self.values.len() - N_RATES) / 2
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Inverse of [`ParamVector::decode`]. Needs `kappa, delta, rho` in
    /// `(0, 1)` and `E_i, I_i` in `(0, cap * N_i)`.
    pub fn encode(
        params: &EpidemicParams,
        exposed: &[f64],
        infected: &[f64],
        populations: &[f64],
        cap: f64,
    ) -> Result<Self> {
        params.validate()?;
        check_cap(cap)?;
        let n = populations.len();
        if exposed.len() != n || infected.len() != n {
            return Err(Error::Structural("initial conditions need one entry per tract".into()));
        }
        for (name, v) in [("kappa", params.kappa), ("delta", params.delta), ("rho", params.rho)] {
            if v >= 1.0 {
                return Err(Error::Structural(format!("{name} = {v} is not below 1")));
            }
        }
        let mut values = Vec::with_capacity(N_RATES + 2 * n);
        values.push(params.beta.ln());
        values.extend([params.kappa, params.delta, params.rho].map(logit));
        for seeds in [exposed, infected] {
            for (v, pop) in seeds.iter().zip(populations) {
                let frac = v / (pop * cap);
                if !(frac > 0.0 && frac < 1.0) {
                    return Err(Error::Structural(format!(
                        "initial count {v} is outside (0, {})",
                        pop * cap
                    )));
                }
                values.push(logit(frac));
            }
        }
        Ok(Self { values })
    }

    /// Encodes natural-scale values after clamping them into the open
    /// domain of the transform; used for sampled starting points.
    pub fn encode_clamped(
        params: [f64; 4],
        exposed_frac: &[f64],
        infected_frac: &[f64],
    ) -> Self {
        const EDGE: f64 = 1e-6;
        let unit = |p: f64| logit(p.clamp(EDGE, 1.0 - EDGE));
        let mut values = vec![params[0].max(1e-12).ln()];
        values.extend(params[1..].iter().map(|p| unit(*p)));
        values.extend(exposed_frac.iter().chain(infected_frac).map(|f| unit(*f)));
        Self { values }
    }

    pub fn params(&self) -> EpidemicParams {
        let u = &self.values;
        EpidemicParams {
            beta: u[0].exp(),
            kappa: sigmoid(u[1]),
            delta: sigmoid(u[2]),
            rho: sigmoid(u[3]),
        }
    }

    pub fn decode(&self, populations: &[f64], cap: f64) -> Result<Decoded> {
        check_cap(cap)?;
        let n = self.n_tracts();
        if populations.len() != n {
            return Err(Error::Structural(format!(
                "parameter vector covers {n} tracts, {} populations given",
                populations.len()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("parameter vector is not finite"));
        }
        let params = self.params();
        params.validate()?;
        let mut x = DVector::zeros(N_COMPARTMENTS * n);
        for (i, pop) in populations.iter().enumerate() {
            let e = pop * cap * sigmoid(self.values[N_RATES + i]);
            let inf = pop * cap * sigmoid(self.values[N_RATES + n + i]);
            x[Compartment::S.index(i, n)] = pop - e - inf;
            x[Compartment::E.index(i, n)] = e;
            x[Compartment::I.index(i, n)] = inf;
        }
        Ok(Decoded {
            params,
            initial: MetapopState::new(populations.to_vec(), x)?,
        })
    }

    /// Chain rule from gradients in natural coordinates (rates ordered
    /// `beta, kappa, delta, rho`, and the initial state vector) to the
    /// unconstrained coordinates.
    pub fn pullback(
        &self,
        populations: &[f64],
        cap: f64,
        grad_rates: &[f64],
        grad_initial: &DVector<f64>,
    ) -> Vec<f64> {
        let n = self.n_tracts();
        let p = self.params();
        let mut g = Vec::with_capacity(self.values.len());
        g.push(grad_rates[0] * p.beta);
        for (k, v) in [p.kappa, p.delta, p.rho].into_iter().enumerate() {
            g.push(grad_rates[k + 1] * v * (1.0 - v));
        }
        for (offset, comp) in [(N_RATES, Compartment::E), (N_RATES + n, Compartment::I)] {
            for (i, pop) in populations.iter().enumerate() {
                let s = sigmoid(self.values[offset + i]);
                let d = grad_initial[comp.index(i, n)] - grad_initial[Compartment::S.index(i, n)];
                g.push(d * pop * cap * s * (1.0 - s));
            }
        }
        g
    }
}

fn check_cap(cap: f64) -> Result<()> {
    if !(cap > 0.0 && cap < 0.5) {
        return Err(Error::Config(format!(
            "initial-condition cap must be in (0, 0.5), got {cap}"
        )));
    }
    Ok(())
}
