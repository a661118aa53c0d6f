use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};

use super::{Compartment, EpidemicParams, MetapopState};
use crate::error::{Error, Result};

/// Realized transition counts for one day, one entry per tract.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionCounts {
    pub s_to_e: Vec<u64>,
    pub e_to_i: Vec<u64>,
    pub i_to_r: Vec<u64>,
    pub i_to_d: Vec<u64>,
}

fn poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<u64> {
    if rate <= 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(rate)
        .map_err(|e| Error::numeric(format!("bad Poisson rate {rate}: {e}")))?;
    Ok(dist.sample(rng) as u64)
}

fn as_count(v: f64) -> Result<u64> {
    if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
        return Err(Error::Structural(format!(
            "stochastic step needs nonnegative integer compartments, got {v}"
        )));
    }
    Ok(v as u64)
}

/// Draws Poisson transition counts and truncates them so that no
/// compartment goes negative. When both I outflows together exceed the
/// compartment, all of I leaves and the split is binomial in the drawn
/// proportions.
pub fn sample_transitions<R: Rng + ?Sized>(
    state: &MetapopState,
    params: &EpidemicParams,
    m: &DMatrix<f64>,
    rng: &mut R,
) -> Result<TransitionCounts> {
    let n = state.n_tracts();
    let mut counts = TransitionCounts {
        s_to_e: vec![0; n],
        e_to_i: vec![0; n],
        i_to_r: vec![0; n],
        i_to_d: vec![0; n],
    };
    let compartments: Vec<[u64; 3]> = (0..n)
        .map(|i| {
            Ok([
                as_count(state.get(Compartment::S, i))?,
                as_count(state.get(Compartment::E, i))?,
                as_count(state.get(Compartment::I, i))?,
            ])
        })
        .collect::<Result<_>>()?;
    let rates = super::transition_rates(state, params, m)?;
    for i in 0..n {
        let [s, e, inf] = compartments[i];
        counts.s_to_e[i] = poisson(rates.s_to_e[i], rng)?.min(s);
        counts.e_to_i[i] = poisson(rates.e_to_i[i], rng)?.min(e);
        let to_r = poisson(rates.i_to_r[i], rng)?;
        let to_d = poisson(rates.i_to_d[i], rng)?;
        if to_r + to_d > inf {
            let p = to_d as f64 / (to_r + to_d) as f64;
            let d = Binomial::new(inf, p)
                .map_err(|e| Error::numeric(format!("binomial split failed: {e}")))?
                .sample(rng);
            counts.i_to_d[i] = d;
            counts.i_to_r[i] = inf - d;
        } else {
            counts.i_to_r[i] = to_r;
            counts.i_to_d[i] = to_d;
        }
    }
    Ok(counts)
}

/// One stochastic day on an integer-valued state.
pub fn sample_step<R: Rng + ?Sized>(
    state: &MetapopState,
    params: &EpidemicParams,
    m: &DMatrix<f64>,
    rng: &mut R,
) -> Result<MetapopState> {
    let c = sample_transitions(state, params, m, rng)?;
    let mut next = state.clone();
    for i in 0..state.n_tracts() {
        let (se, ei, ir, id) = (
            c.s_to_e[i] as f64,
            c.e_to_i[i] as f64,
            c.i_to_r[i] as f64,
            c.i_to_d[i] as f64,
        );
        next.set(Compartment::S, i, state.get(Compartment::S, i) - se);
        next.set(Compartment::E, i, state.get(Compartment::E, i) + se - ei);
        next.set(Compartment::I, i, state.get(Compartment::I, i) + ei - ir - id);
        next.set(Compartment::R, i, state.get(Compartment::R, i) + ir);
        next.set(Compartment::D, i, state.get(Compartment::D, i) + id);
    }
    Ok(next)
}
