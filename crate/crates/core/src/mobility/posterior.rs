use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Discrete, Poisson};

use super::{ClusterPriors, PoiRecord, SamplingRates};
use crate::clustering::Membership;
use crate::error::{Error, Result};
use crate::model::ContactMatrixSeries;

/// Posterior of the true visitor count `z = observed + Poisson(residual)`
/// from one tract.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OriginPosterior {
    pub tract: usize,
    pub observed: f64,
    pub residual: f64,
}

impl OriginPosterior {
    pub fn mean(&self) -> f64 {
        self.observed + self.residual
    }

    /// `E[z (z - 1)]`.
    pub fn factorial_moment(&self) -> f64 {
        let m = self.mean();
        m * m - self.observed
    }

    /// Posterior probability of `z` visitors; needs an integer observed count.
    pub fn pmf(&self, z: u64) -> f64 {
        let x = self.observed.round();
        if (z as f64) < x {
            return 0.0;
        }
        let k = z - x as u64;
        if self.residual == 0.0 {
            return if k == 0 { 1.0 } else { 0.0 };
        }
        Poisson::new(self.residual).map_or(0.0, |p| p.pmf(k))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiPosterior {
    /// Dirichlet parameters of the hourly visit distribution.
    pub alpha: Vec<f64>,
    /// Tracts with observed visitors or a positive residual intensity.
    pub origins: Vec<OriginPosterior>,
}

impl PoiPosterior {
    pub fn mean_mu(&self) -> Vec<f64> {
        let a0: f64 = self.alpha.iter().sum();
        self.alpha.iter().map(|a| a / a0).collect()
    }

    /// `E[mu_t^2]` for every bin.
    pub fn mu_second_moments(&self) -> Vec<f64> {
        let a0: f64 = self.alpha.iter().sum();
        self.alpha.iter().map(|a| a * (a + 1.0) / (a0 * (a0 + 1.0))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitPosterior {
    pub pois: Vec<PoiPosterior>,
}

/// Conjugate posteriors of the hourly distribution and true visitor counts
/// of every POI in week `week`.
pub fn posterior_visits(
    pois: &[PoiRecord],
    week: usize,
    membership: &Membership,
    priors: &ClusterPriors,
    rates: &SamplingRates,
) -> Result<VisitPosterior> {
    membership.check_len(pois.len())?;
    if priors.zeta.len() != membership.n_clusters() || priors.nu.len() != membership.n_clusters() {
        return Err(Error::Structural(format!(
            "priors for {} clusters, membership has {}",
            priors.zeta.len(),
            membership.n_clusters()
        )));
    }
    let theta = rates.as_slice();
    let posts = pois
        .par_iter()
        .enumerate()
        .map(|(p, rec)| {
            let k = membership.cluster_of(p);
            let w = rec.weeks.get(week).ok_or_else(|| {
                Error::Structural(format!("POI {} has no week {week}", rec.poi_id))
            })?;
            let zeta = &priors.zeta[k];
            if zeta.len() != w.visits.len() {
                return Err(Error::Structural(format!(
                    "POI {} has {} bins, prior has {}",
                    rec.poi_id,
                    w.visits.len(),
                    zeta.len()
                )));
            }
            let alpha = zeta.iter().zip(&w.visits).map(|(z, v)| z + *v as f64).collect();
            let nu = &priors.nu[k];
            let mut observed = w.origins.iter().peekable();
            let mut origins = Vec::new();
            for (i, (n_i, th)) in nu.iter().zip(theta).enumerate() {
                let x = match observed.peek() {
                    Some((t, c)) if *t == i => {
                        observed.next();
                        *c
                    }
                    _ => 0.0,
                };
                let residual = n_i * rec.area * (1.0 - th);
                if x > 0.0 || residual > 0.0 {
                    origins.push(OriginPosterior {
                        tract: i,
                        observed: x,
                        residual,
                    });
                }
            }
            Ok(PoiPosterior { alpha, origins })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VisitPosterior { pois: posts })
}

/// Expected contacts between tracts, one matrix per `bins_per_day` hour
/// bins. Each POI adds `dwell^2 / area` times the expected number of ordered
/// visitor pairs present in the same bin.
pub fn expected_contacts(
    posterior: &VisitPosterior,
    pois: &[PoiRecord],
    n_tracts: usize,
    bins_per_day: usize,
) -> Result<ContactMatrixSeries> {
    if posterior.pois.len() != pois.len() {
        return Err(Error::Structural(format!(
            "posterior covers {} POIs, records {}",
            posterior.pois.len(),
            pois.len()
        )));
    }
    let Some(first) = posterior.pois.first() else {
        return ContactMatrixSeries::new(Vec::new());
    };
    let bins = first.alpha.len();
    if bins_per_day == 0 || bins % bins_per_day != 0 {
        return Err(Error::Structural(format!(
            "{bins} bins do not split into days of {bins_per_day}"
        )));
    }
    let n_days = bins / bins_per_day;
    let weights: Vec<Vec<f64>> = posterior
        .pois
        .par_iter()
        .zip(pois)
        .map(|(post, rec)| {
            if post.alpha.len() != bins {
                return Err(Error::Structural(format!("POI {} has a different bin count", rec.poi_id)));
            }
            if let Some(o) = post.origins.iter().find(|o| o.tract >= n_tracts) {
                return Err(Error::Structural(format!("origin tract {} out of range", o.tract)));
            }
            let scale = rec.dwell * rec.dwell / rec.area;
            let m2 = post.mu_second_moments();
            Ok(m2.chunks(bins_per_day).map(|c| scale * c.iter().sum::<f64>()).collect())
        })
        .collect::<Result<_>>()?;

    let mut days = vec![DMatrix::<f64>::zeros(n_tracts, n_tracts); n_days];
    for (post, w) in posterior.pois.iter().zip(&weights) {
        let o = &post.origins;
        for (a, oa) in o.iter().enumerate() {
            let diag = oa.factorial_moment();
            for (day, m) in days.iter_mut().enumerate() {
                m[(oa.tract, oa.tract)] += w[day] * diag;
            }
            for ob in &o[a + 1..] {
                let pair = oa.mean() * ob.mean();
                for (day, m) in days.iter_mut().enumerate() {
                    let v = w[day] * pair;
                    m[(oa.tract, ob.tract)] += v;
                    m[(ob.tract, oa.tract)] += v;
                }
            }
        }
    }
    ContactMatrixSeries::new(days)
}
