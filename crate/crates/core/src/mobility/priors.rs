use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use super::{PoiRecord, SamplingRates};
use crate::clustering::Membership;
use crate::error::{Error, Result};

/// Smallest concentration kept for a bin that never sees a visit.
const ZETA_FLOOR: f64 = 1e-10;
const CONCENTRATION_CAP: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Symmetric concentration per bin used when a cluster has no visits.
    pub zeta0: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            zeta0: 0.1,
            max_iters: 500,
            tol: 1e-8,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta0.is_finite() && self.zeta0 > 0.0) {
            return Err(Error::Config(format!("zeta0 must be positive, got {}", self.zeta0)));
        }
        if self.max_iters == 0 || !(self.tol > 0.0) {
            return Err(Error::Config("prior fit needs max_iters >= 1 and tol > 0".into()));
        }
        Ok(())
    }
}

/// Priors shared by the POIs of each cluster for one week.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPriors {
    /// Dirichlet concentration over hour bins, per cluster.
    pub zeta: Vec<Vec<f64>>,
    /// Visits per square foot per week, per cluster and tract.
    pub nu: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirichletFit {
    pub alpha: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximum-likelihood Dirichlet concentration for count vectors drawn from a
/// Dirichlet-multinomial. Count vectors with no mass carry no information
/// and are skipped; returns `None` when nothing is left.
pub fn dirichlet_multinomial_mle(
    counts: &[&[u64]],
    max_iters: usize,
    tol: f64,
) -> Option<DirichletFit> {
    let bins = counts.first()?.len();
    let rows: Vec<&[u64]> = counts.iter().copied().filter(|c| c.iter().any(|v| *v > 0)).collect();
    if rows.is_empty() {
        return None;
    }
    // Only nonzero counts contribute to psi(v + a) - psi(a); group repeats.
    let mut per_bin: Vec<Vec<(u64, f64)>> = vec![Vec::new(); bins];
    for (k, group) in per_bin.iter_mut().enumerate() {
        let mut vals: Vec<u64> = rows.iter().map(|r| r[k]).filter(|v| *v > 0).collect();
        vals.sort_unstable();
        for v in vals {
            match group.last_mut() {
                Some((last, m)) if *last == v => *m += 1.0,
                _ => group.push((v, 1.0)),
            }
        }
    }
    let mut totals: Vec<(u64, f64)> = Vec::new();
    let mut ns: Vec<u64> = rows.iter().map(|r| r.iter().sum()).collect();
    ns.sort_unstable();
    for v in ns {
        match totals.last_mut() {
            Some((last, m)) if *last == v => *m += 1.0,
            _ => totals.push((v, 1.0)),
        }
    }

    let mut alpha = moment_start(&rows);
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        let a0: f64 = alpha.iter().sum();
        let den: f64 = totals.iter().map(|(n, m)| m * (digamma(*n as f64 + a0) - digamma(a0))).sum();
        let mut change = 0.0f64;
        for (a, group) in alpha.iter_mut().zip(&per_bin) {
            let num: f64 = group.iter().map(|(v, m)| m * (digamma(*v as f64 + *a) - digamma(*a))).sum();
            let next = (*a * num / den).max(ZETA_FLOOR);
            change = change.max((next - *a).abs() / a.max(1e-300));
            *a = next;
        }
        let a0: f64 = alpha.iter().sum();
        if a0 > CONCENTRATION_CAP {
            let s = CONCENTRATION_CAP / a0;
            alpha.iter_mut().for_each(|a| *a = (*a * s).max(ZETA_FLOOR));
            break;
        }
        if change < tol {
            converged = true;
            break;
        }
    }
    Some(DirichletFit {
        alpha,
        iterations,
        converged,
    })
}

/// Pooled bin proportions scaled by a precision matched to the spread of the
/// per-row proportions.
fn moment_start(rows: &[&[u64]]) -> Vec<f64> {
    let bins = rows[0].len();
    let ns: Vec<f64> = rows.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let total: f64 = ns.iter().sum();
    let mean: Vec<f64> = (0..bins)
        .map(|k| rows.iter().map(|r| r[k] as f64).sum::<f64>() / total)
        .collect();
    let mut spread = 0.0;
    for (r, n) in rows.iter().zip(&ns) {
        for k in 0..bins {
            spread += (r[k] as f64 / n - mean[k]).powi(2);
        }
    }
    spread /= rows.len() as f64;
    let binom: f64 = mean.iter().map(|m| m * (1.0 - m)).sum();
    let inv_n = ns.iter().map(|n| 1.0 / n).sum::<f64>() / ns.len() as f64;
    // spread / binom ~ inv_n + (1 - inv_n) / (s + 1)
    let excess = spread / binom.max(1e-300) - inv_n;
    let s = if excess > 1e-12 && inv_n < 1.0 {
        ((1.0 - inv_n) / excess - 1.0).clamp(1e-2, 1e6)
    } else {
        1e6
    };
    mean.iter().map(|m| (m * s).max(ZETA_FLOOR)).collect()
}

/// Fits the temporal prior and per-tract visit intensities of every cluster
/// from week `week` of the records.
pub fn fit_cluster_priors(
    membership: &Membership,
    pois: &[PoiRecord],
    week: usize,
    rates: &SamplingRates,
    cfg: &PriorConfig,
) -> Result<ClusterPriors> {
    cfg.validate()?;
    membership.check_len(pois.len())?;
    let n = rates.len();
    let theta = rates.as_slice();
    let bins = pois
        .first()
        .and_then(|p| p.weeks.get(week))
        .map_or(super::HOURS_PER_WEEK, |w| w.visits.len());
    for p in pois {
        let w = p.weeks.get(week).ok_or_else(|| {
            Error::Structural(format!("POI {} has no week {week}", p.poi_id))
        })?;
        if w.visits.len() != bins {
            return Err(Error::Structural(format!(
                "POI {} has {} hour bins, expected {bins}",
                p.poi_id,
                w.visits.len()
            )));
        }
        if let Some((t, _)) = w.origins.iter().find(|(t, _)| *t >= n) {
            return Err(Error::Structural(format!("POI {} origin tract {t} out of range", p.poi_id)));
        }
    }
    let groups = membership.groups();
    let fitted: Vec<(Vec<f64>, Vec<f64>)> = groups
        .par_iter()
        .map(|members| {
            let mut visitors = vec![0.0; n];
            let mut area = 0.0;
            for &p in members {
                area += pois[p].area;
                for (t, c) in &pois[p].weeks[week].origins {
                    visitors[*t] += c;
                }
            }
            let nu = visitors
                .iter()
                .zip(theta)
                .map(|(x, th)| if *x > 0.0 { x / (th * area) } else { 0.0 })
                .collect();
            let counts: Vec<&[u64]> = members.iter().map(|&p| pois[p].weeks[week].visits.as_slice()).collect();
            let zeta = dirichlet_multinomial_mle(&counts, cfg.max_iters, cfg.tol)
                .map_or_else(|| vec![cfg.zeta0; bins], |f| f.alpha);
            (zeta, nu)
        })
        .collect();
    let (zeta, nu) = fitted.into_iter().unzip();
    Ok(ClusterPriors { zeta, nu })
}
