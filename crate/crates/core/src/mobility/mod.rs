//! Contact networks from sparse visitation data: device sampling rates,
//! cluster-shared priors, conjugate posteriors over true visits, and the
//! expected contacts they imply.

mod posterior;
mod priors;

pub use posterior::{expected_contacts, posterior_visits, OriginPosterior, PoiPosterior, VisitPosterior};
pub use priors::{dirichlet_multinomial_mle, fit_cluster_priors, ClusterPriors, DirichletFit, PriorConfig};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::clustering::Membership;
use crate::error::{Error, Result};
use crate::model::ContactMatrixSeries;

pub const HOURS_PER_WEEK: usize = 168;
pub const HOURS_PER_DAY: usize = 24;

/// Lowest sampling rate a tract may be assigned.
pub const THETA_MIN: f64 = 0.005;

/// One week of observations at a POI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiWeek {
    /// Observed visits per hour-of-week bin.
    pub visits: Vec<u64>,
    /// Observed visitors by origin tract, sorted by tract with no duplicates.
    /// Real-valued because ingestion may rescale them.
    pub origins: Vec<(usize, f64)>,
}

impl PoiWeek {
    pub fn empty(bins: usize) -> Self {
        Self {
            visits: vec![0; bins],
            origins: Vec::new(),
        }
    }

    pub fn total_visits(&self) -> f64 {
        self.visits.iter().sum::<u64>() as f64
    }

    pub fn total_origins(&self) -> f64 {
        self.origins.iter().map(|(_, c)| c).sum()
    }

    /// Rescales origin counts so they sum to the observed visits. Visits with
    /// no recorded origin are attributed to `home_tract`. Returns whether
    /// anything changed.
    pub fn repair_totals(&mut self, home_tract: usize) -> bool {
        let visits = self.total_visits();
        let origins = self.total_origins();
        if (visits - origins).abs() <= 1e-9 * visits.max(1.0) {
            return false;
        }
        if origins > 0.0 {
            let scale = visits / origins;
            for (_, c) in &mut self.origins {
                *c *= scale;
            }
            self.origins.retain(|(_, c)| *c > 0.0);
        } else {
            self.origins = vec![(home_tract, visits)];
        }
        true
    }
}

/// A place of interest with its weekly visitation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiRecord {
    pub poi_id: String,
    /// Floor area in square feet.
    pub area: f64,
    /// Median dwell time in hours.
    pub dwell: f64,
    pub lat: f64,
    pub lon: f64,
    pub home_tract: usize,
    pub weeks: Vec<PoiWeek>,
}

impl PoiRecord {
    pub fn validate(&self, n_tracts: usize) -> Result<()> {
        let bad = |what: String| Err(Error::Structural(format!("POI {}: {what}", self.poi_id)));
        if !(self.area.is_finite() && self.area > 0.0) {
            return bad(format!("area must be positive, got {}", self.area));
        }
        if !(self.dwell.is_finite() && self.dwell > 0.0) {
            return bad(format!("dwell must be positive, got {}", self.dwell));
        }
        if self.home_tract >= n_tracts {
            return bad(format!("home tract {} out of range", self.home_tract));
        }
        for (w, week) in self.weeks.iter().enumerate() {
            if week.visits.is_empty() {
                return bad(format!("week {w} has no hour bins"));
            }
            let mut last = None;
            for (tract, c) in &week.origins {
                if *tract >= n_tracts || last.is_some_and(|l| l >= *tract) {
                    return bad(format!("week {w} has unsorted or out-of-range origin tract {tract}"));
                }
                if !(c.is_finite() && *c >= 0.0) {
                    return bad(format!("week {w} has invalid origin count {c}"));
                }
                last = Some(*tract);
            }
            let (v, x) = (week.total_visits(), week.total_origins());
            if (v - x).abs() > 1e-6 * v.max(1.0) {
                return bad(format!("week {w} has {v} visits but {x} origin visitors"));
            }
        }
        Ok(())
    }
}

/// Per-tract fraction of devices observed, each in `[THETA_MIN, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingRates(Vec<f64>);

impl SamplingRates {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if let Some(t) = theta.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(Error::Structural(format!("sampling rate must lie in (0, 1], got {t}")));
        }
        Ok(Self(theta))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn estimate_sampling_rates(devices: &[f64], populations: &[f64]) -> Result<SamplingRates> {
    if devices.len() != populations.len() {
        return Err(Error::Structural(format!(
            "{} device counts for {} tracts",
            devices.len(),
            populations.len()
        )));
    }
    let theta = devices
        .iter()
        .zip(populations)
        .enumerate()
        .map(|(i, (d, n))| {
            if !(n.is_finite() && *n > 0.0) {
                return Err(Error::Structural(format!("tract {i} has population {n}")));
            }
            if !(d.is_finite() && *d >= 0.0) {
                return Err(Error::Structural(format!("tract {i} has device count {d}")));
            }
            Ok((d / n).clamp(THETA_MIN, 1.0))
        })
        .collect::<Result<_>>()?;
    SamplingRates::new(theta)
}

/// How POIs are grouped when sharing prior parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkMode {
    /// Every POI is its own cluster.
    None,
    /// POIs grouped by home tract.
    Tract,
    /// POIs grouped by visitation-pattern clustering.
    Pattern,
}

impl NetworkMode {
    pub const ALL: [NetworkMode; 3] = [NetworkMode::None, NetworkMode::Tract, NetworkMode::Pattern];

    pub fn name(self) -> &'static str {
        match self {
            NetworkMode::None => "none",
            NetworkMode::Tract => "tract",
            NetworkMode::Pattern => "pattern",
        }
    }
}

impl std::str::FromStr for NetworkMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(NetworkMode::None),
            "tract" => Ok(NetworkMode::Tract),
            "pattern" => Ok(NetworkMode::Pattern),
            _ => Err(Error::Config(format!("unknown network mode `{s}`"))),
        }
    }
}

impl std::fmt::Display for NetworkMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Cluster membership for a benchmark mode. Pattern mode needs the output
/// of the POI clustering stage.
pub fn benchmark_modes(
    mode: NetworkMode,
    pois: &[PoiRecord],
    pattern: Option<&Membership>,
) -> Result<Membership> {
    match mode {
        NetworkMode::None => Ok(Membership::singletons(pois.len())),
        NetworkMode::Tract => {
            let tracts: Vec<usize> = pois.iter().map(|p| p.home_tract).collect();
            Ok(Membership::from_labels(&tracts))
        }
        NetworkMode::Pattern => {
            let m = pattern.ok_or_else(|| {
                Error::Config("pattern mode needs a POI clustering".to_string())
            })?;
            m.check_len(pois.len())?;
            Ok(m.clone())
        }
    }
}

/// Visitation data over whole weeks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityData {
    pub pois: Vec<PoiRecord>,
    /// Observed devices per week and tract.
    pub devices: Vec<Vec<f64>>,
}

impl MobilityData {
    pub fn n_weeks(&self) -> usize {
        self.devices.len()
    }

    pub fn validate(&self, n_tracts: usize) -> Result<()> {
        for (w, d) in self.devices.iter().enumerate() {
            if d.len() != n_tracts {
                return Err(Error::Structural(format!(
                    "week {w} has device counts for {} of {n_tracts} tracts",
                    d.len()
                )));
            }
        }
        for p in &self.pois {
            p.validate(n_tracts)?;
            if p.weeks.len() != self.n_weeks() {
                return Err(Error::Structural(format!(
                    "POI {} covers {} weeks, devices cover {}",
                    p.poi_id,
                    p.weeks.len(),
                    self.n_weeks()
                )));
            }
        }
        Ok(())
    }
}

/// Runs rates, priors, posteriors and expected contacts week by week and
/// concatenates the daily matrices.
pub fn build_contact_series(
    data: &MobilityData,
    populations: &[f64],
    membership: &Membership,
    cfg: &PriorConfig,
) -> Result<ContactMatrixSeries> {
    let n = populations.len();
    data.validate(n)?;
    membership.check_len(data.pois.len())?;
    let mut days: Vec<DMatrix<f64>> = Vec::new();
    for week in 0..data.n_weeks() {
        let rates = estimate_sampling_rates(&data.devices[week], populations)?;
        let priors = fit_cluster_priors(membership, &data.pois, week, &rates, cfg)?;
        let post = posterior_visits(&data.pois, week, membership, &priors, &rates)?;
        let series = expected_contacts(&post, &data.pois, n, HOURS_PER_DAY)?;
        days.extend(series.days().iter().cloned());
    }
    ContactMatrixSeries::new(days)
}
