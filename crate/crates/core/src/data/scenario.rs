use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::CaseDeathSeries;
use crate::clustering::haversine;
use crate::error::{Error, Result};
use crate::estimator::NoiseConfig;
use crate::mobility::{MobilityData, PoiRecord, PoiWeek, SamplingRates, HOURS_PER_DAY, HOURS_PER_WEEK};
use crate::model::{observe, sample_step, Compartment, ContactMatrixSeries, EpidemicParams, MetapopState};

const METERS_PER_DEGREE: f64 = 111_195.0;

/// Hourly shape of a POI group over the week, Monday 00:00 first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Busy on weekday working hours.
    WeekdayDaytime,
    /// Busy on weekday evenings and weekend afternoons.
    EveningWeekend,
    /// Even through opening hours every day.
    AllDay,
}

impl Profile {
    pub fn weight(self, hour_of_week: usize) -> f64 {
        let (day, hour) = (hour_of_week / HOURS_PER_DAY, hour_of_week % HOURS_PER_DAY);
        let weekend = day >= 5;
        match self {
            Profile::WeekdayDaytime => {
                let base = match hour {
                    8..=17 => 1.0,
                    7 | 18 => 0.3,
                    _ => 0.01,
                };
                if weekend { 0.15 * base } else { base }
            }
            Profile::EveningWeekend => match (weekend, hour) {
                (false, 17..=22) => 0.6,
                (false, 11..=16) => 0.15,
                (true, 10..=22) => 1.0,
                _ => 0.01,
            },
            Profile::AllDay => match hour {
                7..=21 => 1.0,
                _ => 0.02,
            },
        }
    }

    /// Normalized weights over the 168 hours of a week.
    pub fn shape(self) -> Vec<f64> {
        let w: Vec<f64> = (0..HOURS_PER_WEEK).map(|h| self.weight(h)).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    }
}

/// A family of POIs sharing a visitation pattern and visitor origins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoiGroup {
    pub name: String,
    /// Fraction of POIs in the group.
    pub poi_share: f64,
    /// Fraction of all visits that go to the group.
    pub visit_share: f64,
    /// Median floor area (square feet).
    pub area: f64,
    /// Median dwell time (hours).
    pub dwell: f64,
    pub profile: Profile,
    /// Total Dirichlet concentration of the hourly distribution.
    pub concentration: f64,
    /// Log change of visit intensity per week.
    pub trend: f64,
    /// Gamma shape of the per-tract origin preferences; large values draw
    /// visitors in proportion to population.
    pub origin_shape: f64,
}

fn default_groups() -> Vec<PoiGroup> {
    vec![
        PoiGroup {
            name: "work".into(),
            poi_share: 0.3,
            visit_share: 0.6,
            area: 20_000.0,
            dwell: 1.0,
            profile: Profile::WeekdayDaytime,
            concentration: 300.0,
            trend: -0.06,
            origin_shape: 2.0,
        },
        PoiGroup {
            name: "leisure".into(),
            poi_share: 0.7,
            visit_share: 0.4,
            area: 3_000.0,
            dwell: 1.5,
            profile: Profile::EveningWeekend,
            concentration: 300.0,
            trend: -0.03,
            origin_shape: 2.0,
        },
    ]
}

/// Observation noise of the simulated reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Gaussian with the estimator's covariance at the true mean.
    Model,
    /// Poisson around the true mean.
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_tracts: usize,
    pub n_pois: usize,
    /// Days of epidemic and reports.
    pub horizon: usize,
    pub params: EpidemicParams,
    pub seed: u64,
    pub start_date: NaiveDate,
    /// Tract populations are drawn uniformly from this range.
    pub population: (f64, f64),
    /// Initial exposed and infected as fractions of each tract.
    pub exposed_frac: f64,
    pub infected_frac: f64,
    /// Seed only the first this-many tracts; `None` seeds all of them.
    pub seeded_tracts: Option<usize>,
    /// Probability that a POI belongs to the dominant group of its tract
    /// rather than to a random group.
    pub zoning: f64,
    /// Log-scale standard deviation of POI areas around their group median.
    /// Visit volume is proportional to area.
    pub area_spread: f64,
    /// Device sampling rates are drawn uniformly from this range.
    pub theta: (f64, f64),
    /// Length scale (meters) of the exponential distance decay between a
    /// POI's tract and its visitors' tracts; `None` mixes the whole city.
    pub locality: Option<f64>,
    pub visits_per_person_week: f64,
    /// Mean daily contacts per person; POI areas are scaled to match.
    pub contacts_per_person: f64,
    /// Distance between neighbouring tract centers (meters).
    pub tract_spacing: f64,
    pub center: (f64, f64),
    pub groups: Vec<PoiGroup>,
    pub noise: NoiseConfig,
    pub noise_mode: NoiseMode,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_tracts: 10,
            n_pois: 1000,
            horizon: 120,
            params: EpidemicParams {
                beta: 0.4,
                kappa: 0.2,
                delta: 0.1,
                rho: 0.01,
            },
            seed: 1,
            start_date: NaiveDate::from_ymd_opt(2020, 7, 20).expect("valid date"),
            population: (40_000.0, 115_000.0),
            exposed_frac: 0.002,
            infected_frac: 0.001,
            seeded_tracts: None,
            zoning: 0.75,
            area_spread: 0.5,
            theta: (0.01, 0.04),
            locality: None,
            visits_per_person_week: 3.0,
            contacts_per_person: 0.7,
            tract_spacing: 2_000.0,
            center: (39.95, -75.16),
            groups: default_groups(),
            noise: NoiseConfig::default(),
            noise_mode: NoiseMode::Model,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_tracts == 0 || self.n_pois == 0 || self.horizon < 2 {
            return bad("scenario needs tracts, POIs and a horizon of at least 2 days".into());
        }
        self.params.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.noise.validate()?;
        let (lo, hi) = self.population;
        if !(lo >= 1.0 && hi >= lo && hi.is_finite()) {
            return bad(format!("invalid population range {:?}", self.population));
        }
        if !(0.0..=1.0).contains(&self.zoning) {
            return bad(format!("zoning must lie in [0, 1], got {}", self.zoning));
        }
        if !(self.area_spread.is_finite() && self.area_spread >= 0.0) {
            return bad(format!("area_spread must be nonnegative, got {}", self.area_spread));
        }
        let (tl, th) = self.theta;
        if !(tl > 0.0 && th >= tl && th <= 1.0) {
            return bad(format!("invalid sampling-rate range {:?}", self.theta));
        }
        if !(self.exposed_frac >= 0.0 && self.infected_frac >= 0.0 && self.exposed_frac + self.infected_frac <= 1.0) {
            return bad("seeding fractions must be nonnegative and sum to at most 1".into());
        }
        if !(self.visits_per_person_week > 0.0 && self.contacts_per_person > 0.0 && self.tract_spacing > 0.0) {
            return bad("visit volume, contact level and tract spacing must be positive".into());
        }
        if let Some(l) = self.locality {
            if !(l.is_finite() && l > 0.0) {
                return bad(format!("locality must be positive, got {l}"));
            }
        }
        if let Some(k) = self.seeded_tracts {
            if k == 0 || k > self.n_tracts {
                return bad(format!("seeded_tracts must lie in 1..={}, got {k}", self.n_tracts));
            }
        }
        if self.groups.is_empty() {
            return bad("at least one POI group is needed".into());
        }
        for g in &self.groups {
            let ok = g.poi_share > 0.0
                && g.visit_share > 0.0
                && g.area > 0.0
                && g.dwell > 0.0
                && g.concentration > 0.0
                && g.trend.is_finite()
                && g.origin_shape > 0.0;
            if !ok {
                return bad(format!("invalid POI group `{}`", g.name));
            }
        }
        Ok(())
    }

    pub fn n_weeks(&self) -> usize {
        self.horizon.div_ceil(7)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tract {
    pub id: String,
    pub population: f64,
    pub lat: f64,
    pub lon: f64,
}

/// A simulated city: ground truth plus everything an analyst would observe.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScenario {
    pub config: ScenarioConfig,
    pub tracts: Vec<Tract>,
    pub params: EpidemicParams,
    pub initial: MetapopState,
    /// Daily true states, `horizon` of them starting with `initial`.
    pub states: Vec<MetapopState>,
    /// Observed POI records.
    pub pois: Vec<PoiRecord>,
    /// Group of every POI.
    pub groups: Vec<usize>,
    pub sampling_rates: SamplingRates,
    /// Observed devices per week and tract.
    pub devices: Vec<Vec<f64>>,
    /// Visit intensity at week 0 (visits per square foot) per group, POI
    /// tract and visitor tract.
    pub nu: Vec<Vec<Vec<f64>>>,
    /// True visitors per POI, week and tract.
    pub true_visitors: Vec<Vec<Vec<u64>>>,
    /// True visits per POI, week and hour bin.
    pub true_visits: Vec<Vec<Vec<u64>>>,
    pub true_contacts: ContactMatrixSeries,
    pub reports: CaseDeathSeries,
}

impl SyntheticScenario {
    pub fn populations(&self) -> Vec<f64> {
        self.tracts.iter().map(|t| t.population).collect()
    }

    pub fn mobility(&self) -> MobilityData {
        MobilityData {
            pois: self.pois.clone(),
            devices: self.devices.clone(),
        }
    }

    /// Expected visitors of POI `p` from each tract in week `w`.
    pub fn visitor_intensity(&self, p: usize, w: usize) -> Vec<f64> {
        let g = &self.config.groups[self.groups[p]];
        let growth = (g.trend * w as f64).exp();
        self.nu[self.groups[p]][self.pois[p].home_tract]
            .iter()
            .map(|nu| nu * self.pois[p].area * growth)
            .collect()
    }

    /// Total exposed plus infected at day 0.
    pub fn initial_infected(&self) -> f64 {
        let n = self.tracts.len();
        (0..n)
            .map(|i| self.initial.get(Compartment::E, i) + self.initial.get(Compartment::I, i))
            .sum()
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn binomial<R: Rng>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("probability in (0, 1)").sample(rng)
}

fn multinomial<R: Rng>(n: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = vec![0; probs.len()];
    let mut left = n;
    let mut mass = 1.0;
    for (k, p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if k + 1 == probs.len() || mass <= 0.0 {
            out[k] = left;
            break;
        }
        let draw = binomial(left, (p / mass).min(1.0), rng);
        out[k] = draw;
        left -= draw;
        mass -= p;
    }
    out
}

fn dirichlet<R: Rng>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let g: Vec<f64> = alpha
        .iter()
        .map(|a| Gamma::new(*a, 1.0).expect("positive shape").sample(rng))
        .collect();
    let s: f64 = g.iter().sum();
    if s > 0.0 {
        g.into_iter().map(|v| v / s).collect()
    } else {
        vec![1.0 / alpha.len() as f64; alpha.len()]
    }
}

/// Samples visits from the hierarchical visit model, builds the true contact
/// networks they imply, runs the stochastic epidemic on them and reports
/// noisy daily cases and deaths.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<SyntheticScenario> {
    cfg.validate()?;
    let n = cfg.n_tracts;
    let seed = cfg.seed;

    // Tracts on a square grid around the center.
    let mut rng = stream(seed, 1);
    let cols = (n as f64).sqrt().ceil() as usize;
    let lat_step = cfg.tract_spacing / METERS_PER_DEGREE;
    let lon_step = lat_step / cfg.center.0.to_radians().cos();
    let tracts: Vec<Tract> = (0..n)
        .map(|i| {
            let (r, c) = ((i / cols) as f64, (i % cols) as f64);
            Tract {
                id: format!("T{i:03}"),
                population: rng.random_range(cfg.population.0..=cfg.population.1).round(),
                lat: cfg.center.0 + (r - 0.5 * (cols - 1) as f64) * lat_step,
                lon: cfg.center.1 + (c - 0.5 * (cols - 1) as f64) * lon_step,
            }
        })
        .collect();
    let pops: Vec<f64> = tracts.iter().map(|t| t.population).collect();
    let total_pop: f64 = pops.iter().sum();
    let theta: Vec<f64> = (0..n).map(|_| rng.random_range(cfg.theta.0..=cfg.theta.1)).collect();

    // POI layout.
    let mut rng = stream(seed, 2);
    let share_total: f64 = cfg.groups.iter().map(|g| g.poi_share).sum();
    let draw_group = |rng: &mut ChaCha8Rng| {
        let mut u = rng.random::<f64>() * share_total;
        cfg.groups
            .iter()
            .position(|g| {
                u -= g.poi_share;
                u < 0.0
            })
            .unwrap_or(cfg.groups.len() - 1)
    };
    let dominant: Vec<usize> = (0..n).map(|_| draw_group(&mut rng)).collect();
    let area_noise = Normal::new(0.0, cfg.area_spread).expect("valid sd");
    let jitter = 0.4 * cfg.tract_spacing / METERS_PER_DEGREE;
    let mut groups = Vec::with_capacity(cfg.n_pois);
    let mut pois: Vec<PoiRecord> = (0..cfg.n_pois)
        .map(|p| {
            let mut u = rng.random::<f64>() * total_pop;
            let home = pops
                .iter()
                .position(|n| {
                    u -= n;
                    u < 0.0
                })
                .unwrap_or(n - 1);
            let g = if rng.random::<f64>() < cfg.zoning {
                dominant[home]
            } else {
                draw_group(&mut rng)
            };
            groups.push(g);
            let grp = &cfg.groups[g];
            let t = &tracts[home];
            let noise: f64 = area_noise.sample(&mut rng);
            PoiRecord {
                poi_id: format!("P{p:05}"),
                area: (grp.area * noise.exp()).round().max(1.0),
                dwell: grp.dwell,
                lat: t.lat + rng.random_range(-jitter..=jitter),
                lon: t.lon + rng.random_range(-jitter..=jitter) / cfg.center.0.to_radians().cos(),
                home_tract: home,
                weeks: Vec::new(),
            }
        })
        .collect();

    // Visit intensities: each group receives its share of all visits. A POI
    // draws visitors by population times a random group preference, decayed
    // with distance from its own tract.
    let decay: Vec<Vec<f64>> = tracts
        .iter()
        .map(|a| {
            tracts
                .iter()
                .map(|b| cfg.locality.map_or(1.0, |l| (-haversine((a.lat, a.lon), (b.lat, b.lon)) / l).exp()))
                .collect()
        })
        .collect();
    let visit_total: f64 = cfg.groups.iter().map(|g| g.visit_share).sum();
    let mut nu = Vec::with_capacity(cfg.groups.len());
    for (g, grp) in cfg.groups.iter().enumerate() {
        let pref: Vec<f64> = pops
            .iter()
            .map(|p| p * Gamma::new(grp.origin_shape, 1.0).expect("positive shape").sample(&mut rng))
            .collect();
        let area: f64 = pois.iter().zip(&groups).filter(|(_, h)| **h == g).map(|(p, _)| p.area).sum();
        let visits = cfg.visits_per_person_week * total_pop * grp.visit_share / visit_total;
        let per_area = if area > 0.0 { visits / area } else { 0.0 };
        nu.push(
            decay
                .iter()
                .map(|k| {
                    let w: Vec<f64> = pref.iter().zip(k).map(|(p, k)| p * k).collect();
                    let sum: f64 = w.iter().sum();
                    w.iter().map(|v| per_area * v / sum).collect()
                })
                .collect::<Vec<Vec<f64>>>(),
        );
    }

    // Weekly visits, their observed thinning, and contacts before scaling.
    let weeks = cfg.n_weeks();
    let mut rng = stream(seed, 3);
    let shapes: Vec<Vec<f64>> = cfg.groups.iter().map(|g| g.profile.shape()).collect();
    let mut true_visitors = vec![Vec::with_capacity(weeks); pois.len()];
    let mut true_visits = vec![Vec::with_capacity(weeks); pois.len()];
    let mut hourly = vec![DMatrix::<f64>::zeros(n, n); weeks * 7];
    for w in 0..weeks {
        for (p, poi) in pois.iter_mut().enumerate() {
            let g = groups[p];
            let grp = &cfg.groups[g];
            let growth = (grp.trend * w as f64).exp();
            let alpha: Vec<f64> = shapes[g].iter().map(|s| (s * grp.concentration).max(1e-3)).collect();
            let mu = dirichlet(&alpha, &mut rng);
            let mut visitors = vec![0u64; n];
            let mut total = vec![0u64; HOURS_PER_WEEK];
            let mut observed = vec![0u64; HOURS_PER_WEEK];
            let mut origins = Vec::new();
            let mut by_tract: Vec<(usize, Vec<u64>)> = Vec::new();
            for i in 0..n {
                let lambda = nu[g][poi.home_tract][i] * poi.area * growth;
                let z = if lambda > 0.0 {
                    Poisson::new(lambda).expect("positive rate").sample(&mut rng) as u64
                } else {
                    0
                };
                visitors[i] = z;
                if z == 0 {
                    continue;
                }
                let y = multinomial(z, &mu, &mut rng);
                let mut x = 0u64;
                for (t, c) in y.iter().enumerate() {
                    total[t] += c;
                    let o = binomial(*c, theta[i], &mut rng);
                    observed[t] += o;
                    x += o;
                }
                if x > 0 {
                    origins.push((i, x as f64));
                }
                by_tract.push((i, y));
            }
            let scale = poi.dwell * poi.dwell / poi.area;
            for t in 0..HOURS_PER_WEEK {
                let day = &mut hourly[w * 7 + t / HOURS_PER_DAY];
                for (a, (i, yi)) in by_tract.iter().enumerate() {
                    let vi = yi[t] as f64;
                    if vi == 0.0 {
                        continue;
                    }
                    day[(*i, *i)] += scale * vi * (vi - 1.0);
                    for (j, yj) in &by_tract[a + 1..] {
                        let v = scale * vi * yj[t] as f64;
                        day[(*i, *j)] += v;
                        day[(*j, *i)] += v;
                    }
                }
            }
            poi.weeks.push(PoiWeek {
                visits: observed,
                origins,
            });
            true_visitors[p].push(visitors);
            true_visits[p].push(total);
        }
    }

    // Scale areas (and intensities, keeping visits fixed) so that contacts
    // per person match the configured level.
    let mean_contacts = hourly.iter().map(|m| m.sum()).sum::<f64>() / (hourly.len() as f64 * total_pop);
    if mean_contacts <= 0.0 {
        return Err(Error::Config("scenario produced no contacts; raise visit volume".into()));
    }
    let s = cfg.contacts_per_person / mean_contacts;
    for p in &mut pois {
        p.area /= s;
    }
    for v in nu.iter_mut().flatten().flatten() {
        *v *= s;
    }
    for m in &mut hourly {
        *m *= s;
    }
    let true_contacts = ContactMatrixSeries::new(hourly)?;

    let mut rng = stream(seed, 4);
    let devices: Vec<Vec<f64>> = (0..weeks)
        .map(|_| {
            pops.iter()
                .zip(&theta)
                .map(|(p, th)| binomial(*p as u64, *th, &mut rng) as f64)
                .collect()
        })
        .collect();

    // Epidemic and reports.
    let seeded = cfg.seeded_tracts.unwrap_or(n);
    let seed_share = |i: usize, frac: f64| if i < seeded { (pops[i] * frac).round() } else { 0.0 };
    let exposed: Vec<f64> = (0..n).map(|i| seed_share(i, cfg.exposed_frac)).collect();
    let infected: Vec<f64> = (0..n).map(|i| seed_share(i, cfg.infected_frac)).collect();
    let initial = MetapopState::seeded(pops.clone(), &exposed, &infected)?;
    let mut rng = stream(seed, 5);
    let mut states = vec![initial.clone()];
    for t in 1..cfg.horizon {
        let m = true_contacts.day(t - 1).expect("weeks cover the horizon");
        let next = sample_step(&states[t - 1], &cfg.params, m, &mut rng)?;
        states.push(next);
    }
    let mut rng = stream(seed, 6);
    let mut cases = Vec::with_capacity(cfg.horizon);
    let mut deaths = Vec::with_capacity(cfg.horizon);
    for s in &states {
        let y = observe(s, &cfg.params);
        let noisy = match cfg.noise_mode {
            NoiseMode::Model => {
                let r = cfg.noise.covariance(&y);
                DVector::from_iterator(
                    2,
                    (0..2).map(|k| y[k] + r[(k, k)].sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal)),
                )
            }
            NoiseMode::Poisson => DVector::from_iterator(
                2,
                (0..2).map(|k| if y[k] > 0.0 { Poisson::new(y[k]).expect("positive").sample(&mut rng) } else { 0.0 }),
            ),
        };
        cases.push(noisy[0].round().max(0.0) as u64);
        deaths.push(noisy[1].round().max(0.0) as u64);
    }
    let reports = CaseDeathSeries::new(cfg.start_date, cases, deaths)?;

    Ok(SyntheticScenario {
        config: cfg.clone(),
        tracts,
        params: cfg.params,
        initial,
        states,
        pois,
        groups,
        sampling_rates: SamplingRates::new(theta)?,
        devices,
        nu,
        true_visitors,
        true_visits,
        true_contacts,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            n_tracts: 4,
            n_pois: 30,
            horizon: 14,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn full_sampling_observes_everything() {
        let cfg = ScenarioConfig {
            theta: (1.0, 1.0),
            ..small()
        };
        let sc = generate_scenario(&cfg).unwrap();
        for (p, poi) in sc.pois.iter().enumerate() {
            for (w, week) in poi.weeks.iter().enumerate() {
                assert_eq!(week.visits, sc.true_visits[p][w]);
                let x: Vec<u64> = week.origins.iter().map(|(_, c)| *c as u64).collect();
                let z: Vec<u64> = sc.true_visitors[p][w].iter().copied().filter(|v| *v > 0).collect();
                assert_eq!(x, z);
            }
        }
    }

    #[test]
    fn reproducible_from_seed() {
        let a = generate_scenario(&small()).unwrap();
        let b = generate_scenario(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_scenario(&ScenarioConfig { seed: 2, ..small() }).unwrap();
        assert_ne!(a.pois, c.pois);
    }

    #[test]
    fn observed_totals_are_consistent() {
        let sc = generate_scenario(&small()).unwrap();
        for poi in &sc.pois {
            poi.validate(4).unwrap();
        }
        for s in &sc.states {
            s.check_invariants().unwrap();
        }
        let c = &sc.true_contacts;
        assert_eq!(c.len(), 14);
        let level = c.days().iter().map(|m| m.sum()).sum::<f64>() / (14.0 * sc.populations().iter().sum::<f64>());
        assert!((level - sc.config.contacts_per_person).abs() < 1e-9);
    }

    #[test]
    fn profiles_are_normalized() {
        for p in [Profile::WeekdayDaytime, Profile::EveningWeekend, Profile::AllDay] {
            assert!((p.shape().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
