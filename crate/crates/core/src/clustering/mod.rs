//! Grouping of POIs by visitation pattern and geography: a graph-regularized
//! factorization of daily visit densities, k-means in the embedding space,
//! and a geographic split of oversized clusters.

mod embedding;
mod graph;
mod kmeans;
mod membership;

pub use embedding::{embedding_objective, fit_embedding, Embedding, EmbeddingConfig};
pub use graph::{build_graph, haversine, ProximityGraph};
pub use kmeans::{cluster_embedding, kmeans, KMeans};
pub use membership::Membership;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobility::{PoiRecord, HOURS_PER_DAY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub embedding: EmbeddingConfig,
    /// Graph cutoff in meters.
    pub r_cut: f64,
    /// Number of pattern clusters; `None` means one per 20 POIs.
    pub k: Option<usize>,
    pub max_size: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            embedding: EmbeddingConfig::default(),
            r_cut: 1000.0,
            k: None,
            max_size: 50,
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_size == 0 {
            return Err(Error::Config("max_size must be at least 1".into()));
        }
        if self.k == Some(0) {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.embedding.dim == 0 {
            return Err(Error::Config("embedding dim must be at least 1".into()));
        }
        Ok(())
    }

    pub fn k_for(&self, n_pois: usize) -> usize {
        self.k
            .unwrap_or_else(|| (n_pois as f64 / 20.0).round() as usize)
            .clamp(1, n_pois.max(1))
    }
}

/// Daily visits per square foot, one row per POI and one column per day.
pub fn visit_matrix(pois: &[PoiRecord]) -> Result<DMatrix<f64>> {
    let n_days = pois
        .first()
        .map_or(0, |p| p.weeks.iter().map(|w| w.visits.len() / HOURS_PER_DAY).sum());
    let mut x = DMatrix::zeros(pois.len(), n_days);
    for (r, p) in pois.iter().enumerate() {
        let days: Vec<f64> = p
            .weeks
            .iter()
            .flat_map(|w| w.visits.chunks(HOURS_PER_DAY).map(|c| c.iter().sum::<u64>() as f64))
            .collect();
        if days.len() != n_days {
            return Err(Error::Structural(format!(
                "POI {} covers {} days, expected {n_days}",
                p.poi_id,
                days.len()
            )));
        }
        for (t, v) in days.into_iter().enumerate() {
            x[(r, t)] = v / p.area;
        }
    }
    Ok(x)
}

/// Splits every cluster larger than `max_size` into `ceil(size / max_size)`
/// parts by k-means on local planar coordinates.
pub fn geo_split(
    membership: &Membership,
    locations: &[(f64, f64)],
    max_size: usize,
    seed: u64,
) -> Result<Membership> {
    if max_size == 0 {
        return Err(Error::Config("max_size must be at least 1".into()));
    }
    membership.check_len(locations.len())?;
    let mut labels: Vec<(usize, usize)> = membership.labels().iter().map(|c| (*c, 0)).collect();
    for (c, members) in membership.groups().iter().enumerate() {
        if members.len() <= max_size {
            continue;
        }
        let parts = members.len().div_ceil(max_size);
        let lat0 = members.iter().map(|p| locations[*p].0).sum::<f64>() / members.len() as f64;
        let shrink = lat0.to_radians().cos();
        let pts = DMatrix::from_fn(members.len(), 2, |r, j| {
            let (lat, lon) = locations[members[r]];
            if j == 0 { lat } else { lon * shrink }
        });
        let sub_seed = seed ^ (c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let km = kmeans(&pts, parts, sub_seed)?;
        for (r, p) in members.iter().enumerate() {
            labels[*p].1 = km.labels[r];
        }
    }
    Ok(Membership::from_labels(&labels))
}

/// Output of the full clustering stage.
#[derive(Debug, Clone)]
pub struct PoiClustering {
    pub membership: Membership,
    pub embedding: Embedding,
}

pub fn cluster_pois(pois: &[PoiRecord], cfg: &ClusteringConfig, seed: u64) -> Result<PoiClustering> {
    cfg.validate()?;
    if pois.is_empty() {
        return Err(Error::Structural("no POIs to cluster".into()));
    }
    let x = visit_matrix(pois)?;
    let locations: Vec<(f64, f64)> = pois.iter().map(|p| (p.lat, p.lon)).collect();
    let graph = build_graph(&locations, cfg.r_cut)?;
    let mut emb_cfg = cfg.embedding.clone();
    let cap = x.nrows().min(x.ncols());
    if emb_cfg.dim > cap {
        log::warn!("embedding dimension {} reduced to {cap}", emb_cfg.dim);
        emb_cfg.dim = cap;
    }
    let embedding = fit_embedding(&x, &graph, &emb_cfg)?;
    let patterns = cluster_embedding(&embedding.c, cfg.k_for(pois.len()), seed)?;
    let membership = geo_split(&patterns, &locations, cfg.max_size, seed)?;
    Ok(PoiClustering {
        membership,
        embedding,
    })
}
