use nalgebra::DMatrix;

use crate::error::{Error, Result};

const EARTH_RADIUS_M: f64 = 6_371_008.8;
/// Distances below this many meters are treated as this distance.
const MIN_DISTANCE_M: f64 = 1.0;

/// Great-circle distance in meters between two `(lat, lon)` points in degrees.
pub fn haversine(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (la, lb) = (a.0.to_radians(), b.0.to_radians());
    let dlat = lb - la;
    let dlon = (b.1 - a.1).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + la.cos() * lb.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// POIs linked with weight `1 / distance` when within the cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityGraph {
    /// Neighbours of every node, sorted by index, without self-loops.
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl ProximityGraph {
    pub fn from_adjacency(adjacency: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = adjacency.len();
        for (u, row) in adjacency.iter().enumerate() {
            for (v, w) in row {
                if *v >= n || *v == u || !(w.is_finite() && *w >= 0.0) {
                    return Err(Error::Structural(format!("bad edge ({u}, {v}) with weight {w}")));
                }
                let back = adjacency[*v].iter().find(|(x, _)| *x == u).map(|(_, w)| *w);
                if back != Some(*w) {
                    return Err(Error::Structural(format!("edge ({u}, {v}) is not symmetric")));
                }
            }
        }
        Ok(Self { adjacency })
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, u: usize) -> &[(usize, f64)] {
        &self.adjacency[u]
    }

    pub fn degree(&self, u: usize) -> f64 {
        self.adjacency[u].iter().map(|(_, w)| w).sum()
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n_nodes();
        let mut l = DMatrix::zeros(n, n);
        for u in 0..n {
            for (v, w) in &self.adjacency[u] {
                l[(u, *v)] -= w;
                l[(u, u)] += w;
            }
        }
        l
    }

    /// `L C` without forming `L`.
    pub fn laplacian_mul(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(c.nrows(), c.ncols());
        for u in 0..self.n_nodes() {
            for (v, w) in &self.adjacency[u] {
                for k in 0..c.ncols() {
                    out[(u, k)] += w * (c[(u, k)] - c[(*v, k)]);
                }
            }
        }
        out
    }

    /// `tr(C^T L C)` as a sum of weighted squared differences over edges.
    pub fn smoothness(&self, c: &DMatrix<f64>) -> f64 {
        let mut total = 0.0;
        for u in 0..self.n_nodes() {
            for (v, w) in &self.adjacency[u] {
                if *v > u {
                    total += w * (c.row(u) - c.row(*v)).norm_squared();
                }
            }
        }
        total
    }
}

/// Proximity graph over `(lat, lon)` locations with cutoff `r_cut` meters.
pub fn build_graph(locations: &[(f64, f64)], r_cut: f64) -> Result<ProximityGraph> {
    if !(r_cut.is_finite() && r_cut > 0.0) {
        return Err(Error::Config(format!("r_cut must be positive, got {r_cut}")));
    }
    if let Some(p) = locations
        .iter()
        .find(|(la, lo)| !(la.is_finite() && lo.is_finite() && la.abs() <= 90.0))
    {
        return Err(Error::Structural(format!("invalid location {p:?}")));
    }
    let n = locations.len();
    // Sweep in latitude order; two points farther apart in latitude than the
    // cutoff cannot be linked.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| locations[*a].0.total_cmp(&locations[*b].0).then(a.cmp(b)));
    let band = (r_cut / EARTH_RADIUS_M).to_degrees();
    let mut adjacency = vec![Vec::new(); n];
    for (a, &u) in order.iter().enumerate() {
        for &v in &order[a + 1..] {
            if locations[v].0 - locations[u].0 > band {
                break;
            }
            let d = haversine(locations[u], locations[v]);
            if d <= r_cut {
                let w = 1.0 / d.max(MIN_DISTANCE_M);
                adjacency[u].push((v, w));
                adjacency[v].push((u, w));
            }
        }
    }
    for row in &mut adjacency {
        row.sort_by_key(|(v, _)| *v);
    }
    Ok(ProximityGraph { adjacency })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Point `meters` north of `(lat, lon)`.
    fn north(p: (f64, f64), meters: f64) -> (f64, f64) {
        (p.0 + (meters / EARTH_RADIUS_M).to_degrees(), p.1)
    }

    #[test]
    fn two_points_inside_cutoff() {
        let a = (39.95, -75.16);
        let g = build_graph(&[a, north(a, 500.0)], 1000.0).unwrap();
        let l = g.laplacian();
        let w = l[(0, 0)];
        assert!((w - 1.0 / 500.0).abs() < 1e-9);
        assert_eq!(l[(0, 1)], -w);
        assert_eq!(l[(1, 0)], -w);
        assert_eq!(l[(1, 1)], w);
    }

    #[test]
    fn far_points_are_unlinked() {
        let a = (39.95, -75.16);
        let g = build_graph(&[a, north(a, 1500.0)], 1000.0).unwrap();
        assert_eq!(g.laplacian(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn coincident_points_are_capped() {
        let a = (39.95, -75.16);
        let g = build_graph(&[a, a], 1000.0).unwrap();
        assert_eq!(g.neighbors(0), &[(1, 1.0)]);
    }

    #[test]
    fn matches_brute_force() {
        let pts: Vec<(f64, f64)> = (0..60)
            .map(|i| {
                let f = i as f64;
                (39.9 + 0.003 * (f * 7.3).sin(), -75.2 + 0.004 * (f * 3.1).cos())
            })
            .collect();
        let g = build_graph(&pts, 300.0).unwrap();
        let mut edges = 0;
        for u in 0..60 {
            for v in (u + 1)..60 {
                let d = haversine(pts[u], pts[v]);
                let found = g.neighbors(u).iter().any(|(x, _)| *x == v);
                assert_eq!(found, d <= 300.0);
                edges += usize::from(found);
            }
        }
        assert_eq!(edges, g.n_edges());
    }
}
