use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::Membership;
use crate::error::{Error, Result};

const MAX_LLOYD_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centers: DMatrix<f64>,
    /// Within-cluster sum of squares after seeding and after each Lloyd
    /// iteration.
    pub wcss: Vec<f64>,
}

fn sq_dist(points: &DMatrix<f64>, p: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    (0..points.ncols()).map(|k| (points[(p, k)] - centers[(c, k)]).powi(2)).sum()
}

/// Nearest center of every point, ties to the lowest center index.
fn assign(points: &DMatrix<f64>, centers: &DMatrix<f64>) -> Vec<(usize, f64)> {
    (0..points.nrows())
        .into_par_iter()
        .map(|p| {
            (0..centers.nrows())
                .map(|c| (c, sq_dist(points, p, centers, c)))
                .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
        })
        .collect()
}

fn plus_plus(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let (n, dim) = points.shape();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|p| (0..dim).map(|j| (points[(p, j)] - points[(chosen[0], j)]).powi(2)).sum())
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (p, w) in d2.iter().enumerate() {
                if u < *w {
                    pick = p;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            (0..n).find(|p| !chosen.contains(p)).unwrap_or(0)
        };
        chosen.push(next);
        for (p, dp) in d2.iter_mut().enumerate() {
            let d: f64 = (0..dim).map(|j| (points[(p, j)] - points[(next, j)]).powi(2)).sum();
            *dp = dp.min(d);
        }
    }
    DMatrix::from_fn(k, dim, |c, j| points[(chosen[c], j)])
}

/// k-means with k-means++ seeding and Lloyd iterations. A cluster left
/// empty takes the point farthest from its current center.
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64) -> Result<KMeans> {
    let (n, dim) = points.shape();
    if k == 0 || k > n {
        return Err(Error::Config(format!("k = {k} must lie in 1..={n}")));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::Structural("k-means points must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus(points, k, &mut rng);
    let mut assigned = assign(points, &centers);
    let mut wcss = vec![assigned.iter().map(|(_, d)| d).sum::<f64>()];
    for _ in 0..MAX_LLOYD_ITERS {
        let mut sums = DMatrix::<f64>::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (p, (c, _)) in assigned.iter().enumerate() {
            counts[*c] += 1;
            for j in 0..dim {
                sums[(*c, j)] += points[(p, j)];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..dim {
                    centers[(c, j)] = sums[(c, j)] / counts[c] as f64;
                }
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = assigned
                    .iter()
                    .enumerate()
                    .filter(|(_, (owner, _))| counts[*owner] > 1)
                    .fold((None, -1.0), |best, (p, (_, d))| if *d > best.1 { (Some(p), *d) } else { best });
                if let (Some(p), _) = far {
                    counts[assigned[p].0] -= 1;
                    counts[c] = 1;
                    assigned[p] = (c, 0.0);
                    for j in 0..dim {
                        centers[(c, j)] = points[(p, j)];
                    }
                }
            }
        }
        let next = assign(points, &centers);
        let changed = next.iter().zip(&assigned).any(|(a, b)| a.0 != b.0);
        assigned = next;
        wcss.push(assigned.iter().map(|(_, d)| d).sum());
        if !changed {
            break;
        }
    }
    Ok(KMeans {
        labels: assigned.into_iter().map(|(c, _)| c).collect(),
        centers,
        wcss,
    })
}

/// Clusters the rows of an embedding.
pub fn cluster_embedding(c: &DMatrix<f64>, k: usize, seed: u64) -> Result<Membership> {
    Ok(Membership::from_labels(&kmeans(c, k, seed)?.labels))
}
