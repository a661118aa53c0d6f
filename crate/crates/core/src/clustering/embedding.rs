use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::ProximityGraph;
use crate::error::{Error, Result};

const RIDGE: f64 = 1e-8;
const REL_TOL: f64 = 1e-6;
/// Rounding slack allowed when checking that an alternation did not
/// increase the objective.
const MONOTONE_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub lambda: f64,
    pub iters: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            lambda: 1.0,
            iters: 100,
        }
    }
}

/// Factorization `X ~ C W` with per-POI coefficients `C` (N x d) and basis
/// patterns `W` (d x T).
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub c: DMatrix<f64>,
    pub w: DMatrix<f64>,
    /// Objective before the first alternation and after each one.
    pub objective: Vec<f64>,
    pub converged: bool,
}

pub fn embedding_objective(
    x: &DMatrix<f64>,
    graph: &ProximityGraph,
    lambda: f64,
    c: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> f64 {
    (x - c * w).norm_squared() + lambda * graph.smoothness(c)
}

/// Minimizes `|X - C W|_F^2 + lambda tr(C^T L C)` by alternating an exact
/// least-squares solve for `W` with a Gauss-Seidel sweep of exact row
/// solves for `C`.
pub fn fit_embedding(x: &DMatrix<f64>, graph: &ProximityGraph, cfg: &EmbeddingConfig) -> Result<Embedding> {
    let (n, t) = x.shape();
    let d = cfg.dim;
    if n == 0 || t == 0 {
        return Err(Error::Structural("visit matrix is empty".into()));
    }
    if d == 0 || d > n.min(t) {
        return Err(Error::Config(format!("embedding dimension {d} must lie in 1..={}", n.min(t))));
    }
    if !(cfg.lambda.is_finite() && cfg.lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be nonnegative, got {}", cfg.lambda)));
    }
    if graph.n_nodes() != n {
        return Err(Error::Structural(format!("graph has {} nodes for {n} POIs", graph.n_nodes())));
    }
    if x.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Structural("visit matrix must be finite and nonnegative".into()));
    }

    // Start from the leading right singular vectors of X.
    let eig = SymmetricEigen::new(x.tr_mul(x));
    let mut idx: Vec<usize> = (0..t).collect();
    idx.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let mut w = DMatrix::from_fn(d, t, |k, j| eig.eigenvectors[(j, idx[k])]);
    let mut c = DMatrix::zeros(n, d);
    let mut objective = vec![embedding_objective(x, graph, cfg.lambda, &c, &w)];
    let floor = 1e-14 * x.norm_squared();
    let mut converged = false;
    for _ in 0..cfg.iters {
        update_c(x, graph, cfg.lambda, &w, &mut c);
        w = solve_w(x, &c);
        let f = embedding_objective(x, graph, cfg.lambda, &c, &w);
        if !f.is_finite() {
            return Err(Error::numeric("embedding objective became non-finite"));
        }
        let prev = *objective.last().expect("seeded above");
        if f > prev * (1.0 + MONOTONE_SLACK) + floor {
            return Err(Error::numeric(format!("embedding objective increased from {prev} to {f}")));
        }
        objective.push(f);
        if prev - f <= REL_TOL * prev + floor {
            converged = true;
            break;
        }
    }
    Ok(Embedding {
        c,
        w,
        objective,
        converged,
    })
}

/// `W = (C^T C)^-1 C^T X`, damped when `C^T C` is singular.
fn solve_w(x: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = c.tr_mul(c);
    let rhs = c.tr_mul(x);
    if let Some(ch) = g.clone().cholesky() {
        return ch.solve(&rhs);
    }
    for k in 0..g.nrows() {
        g[(k, k)] += RIDGE;
    }
    g.cholesky().map_or_else(|| DMatrix::zeros(rhs.nrows(), rhs.ncols()), |ch| ch.solve(&rhs))
}

/// One Gauss-Seidel sweep: each row of `C` is set to the exact minimizer
/// with the other rows held fixed,
/// `C_u (W W^T + lambda deg_u I) = X_u W^T + lambda sum_v w_uv C_v`.
fn update_c(x: &DMatrix<f64>, graph: &ProximityGraph, lambda: f64, w: &DMatrix<f64>, c: &mut DMatrix<f64>) {
    let d = w.nrows();
    let eig = SymmetricEigen::new(w * w.transpose());
    let v = &eig.eigenvectors;
    let scale = eig.eigenvalues.amax().max(1.0);
    let xw = x * w.transpose();
    let mut rhs = vec![0.0; d];
    let mut proj = vec![0.0; d];
    for u in 0..c.nrows() {
        for k in 0..d {
            rhs[k] = xw[(u, k)];
        }
        if lambda > 0.0 {
            for (nb, wt) in graph.neighbors(u) {
                for k in 0..d {
                    rhs[k] += lambda * wt * c[(*nb, k)];
                }
            }
        }
        let shift = lambda * graph.degree(u);
        for (a, p) in proj.iter_mut().enumerate() {
            let mut den = eig.eigenvalues[a] + shift;
            if den <= 1e-12 * scale {
                den += RIDGE;
            }
            *p = (0..d).map(|k| rhs[k] * v[(k, a)]).sum::<f64>() / den;
        }
        for k in 0..d {
            c[(u, k)] = (0..d).map(|a| proj[a] * v[(k, a)]).sum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::build_graph;

    #[test]
    fn rank_one_is_exact_without_regularization() {
        let a = DMatrix::from_fn(30, 1, |i, _| 1.0 + i as f64 * 0.1);
        let b = DMatrix::from_fn(1, 12, |_, j| (j as f64 * 0.5).sin().abs());
        let x = &a * &b;
        let locs: Vec<_> = (0..30).map(|i| (40.0 + 1e-4 * i as f64, -75.0)).collect();
        let g = build_graph(&locs, 1000.0).unwrap();
        let cfg = EmbeddingConfig { dim: 1, lambda: 0.0, iters: 50 };
        let e = fit_embedding(&x, &g, &cfg).unwrap();
        assert!(*e.objective.last().unwrap() <= 1e-8);
    }

    #[test]
    fn dimension_is_checked() {
        let x = DMatrix::from_element(3, 2, 1.0);
        let g = ProximityGraph::from_adjacency(vec![vec![]; 3]).unwrap();
        let cfg = EmbeddingConfig { dim: 3, lambda: 0.0, iters: 5 };
        assert!(matches!(fit_embedding(&x, &g, &cfg), Err(Error::Config(_))));
    }
}
