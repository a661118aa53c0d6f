use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Latin hypercube sample of `n` points in the box `ranges`: along every
/// coordinate each of the `n` equal-width strata holds exactly one point.
pub fn lhs_sample(n: usize, ranges: &[(f64, f64)], seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::Config("latin hypercube needs at least one point".into()));
    }
    for (k, (lo, hi)) in ranges.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::Config(format!(
                "sampling range {k} is invalid: [{lo}, {hi}]"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = vec![Vec::with_capacity(ranges.len()); n];
    let mut strata: Vec<usize> = (0..n).collect();
    for (lo, hi) in ranges {
        strata.shuffle(&mut rng);
        for (point, s) in points.iter_mut().zip(&strata) {
            let u: f64 = rng.random();
            point.push(lo + (hi - lo) * (*s as f64 + u) / n as f64);
        }
    }
    Ok(points)
}
