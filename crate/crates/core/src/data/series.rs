use crate::error::{Error, Result};

/// Trailing moving average. The first `window - 1` entries average over the
/// available prefix, so the output has the input's length.
pub fn rolling_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::Structural("cannot smooth an empty series".into()));
    }
    if window == 0 {
        return Err(Error::Config("rolling window must be at least 1".into()));
    }
    let out = (0..series.len())
        .map(|t| {
            let from = (t + 1).saturating_sub(window);
            let part = &series[from..=t];
            (part.iter().sum::<f64>() / part.len() as f64).max(0.0)
        })
        .collect();
    Ok(out)
}

/// Aligns reported values with model days: entry `t` of the result is the
/// value reported on day `t + lag`.
pub fn apply_lag<T: Clone>(series: &[T], lag: usize) -> Result<Vec<T>> {
    if lag >= series.len() {
        return Err(Error::Structural(format!(
            "lag {lag} leaves nothing of a series of length {}",
            series.len()
        )));
    }
    Ok(series[lag..].to_vec())
}
