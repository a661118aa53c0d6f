use std::path::Path;

use super::LikelihoodResult;
use crate::error::{Error, Result};

/// Writes per-step diagnostics: log-likelihood contribution, innovations and
/// the trace of the innovation covariance. Step 0 is unscored and written
/// with a zero contribution.
pub fn write_diagnostics(path: &Path, result: &LikelihoodResult) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let m = result.steps.first().map_or(0, |s| s.innovation.len());
    let mut header = vec!["t".to_string(), "loglik_t".to_string()];
    if m == 2 {
        header.extend(["innov_cases".to_string(), "innov_deaths".to_string()]);
    } else {
        header.extend((0..m).map(|k| format!("innov_{k}")));
    }
    header.push("S_trace".to_string());
    w.write_record(&header).map_err(csv_err)?;
    for (t, s) in result.steps.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.push(if s.scored { s.loglik } else { 0.0 }.to_string());
        row.extend(s.innovation.iter().map(|v| v.to_string()));
        row.push(s.innovation_cov.trace().to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
