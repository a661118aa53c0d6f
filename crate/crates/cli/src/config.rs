use std::path::{Path, PathBuf};

use metapop_core::clustering::ClusteringConfig;
use metapop_core::data::ScenarioConfig;
use metapop_core::estimator::FitConfig;
use metapop_core::mobility::PriorConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Keys every config must set. `seed` may come from `--seed` instead.
const REQUIRED: [&str; 3] = ["seed", "pipeline.fit_days", "pipeline.horizon"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed for every stage; also replaces `scenario.seed`.
    pub seed: u64,
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub clustering: ClusteringConfig,
    #[serde(default)]
    pub priors: PriorConfig,
    #[serde(default)]
    pub fit: FitConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Model days used for calibration.
    pub fit_days: usize,
    /// Forecast days after the calibration window.
    pub horizon: usize,
    #[serde(default = "default_window")]
    pub smoothing_window: usize,
    /// Candidate reporting lags; a single entry skips lag tuning.
    #[serde(default = "default_lags")]
    pub lag_grid: Vec<usize>,
    /// Directory holding the input CSVs. Defaults to `<out>/data`, where
    /// `synth` writes.
    #[serde(default)]
    pub inputs: Option<PathBuf>,
}

fn default_window() -> usize {
    7
}

fn default_lags() -> Vec<usize> {
    vec![0]
}

impl RunConfig {
    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, seed)
    }

    pub fn parse(text: &str, seed: Option<u64>) -> Result<Self, CliError> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(s) = seed {
            let s = i64::try_from(s).map_err(|_| CliError::Config(format!("seed {s} is too large")))?;
            table.insert("seed".into(), toml::Value::Integer(s));
        }
        for key in REQUIRED {
            if lookup(&table, key).is_none() {
                return Err(CliError::MissingKey(key.to_string()));
            }
        }
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.scenario.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.pipeline;
        if p.fit_days < 2 {
            return Err(CliError::Config("pipeline.fit_days must be at least 2".into()));
        }
        if p.horizon == 0 {
            return Err(CliError::Config("pipeline.horizon must be at least 1".into()));
        }
        if p.smoothing_window == 0 {
            return Err(CliError::Config("pipeline.smoothing_window must be at least 1".into()));
        }
        if p.lag_grid.is_empty() {
            return Err(CliError::Config("pipeline.lag_grid is empty".into()));
        }
        self.scenario.validate()?;
        self.clustering.validate()?;
        self.priors.validate()?;
        self.fit.validate()?;
        Ok(())
    }

    /// SHA-256 of the resolved config, so equivalent files hash alike.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(text.as_bytes()))
    }
}

fn lookup<'a>(table: &'a toml::Table, dotted: &str) -> Option<&'a toml::Value> {
    let mut parts = dotted.split('.');
    let mut value = table.get(parts.next()?)?;
    for part in parts {
        value = value.as_table()?.get(part)?;
    }
    Some(value)
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "seed = 3\n[pipeline]\nfit_days = 20\nhorizon = 5\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = RunConfig::parse(MINIMAL, None).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.scenario.seed, 3);
        assert_eq!(cfg.pipeline.smoothing_window, 7);
        assert_eq!(cfg.pipeline.lag_grid, vec![0]);
    }

    #[test]
    fn seed_flag_overrides_and_satisfies_the_key() {
        assert_eq!(RunConfig::parse(MINIMAL, Some(9)).unwrap().scenario.seed, 9);
        let no_seed = "[pipeline]\nfit_days = 20\nhorizon = 5\n";
        assert!(matches!(RunConfig::parse(no_seed, None), Err(CliError::MissingKey(k)) if k == "seed"));
        assert_eq!(RunConfig::parse(no_seed, Some(4)).unwrap().seed, 4);
    }

    #[test]
    fn missing_nested_key_is_named() {
        let text = "seed = 1\n[pipeline]\nfit_days = 20\n";
        assert!(matches!(RunConfig::parse(text, None), Err(CliError::MissingKey(k)) if k == "pipeline.horizon"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}[fit]\nrestarts = 3\n");
        assert!(matches!(RunConfig::parse(&text, None), Err(CliError::Config(_))));
    }

    #[test]
    fn hash_ignores_formatting() {
        let a = RunConfig::parse(MINIMAL, None).unwrap();
        let b = RunConfig::parse("seed=3\n\n[pipeline]\nhorizon=5\nfit_days=20", None).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), RunConfig::parse(MINIMAL, Some(4)).unwrap().hash());
    }
}
