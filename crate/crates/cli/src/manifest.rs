use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::hex;
use crate::error::CliError;

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub metapop_cli: &'static str,
    pub metapop_core: &'static str,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    pub wall_time_secs: f64,
    pub versions: Versions,
}

/// Collects the files a run reads and writes, then records them with their
/// hashes in `<out>/manifests/<command>.json`.
pub struct Recorder {
    out: PathBuf,
    started: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn new(out: &Path) -> Self {
        Self {
            out: out.to_path_buf(),
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn read(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.inputs.extend(paths);
    }

    pub fn wrote(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.outputs.extend(paths);
    }

    pub fn finish(self, command: &str, config_path: &Path, config_hash: String, seed: u64) -> Result<PathBuf, CliError> {
        let manifest = RunManifest {
            command: command.to_string(),
            config_path: config_path.display().to_string(),
            config_hash,
            seed,
            inputs: self.entries(&self.inputs)?,
            outputs: self.entries(&self.outputs)?,
            wall_time_secs: self.started.elapsed().as_secs_f64(),
            versions: Versions {
                metapop_cli: env!("CARGO_PKG_VERSION"),
                metapop_core: metapop_core::VERSION,
            },
        };
        let dir = self.out.join("manifests");
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let path = dir.join(format!("{}.json", command.replace(' ', "_")));
        let text = serde_json::to_string_pretty(&manifest).map_err(metapop_core::Error::from)?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    fn entries(&self, paths: &[PathBuf]) -> Result<Vec<FileEntry>, CliError> {
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        for p in paths {
            if !seen.insert(p.clone()) {
                continue;
            }
            let bytes = std::fs::read(p).map_err(|e| CliError::io(p, e))?;
            out.push(FileEntry {
                path: p.strip_prefix(&self.out).unwrap_or(p).display().to_string(),
                sha256: hex(&Sha256::digest(&bytes)),
            });
        }
        Ok(out)
    }
}
