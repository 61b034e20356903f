//! Run manifest: everything needed to reproduce a backtest.

use std::path::Path;
use std::time::Duration;

use regime_var::BacktestConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliResult;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Written next to the result files. `backtest --config manifest.json`
/// re-runs with the recorded configuration.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub config: BacktestConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub evaluation_dates: usize,
    pub failed_cells: usize,
    pub timing: Vec<StageTiming>,
}

pub fn file_digest(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn describe(path: &Path) -> CliResult<FileDigest> {
    let bytes = std::fs::metadata(path)
        .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?
        .len();
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: file_digest(path)?,
        bytes,
    })
}

impl RunManifest {
    pub fn new(config: BacktestConfig, threads: Option<usize>) -> Self {
        Self {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            command: "backtest".into(),
            seed: config.seed,
            threads,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            evaluation_dates: 0,
            failed_cells: 0,
            timing: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> CliResult {
        self.inputs.push(describe(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> CliResult {
        self.outputs.push(describe(path)?);
        Ok(())
    }

    pub fn stage(&mut self, name: &str, elapsed: Duration) {
        self.timing.push(StageTiming {
            stage: name.into(),
            seconds: elapsed.as_secs_f64(),
        });
    }

    pub fn write(&self, path: &Path) -> CliResult {
        let text = serde_json::to_string_pretty(self).map_err(anyhow::Error::from)?;
        std::fs::write(path, text + "\n").map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        Ok(())
    }
}
