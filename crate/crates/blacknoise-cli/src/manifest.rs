//! Run manifest: the resolved configuration plus everything needed to audit
//! or reproduce a run. Written atomically at run end; rerunning with the
//! embedded config and seed reproduces all CSVs byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainManifest {
    pub w_id: u64,
    /// RNG stream driving this chain (the observation path uses its own).
    pub stream_id: u64,
    pub acceptance_rate: f64,
    pub final_beta: f64,
    pub n_draws: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailureManifest {
    pub w_id: u64,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub run_id: String,
    pub software_version: String,
    pub seed: u64,
    pub config: RunConfig,
    /// Wall-clock seconds per phase (prior, cascade, chain, stats, io).
    pub phase_runtimes_secs: BTreeMap<String, f64>,
    #[serde(default)]
    pub chains: Vec<ChainManifest>,
    #[serde(default)]
    pub failures: Vec<FailureManifest>,
    /// Scale ratio per block of rows in h1.csv, in file order. Control runs
    /// sweep several values; posterior runs have exactly one.
    #[serde(default)]
    pub m_blocks: Vec<f64>,
    /// True for the white-noise control, whose levels calibrate the
    /// estimator.
    #[serde(default)]
    pub baseline: bool,
}

impl RunManifest {
    pub fn new(run_id: String, config: RunConfig) -> Self {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            run_id,
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config,
            phase_runtimes_secs: BTreeMap::new(),
            chains: Vec::new(),
            failures: Vec::new(),
            m_blocks: Vec::new(),
            baseline: false,
        }
    }

    /// Atomic write: serialize to a temp file in the run directory, then
    /// rename over the final name.
    pub fn write(&self, run_dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).context("serializing manifest")?;
        let tmp = run_dir.join("manifest.json.tmp");
        let final_path = run_dir.join("manifest.json");
        std::fs::write(&tmp, text).with_context(|| format!("writing {}", tmp.display()))?;
        std::fs::rename(&tmp, &final_path)
            .with_context(|| format!("renaming into {}", final_path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
