//! Run configuration: TOML file, dotted `--set` overrides, validation.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use blacknoise::baseline::WhiteCascadeParams;
use blacknoise::cascade::CascadeParams;
use blacknoise::inference::{ChainConfig, LikelihoodSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Black,
    White,
    Diagnostics,
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunMode::Black => write!(f, "black"),
            RunMode::White => write!(f, "white"),
            RunMode::Diagnostics => write!(f, "diagnostics"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeSection {
    pub m: f64,
    pub n: u32,
    /// Gain; omitted means the experiment convention `sqrt(M - 1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(default = "default_r1")]
    pub r1: f64,
    /// Top-level grid step; omitted means the planner-matched value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
}

fn default_r1() -> f64 {
    1.0
}

impl Default for CascadeSection {
    fn default() -> Self {
        CascadeSection {
            m: 4.0,
            n: 3,
            l: None,
            r1: 1.0,
            grid_step: None,
        }
    }
}

impl CascadeSection {
    pub fn resolve(&self) -> Result<CascadeParams> {
        let mut params = CascadeParams::new(self.m, self.n)?;
        params.r1 = self.r1;
        if let Some(l) = self.l {
            params.l = l;
        }
        if let Some(step) = self.grid_step {
            params.grid_step = step;
        }
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LikelihoodSection {
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    #[serde(default = "default_obs_spacing")]
    pub obs_spacing: f64,
}

fn default_noise_sd() -> f64 {
    0.05
}

fn default_obs_spacing() -> f64 {
    0.1
}

impl Default for LikelihoodSection {
    fn default() -> Self {
        LikelihoodSection {
            noise_sd: default_noise_sd(),
            obs_spacing: default_obs_spacing(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSection {
    #[serde(default = "default_n_w")]
    pub n_w: usize,
    #[serde(default = "default_draws_per_w")]
    pub draws_per_w: usize,
}

fn default_n_w() -> usize {
    20
}

fn default_draws_per_w() -> usize {
    10
}

impl Default for MixtureSection {
    fn default() -> Self {
        MixtureSection {
            n_w: default_n_w(),
            draws_per_w: default_draws_per_w(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhiteSection {
    #[serde(default = "default_m_values")]
    pub m_values: Vec<f64>,
    #[serde(default = "default_white_n")]
    pub n: u32,
    #[serde(default = "default_white_samples")]
    pub n_samples: usize,
    /// Grid step; omitted means `r_N / 4` per M value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
}

fn default_m_values() -> Vec<f64> {
    vec![5.0]
}

fn default_white_n() -> u32 {
    6
}

fn default_white_samples() -> usize {
    500
}

impl Default for WhiteSection {
    fn default() -> Self {
        WhiteSection {
            m_values: default_m_values(),
            n: default_white_n(),
            n_samples: default_white_samples(),
            grid_step: None,
        }
    }
}

impl WhiteSection {
    pub fn resolve(&self, m: f64) -> Result<WhiteCascadeParams> {
        let mut params = WhiteCascadeParams::new(m, self.n)?;
        if let Some(step) = self.grid_step {
            params.grid_step = step;
        }
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    #[serde(default = "default_diag_samples")]
    pub n_samples: usize,
    /// Scale ratio of the pushforward variance check.
    #[serde(default = "default_diag_m")]
    pub pushforward_m: f64,
    /// Number of samples of the pushforward variance check.
    #[serde(default = "default_diag_push_samples")]
    pub pushforward_samples: usize,
    /// Gain of the integrated-correlation check.
    #[serde(default = "default_diag_l")]
    pub b_l: f64,
    #[serde(default = "default_diag_lags")]
    pub lags: Vec<f64>,
}

fn default_diag_samples() -> usize {
    10_000
}

fn default_diag_m() -> f64 {
    20.0
}

fn default_diag_push_samples() -> usize {
    2000
}

fn default_diag_l() -> f64 {
    100.0
}

fn default_diag_lags() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 1.5, 2.0, 3.0]
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            n_samples: default_diag_samples(),
            pushforward_m: default_diag_m(),
            pushforward_samples: default_diag_push_samples(),
            b_l: default_diag_l(),
            lags: default_diag_lags(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: RunMode,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    /// 0 means the default thread pool size.
    #[serde(default)]
    pub n_threads: usize,
    /// Number of sample towers persisted to disk.
    #[serde(default = "default_save_towers")]
    pub save_towers: usize,
    #[serde(default)]
    pub cascade: CascadeSection,
    #[serde(default)]
    pub chain: ChainConfigSection,
    #[serde(default)]
    pub likelihood: LikelihoodSection,
    #[serde(default)]
    pub mixture: MixtureSection,
    #[serde(default)]
    pub white: WhiteSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
}

fn default_seed() -> u64 {
    42
}

fn default_save_towers() -> usize {
    8
}

/// Mirror of the core chain configuration with serde defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfigSection {
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_n_burn")]
    pub n_burn: usize,
    #[serde(default = "default_n_keep")]
    pub n_keep: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default = "default_adapt_target")]
    pub adapt_target: f64,
}

fn default_beta() -> f64 {
    0.5
}

fn default_n_burn() -> usize {
    5000
}

fn default_n_keep() -> usize {
    200
}

fn default_thin() -> usize {
    10
}

fn default_adapt_target() -> f64 {
    0.25
}

impl Default for ChainConfigSection {
    fn default() -> Self {
        ChainConfigSection {
            beta: default_beta(),
            n_burn: default_n_burn(),
            n_keep: default_n_keep(),
            thin: default_thin(),
            adapt_target: default_adapt_target(),
        }
    }
}

impl ChainConfigSection {
    pub fn resolve(&self) -> ChainConfig {
        ChainConfig {
            beta: self.beta,
            n_burn: self.n_burn,
            n_keep: self.n_keep,
            thin: self.thin,
            adapt_target: self.adapt_target,
        }
    }
}

impl RunConfig {
    pub fn default_for(mode: RunMode) -> Self {
        RunConfig {
            mode,
            seed: default_seed(),
            out_dir: None,
            n_threads: 0,
            save_towers: default_save_towers(),
            cascade: CascadeSection::default(),
            chain: ChainConfigSection::default(),
            likelihood: LikelihoodSection::default(),
            mixture: MixtureSection::default(),
            white: WhiteSection::default(),
            diagnostics: DiagnosticsSection::default(),
        }
    }

    /// Checks every section and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut errors: Vec<String> = Vec::new();
        match self.mode {
            RunMode::Black => {
                match self.cascade.resolve() {
                    Ok(params) => {
                        if let Err(e) = LikelihoodSpec::with_spacing(
                            &params,
                            self.likelihood.obs_spacing,
                            self.likelihood.noise_sd,
                        ) {
                            errors.push(format!("likelihood: {e}"));
                        }
                    }
                    Err(e) => errors.push(format!("cascade: {e}")),
                }
                if let Err(e) = self.chain.resolve().validate() {
                    errors.push(format!("chain: {e}"));
                }
                if self.mixture.n_w < 1 {
                    errors.push("mixture: n_w must be >= 1".to_string());
                }
                if self.mixture.draws_per_w < 1 {
                    errors.push("mixture: draws_per_w must be >= 1".to_string());
                }
            }
            RunMode::White => {
                if self.white.m_values.is_empty() {
                    errors.push("white: m_values must be nonempty".to_string());
                }
                for &m in &self.white.m_values {
                    if let Err(e) = self.white.resolve(m) {
                        errors.push(format!("white (M = {m}): {e}"));
                    }
                }
                if self.white.n_samples < 30 {
                    errors.push(format!(
                        "white: n_samples must be >= 30, got {}",
                        self.white.n_samples
                    ));
                }
            }
            RunMode::Diagnostics => {
                if self.diagnostics.n_samples < 100 {
                    errors.push("diagnostics: n_samples must be >= 100".to_string());
                }
                if !(self.diagnostics.pushforward_m > 1.0) {
                    errors.push("diagnostics: pushforward_m must be > 1".to_string());
                }
                if !(self.diagnostics.b_l > 0.0) {
                    errors.push("diagnostics: b_l must be > 0".to_string());
                }
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            bail!("invalid configuration:\n  - {}", errors.join("\n  - "))
        }
    }
}

/// Loads a configuration from a TOML file, or from a run manifest (JSON)
/// whose embedded config is extracted for byte-identical reruns.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        let manifest: serde_json::Value = serde_json::from_str(&text)
            .with_context(|| format!("parsing manifest {}", path.display()))?;
        let config = manifest
            .get("config")
            .with_context(|| format!("{}: manifest has no `config` field", path.display()))?;
        return serde_json::from_value(config.clone())
            .with_context(|| format!("{}: bad embedded config", path.display()));
    }
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

/// Applies `key.path=value` overrides on top of a configuration.
pub fn apply_overrides(config: &RunConfig, sets: &[String]) -> Result<RunConfig> {
    if sets.is_empty() {
        return Ok(config.clone());
    }
    let serialized = toml::to_string(config).context("serializing config for override")?;
    let mut root: toml::Table = toml::from_str(&serialized).context("reparsing config")?;
    for set in sets {
        let (path, raw) = set
            .split_once('=')
            .with_context(|| format!("--set expects key=value, got {set:?}"))?;
        let parsed = parse_toml_value(raw.trim());
        let parts: Vec<&str> = path.trim().split('.').collect();
        let (last, parents) = parts.split_last().context("--set key must be nonempty")?;
        let mut table = &mut root;
        for part in parents {
            table = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()))
                .as_table_mut()
                .with_context(|| format!("--set {set:?}: {part} is not a table"))?;
        }
        table.insert(last.to_string(), parsed);
    }
    let text = toml::to_string(&root).context("serializing overridden config")?;
    let config: RunConfig = toml::from_str(&text).context("applying --set overrides")?;
    Ok(config)
}

fn parse_toml_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    if let Ok(parsed) = toml::from_str::<toml::Table>(&doc) {
        if let Some(v) = parsed.get("v") {
            return v.clone();
        }
    }
    toml::Value::String(raw.to_string())
}
