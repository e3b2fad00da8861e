//! Experiment configuration: TOML sections with unknown keys rejected, command-line overrides
//! and a content hash of the effective configuration.

use mkolmo_core::calculus::registry::FunctionalParams;
use mkolmo_core::McConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::PathBuf;
use thiserror::Error;

pub const SEED_ENV: &str = "MKOLMO_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: String, line: usize, column: usize, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ItoZakai,
    ItoKs,
    ItoResidual,
    KolmogorovZakai,
    KolmogorovKs,
    PdeResidual,
    ApproximationStudy,
    OracleCrosscheck,
    DerivativeStudy,
    FlatIdentity,
    DerivativeRules,
    MassMoments,
    KalmanBucy,
    Martingale,
    Markov,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalSpec {
    pub name: String,
    pub psi: Option<String>,
    pub psi2: Option<String>,
    pub constant: Option<f64>,
}

impl FunctionalSpec {
    pub fn params(&self) -> FunctionalParams {
        FunctionalParams { psi: self.psi.clone(), psi2: self.psi2.clone(), constant: self.constant }
    }
}

/// An initial measure: a named preset, explicit one-dimensional atoms, or Gaussian atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    pub preset: Option<String>,
    /// `[[x, w], …]`, one-dimensional only.
    pub atoms: Option<Vec<[f64; 2]>>,
    pub gaussian: Option<GaussianSpec>,
    /// Multiplies every weight.
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    pub mean: f64,
    pub var: f64,
    pub atoms: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSpec {
    pub replicas: usize,
    pub particles: usize,
    pub dt: f64,
    pub seed: u64,
    pub horizon: f64,
}

impl Default for McSpec {
    fn default() -> Self {
        let d = McConfig::default();
        Self { replicas: d.replicas, particles: d.particles, dt: d.dt, seed: d.seed, horizon: d.horizon }
    }
}

impl McSpec {
    pub fn mc_config(&self) -> McConfig {
        McConfig {
            replicas: self.replicas,
            particles: self.particles,
            dt: self.dt,
            seed: self.seed,
            horizon: self.horizon,
        }
    }
}

/// Kind-specific parameters. Each experiment reads the fields it needs and falls back to its
/// own defaults for the rest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySpec {
    pub s: Option<f64>,
    pub fd_step: Option<f64>,
    pub spatial_step: Option<f64>,
    pub h_step: Option<f64>,
    pub inner: Option<usize>,
    pub epsilon: Option<f64>,
    pub pairs: Option<usize>,
    pub max_atoms: Option<usize>,
    pub nodes: Option<usize>,
    pub probes: Option<usize>,
    pub seeds: Option<usize>,
    pub ensemble_sizes: Option<Vec<usize>>,
    pub box_radius: Option<f64>,
    pub dts: Option<Vec<f64>>,
    pub equations: Option<Vec<String>>,
    pub functionals: Option<Vec<String>>,
    pub test_functions: Option<Vec<String>>,
    pub points: Option<Vec<f64>>,
    pub paths: Option<usize>,
    pub dx: Option<f64>,
    pub half_width: Option<f64>,
    pub prior_mean: Option<f64>,
    pub prior_var: Option<f64>,
    pub ladder: Option<usize>,
    pub generators: Option<Vec<String>>,
    pub snapshot_stride: Option<usize>,
}

/// Thresholds of the built-in checks. Unset fields take the experiment's defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Assertions {
    pub enabled: bool,
    pub criterion: Option<String>,
    pub tol: Option<f64>,
    pub fd_tol: Option<f64>,
    pub rel_tol: Option<f64>,
    pub z: Option<f64>,
    pub ratio_min: Option<f64>,
    pub ratio_max: Option<f64>,
}

impl Default for Assertions {
    fn default() -> Self {
        Self {
            enabled: true,
            criterion: None,
            tol: None,
            fd_tol: None,
            rel_tol: None,
            z: None,
            ratio_min: None,
            ratio_max: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub kind: ExperimentKind,
    pub model: ModelSpec,
    pub functional: Option<FunctionalSpec>,
    pub measure: Option<MeasureSpec>,
    #[serde(default)]
    pub mc: McSpec,
    #[serde(default)]
    pub study: StudySpec,
    #[serde(default)]
    pub assertions: Assertions,
    #[serde(default)]
    pub output: OutputSpec,
}

/// A parsed configuration together with its canonical text and hash.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    /// The effective configuration (after overrides) as canonical TOML.
    pub canonical: String,
    pub sha256: String,
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn parse_error(path: &str, text: &str, e: toml::de::Error) -> ConfigError {
    let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
    ConfigError::Parse { path: path.to_string(), line, column, message: e.message().to_string() }
}

/// Parses an override value as TOML (numbers, booleans, arrays), falling back to a string.
fn override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), String> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| format!("empty override key {key:?}"))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| format!("override {key}: {p} is not a section"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Maps the short override `seed` to `mc.seed`.
fn normalize_key(key: &str) -> &str {
    match key {
        "seed" => "mc.seed",
        other => other,
    }
}

/// Parses configuration text, then applies `overrides` (dotted keys) and the seed environment
/// variable, in that order.
pub fn load_str(
    path: &str,
    text: &str,
    overrides: &[(String, String)],
    env_seed: Option<&str>,
) -> Result<LoadedConfig, ConfigError> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| parse_error(path, text, e))?;
    // Validate the file itself first so that errors point into it.
    toml::from_str::<ExperimentConfig>(text).map_err(|e| parse_error(path, text, e))?;
    for (k, v) in overrides {
        set_dotted(&mut table, normalize_key(k), override_value(v))
            .map_err(|message| ConfigError::Invalid { path: path.to_string(), message })?;
    }
    if let Some(seed) = env_seed {
        let seed: u64 = seed.trim().parse().map_err(|_| ConfigError::Invalid {
            path: path.to_string(),
            message: format!("{SEED_ENV}={seed:?} is not a u64"),
        })?;
        let seed = i64::try_from(seed)
            .map_err(|_| ConfigError::Invalid { path: path.to_string(), message: format!("{SEED_ENV} too large") })?;
        set_dotted(&mut table, "mc.seed", toml::Value::Integer(seed)).expect("mc is a section");
    }
    let config: ExperimentConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| {
        ConfigError::Invalid { path: path.to_string(), message: format!("after overrides: {}", e.message()) }
    })?;
    let canonical = toml::to_string(&config)
        .map_err(|e| ConfigError::Invalid { path: path.to_string(), message: e.to_string() })?;
    let sha256 = sha256_hex(&canonical);
    Ok(LoadedConfig { config, canonical, sha256 })
}

pub fn load(path: &std::path::Path, overrides: &[(String, String)]) -> Result<LoadedConfig, ConfigError> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: p.clone(), source })?;
    let env = std::env::var(SEED_ENV).ok();
    load_str(&p, &text, overrides, env.as_deref())
}
