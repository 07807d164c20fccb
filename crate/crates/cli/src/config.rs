//! Experiment configuration files.

use std::fmt;
use std::path::Path;

use nonconv_core::mixing::AssumptionParams;
use nonconv_core::{FunctionSpec, ModelSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "NONCONV_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Variance,
    Covariance,
    Asclt,
    Arcsine,
    Lil,
    Blocks,
    Mixing,
}

impl Suite {
    pub const ALL: [Suite; 7] =
        [Suite::Variance, Suite::Covariance, Suite::Asclt, Suite::Arcsine, Suite::Lil, Suite::Blocks, Suite::Mixing];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Variance => "variance",
            Suite::Covariance => "covariance",
            Suite::Asclt => "asclt",
            Suite::Arcsine => "arcsine",
            Suite::Lil => "lil",
            Suite::Blocks => "blocks",
            Suite::Mixing => "mixing",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Suite::Variance => "Var(Xi(N)/sqrt(N)) over replicas against R(1,1) from the series",
            Suite::Covariance => "series D against the replica estimate of D",
            Suite::Asclt => "log-averaged law of Xi(k)/sqrt(k) against N(0, R(1,1)), plus the Gaussian lane",
            Suite::Arcsine => "log-averaged occupation fractions against the occupation law of Q",
            Suite::Lil => "max over n of |Xi(n)| / sqrt(2 R(1,1) n ln ln n) across seeds",
            Suite::Blocks => "decay of the small-block mass along the block schedule",
            Suite::Mixing => "mixing coefficients and the moment/mixing conditions",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Horizon {
    /// Length of `Xi` for the variance suite.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Horizon of the single-trajectory suites.
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    /// Truncation `U` of the covariance series.
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
    /// Time at which the replica estimate of `D` is taken.
    #[serde(default = "default_n")]
    pub t: usize,
}

fn default_n() -> usize {
    100_000
}
fn default_n_max() -> usize {
    1_000_000
}
fn default_replicas() -> usize {
    200
}
fn default_truncation() -> usize {
    200
}
fn default_tail_tol() -> f64 {
    1e-10
}

impl Default for Horizon {
    fn default() -> Self {
        Self {
            n: default_n(),
            n_max: default_n_max(),
            replicas: default_replicas(),
            truncation: default_truncation(),
            tail_tol: default_tail_tol(),
            t: default_n(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcsineOptions {
    #[serde(default = "default_reference_replicas")]
    pub reference_replicas: usize,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
}

fn default_reference_replicas() -> usize {
    10_000
}
fn default_grid_step() -> f64 {
    1e-3
}

impl Default for ArcsineOptions {
    fn default() -> Self {
        Self { reference_replicas: default_reference_replicas(), grid_step: default_grid_step() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LilOptions {
    #[serde(default = "default_lil_runs")]
    pub runs: usize,
    #[serde(default = "default_lil_lower")]
    pub lower: f64,
    #[serde(default = "default_lil_upper")]
    pub upper: f64,
    #[serde(default = "default_lil_min_inside")]
    pub min_inside: usize,
    /// Also run the protocol on simulated paths of the Gaussian limit.
    #[serde(default = "yes")]
    pub gaussian_lane: bool,
}

fn default_lil_runs() -> usize {
    20
}
fn default_lil_lower() -> f64 {
    0.5
}
fn default_lil_upper() -> f64 {
    1.3
}
fn default_lil_min_inside() -> usize {
    18
}
fn yes() -> bool {
    true
}

impl Default for LilOptions {
    fn default() -> Self {
        Self {
            runs: default_lil_runs(),
            lower: default_lil_lower(),
            upper: default_lil_upper(),
            min_inside: default_lil_min_inside(),
            gaussian_lane: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockOptions {
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub delta: Option<f64>,
    /// Grid `2^lo, ..., 2^hi`.
    #[serde(default = "default_grid_lo")]
    pub grid_lo: u32,
    #[serde(default = "default_grid_hi")]
    pub grid_hi: u32,
    #[serde(default = "default_block_replicas")]
    pub replicas: usize,
}

fn default_eta() -> f64 {
    0.04
}
fn default_theta() -> f64 {
    0.10
}
fn default_tau() -> f64 {
    0.24
}
fn default_grid_lo() -> u32 {
    10
}
fn default_grid_hi() -> u32 {
    20
}
fn default_block_replicas() -> usize {
    400
}

impl Default for BlockOptions {
    fn default() -> Self {
        Self {
            eta: default_eta(),
            theta: default_theta(),
            tau: default_tau(),
            delta: None,
            grid_lo: default_grid_lo(),
            grid_hi: default_grid_hi(),
            replicas: default_block_replicas(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingOptions {
    #[serde(default = "default_depth")]
    pub depth: usize,
    /// Exponents `(p, q, delta, m)`; searched on a grid when absent.
    #[serde(default)]
    pub exponents: Option<Exponents>,
}

fn default_depth() -> usize {
    50
}

impl Default for MixingOptions {
    fn default() -> Self {
        Self { depth: default_depth(), exponents: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exponents {
    pub p: f64,
    pub q: f64,
    pub delta: f64,
    pub m: f64,
}

impl Exponents {
    pub fn with_function(self, f: &FunctionSpec) -> AssumptionParams {
        AssumptionParams {
            p: self.p,
            q: self.q,
            delta: self.delta,
            m: self.m,
            iota: f.holder.iota,
            kappa: f.holder.kappa,
            d: (f.dim * (f.arity - 1)) as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: ModelSpec,
    pub function: FunctionSpec,
    pub suites: Vec<Suite>,
    #[serde(default)]
    pub horizon: Horizon,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub arcsine: ArcsineOptions,
    #[serde(default)]
    pub lil: LilOptions,
    #[serde(default)]
    pub blocks: BlockOptions,
    #[serde(default)]
    pub mixing: MixingOptions,
}

impl ExperimentConfig {
    /// Parses and checks a configuration. `seed_override` replaces the seed.
    pub fn from_json(text: &str, seed_override: Option<u64>) -> Result<Self, CliError> {
        let mut cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(seed) = seed_override {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, honoring [`SEED_ENV`].
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, env_seed()?)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.suites.is_empty() {
            return bad("no suites selected".into());
        }
        self.function.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let h = &self.horizon;
        if h.n == 0 || h.n_max < 3 || h.replicas == 0 || h.t == 0 {
            return bad("horizon values must be positive, with n_max >= 3".into());
        }
        if !(h.tail_tol > 0.0) {
            return bad("tail_tol must be positive".into());
        }
        if self.blocks.grid_lo >= self.blocks.grid_hi || self.blocks.grid_hi > 40 {
            return bad("blocks grid needs grid_lo < grid_hi <= 40".into());
        }
        if self.lil.runs == 0 || self.lil.min_inside > self.lil.runs || !(self.lil.lower < self.lil.upper) {
            return bad("lil options are inconsistent".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization, after any seed override.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| CliError::Config(format!("{SEED_ENV}={v:?} is not a u64"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::Config(format!("{SEED_ENV}: {e}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{"seed": 7, "model": {"kind": "bernoulli", "p": 0.5},
        "function": {"arity": 2, "rule": {"type": "product"}}, "suites": ["variance"]}"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_json(BASE, None).unwrap();
        assert_eq!(cfg.horizon, Horizon::default());
        assert_eq!(cfg.seed, 7);
        assert_eq!(ExperimentConfig::from_json(BASE, Some(9)).unwrap().seed, 9);
    }

    #[test]
    fn rejects_missing_seed_and_unknown_keys() {
        let no_seed = BASE.replace(r#""seed": 7,"#, "");
        assert!(matches!(ExperimentConfig::from_json(&no_seed, None), Err(CliError::Config(_))));
        let extra = BASE.replace(r#""seed": 7,"#, r#""seed": 7, "colour": 1,"#);
        assert!(matches!(ExperimentConfig::from_json(&extra, None), Err(CliError::Config(_))));
        let bad_suite = BASE.replace("variance", "spectral");
        assert!(ExperimentConfig::from_json(&bad_suite, None).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::from_json(BASE, None).unwrap();
        let b = ExperimentConfig::from_json(BASE, Some(8)).unwrap();
        assert_eq!(a.hash(), ExperimentConfig::from_json(BASE, None).unwrap().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
