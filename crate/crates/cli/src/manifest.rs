//! Run manifests: the fully resolved configuration of every CLI run.
//!
//! A manifest alone is enough to regenerate a run's outputs; `created_at`
//! and the timing columns are the only fields outside that contract.

use rmc_core::datagen::ExperimentSpec;
use rmc_core::experiment::{BenchCase, Method, SolverKnobs};
use rmc_core::solver::SolverConfig;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub seed: u64,
    pub created_at: String,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RunConfig {
    Solve(SolveConfig),
    SweepSnr(SweepConfig),
    SweepFraction(SweepConfig),
    Bench(BenchConfig),
}

impl RunConfig {
    pub fn subcommand(&self) -> &'static str {
        match self {
            RunConfig::Solve(_) => "solve",
            RunConfig::SweepSnr(_) => "sweep-snr",
            RunConfig::SweepFraction(_) => "sweep-fraction",
            RunConfig::Bench(_) => "bench",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            RunConfig::Solve(c) => c.solver.seed,
            RunConfig::SweepSnr(c) | RunConfig::SweepFraction(c) => c.base.seed,
            RunConfig::Bench(c) => c.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub input: PathBuf,
    pub solver: SolverConfig,
    pub dense: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Grid values of the swept field of `base`.
    pub grid: Vec<f64>,
    pub base: ExperimentSpec,
    pub methods: Vec<Method>,
    pub knobs: SolverKnobs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub cases: Vec<BenchCase>,
    pub snr_db: f64,
    pub observe_fraction: f64,
    pub tau: f64,
    pub variance_ratio: f64,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub knobs: SolverKnobs,
}

impl RunManifest {
    pub fn new(config: RunConfig) -> Self {
        RunManifest {
            subcommand: config.subcommand().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            config,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Decodes a manifest; the embedded subcommand must match the config.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let m: RunManifest =
            serde_json::from_str(text).map_err(|e| CliError::Usage(format!("invalid manifest: {e}")))?;
        if m.subcommand != m.config.subcommand() {
            return Err(CliError::Usage(format!(
                "manifest subcommand '{}' does not match its config '{}'",
                m.subcommand,
                m.config.subcommand()
            )));
        }
        Ok(m)
    }
}
