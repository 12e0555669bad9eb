//! Method registry and trial runner shared by the sweeps and the benchmark.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::datagen::{rmse, ExperimentSpec, TrialResult};
use crate::error::Result;
use crate::estimators::{LossSpec, Scale};
use crate::solver::{solve, solve_fnorm_baseline, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    RmcHow { sigma: Scale },
    RmcHoc { gamma: Scale },
    RmcHop { p: f64 },
    FnormBaseline,
}

impl Method {
    /// The four methods compared in the sweeps.
    pub fn standard(p: f64, sigma: Scale, gamma: Scale) -> [Method; 4] {
        [Method::RmcHow { sigma }, Method::RmcHoc { gamma }, Method::RmcHop { p }, Method::FnormBaseline]
    }

    pub fn label(&self) -> &'static str {
        match self {
            Method::RmcHow { .. } => "rmc-how",
            Method::RmcHoc { .. } => "rmc-hoc",
            Method::RmcHop { .. } => "rmc-hop",
            Method::FnormBaseline => "fnorm-baseline",
        }
    }

    pub fn loss(&self) -> Option<LossSpec> {
        match *self {
            Method::RmcHow { sigma } => Some(LossSpec::How { sigma }),
            Method::RmcHoc { gamma } => Some(LossSpec::Hoc { gamma }),
            Method::RmcHop { p } => Some(LossSpec::Hop { p }),
            Method::FnormBaseline => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Solver knobs shared by every method in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverKnobs {
    pub xi: f64,
    pub zeta: f64,
    pub max_iters: usize,
    pub warm_start: bool,
}

impl Default for SolverKnobs {
    fn default() -> Self {
        SolverKnobs { xi: 2.0, zeta: 1e-4, max_iters: 500, warm_start: true }
    }
}

/// Generates instance `trial` of `spec` and solves it with `method`.
pub fn run_trial(spec: &ExperimentSpec, method: Method, knobs: SolverKnobs, trial: usize) -> Result<TrialResult> {
    let inst = spec.instance(trial)?;
    let mut cfg = SolverConfig::new(spec.r, method.loss().unwrap_or(LossSpec::Huber));
    cfg.seed = inst.init_seed;
    cfg.xi = knobs.xi;
    cfg.zeta = knobs.zeta;
    cfg.max_iters = knobs.max_iters;
    cfg.warm_start = knobs.warm_start;
    let report = match method {
        Method::FnormBaseline => solve_fnorm_baseline(&inst.observed, &cfg)?,
        _ => solve(&inst.observed, &cfg)?,
    };
    Ok(TrialResult {
        method: method.label().to_string(),
        trial,
        rmse: rmse(&inst.truth.x, &report.factors)?,
        iterations: report.iterations,
        wall_time_seconds: report.wall_time_seconds,
        stop_reason: report.stop_reason.as_str().to_string(),
    })
}

/// Mean RMSE of `method` over all trials of `spec`, run sequentially.
pub fn mean_rmse(spec: &ExperimentSpec, method: Method, knobs: SolverKnobs) -> Result<f64> {
    let mut total = 0.0;
    for t in 0..spec.trials {
        total += run_trial(spec, method, knobs, t)?.rmse;
    }
    Ok(total / spec.trials as f64)
}

/// A benchmark matrix-size case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchCase {
    pub id: usize,
    pub m: usize,
    pub n: usize,
    pub r: usize,
}

pub const BENCH_CASES: [BenchCase; 4] = [
    BenchCase { id: 1, m: 300, n: 200, r: 5 },
    BenchCase { id: 2, m: 600, n: 400, r: 10 },
    BenchCase { id: 3, m: 900, n: 600, r: 15 },
    BenchCase { id: 4, m: 1200, n: 800, r: 20 },
];
