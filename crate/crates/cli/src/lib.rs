//! The `rmc` command-line tool.
//!
//! Every subcommand resolves its flags into a [`RunConfig`], writes it as
//! `manifest.json` next to its outputs, and then executes it. `rmc replay`
//! executes a stored manifest, so a manifest is all that is needed to
//! regenerate a run.
//!
//! Output schemas (comma-separated, UTF-8, header row always present):
//!
//! * `results.csv`: `method,<axis>,trial,rmse,iterations,stop_reason,seconds`
//!   where `<axis>` is `snr_db` or `observe_fraction`;
//! * `summary.csv`: `method,<axis>,trials,mean_rmse,mean_iterations,mean_seconds`;
//! * `bench.csv`: `method,case,m,n,r,trials,mean_seconds,mean_iterations,mean_seconds_per_iteration`.
//!
//! Columns named `seconds`/`mean_seconds*` and the manifest's `created_at`
//! are wall-clock measurements; everything else is reproducible bit for bit.

pub mod args;
pub mod manifest;

use rayon::prelude::*;
use rmc_core::datagen::{ExperimentSpec, TrialResult};
use rmc_core::estimators::{LossSpec, Scale};
use rmc_core::experiment::{run_trial, BenchCase, Method, SolverKnobs, BENCH_CASES};
use rmc_core::mtx::{self, MtxError};
use rmc_core::solver::{solve, SolverConfig, StopReason};
use serde::Serialize;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

use args::{BenchArgs, Cli, Command, ExperimentArgs, LossArgs, LossKind, SolveArgs, SolverArgs};
pub use manifest::{BenchConfig, RunConfig, RunManifest, SolveConfig, SweepConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: MtxError },
    #[error(transparent)]
    Core(#[from] rmc_core::Error),
    #[error("solver aborted: {0}")]
    SolverAbort(String),
}

impl CliError {
    /// 1 for a solver abort, 2 for usage and I/O problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::SolverAbort(_) => 1,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(a) => {
            let cfg = resolve_solve(&a)?;
            execute(&RunManifest::new(cfg), &a.out, 0)
        }
        Command::SweepSnr(a) => {
            let cfg = RunConfig::SweepSnr(resolve_sweep(
                &a.exp,
                a.snr_grid.clone(),
                |spec, g| spec.snr_db = g,
                |spec| spec.observe_fraction = a.observe_fraction,
            )?);
            execute(&RunManifest::new(cfg), &a.exp.out, a.exp.jobs)
        }
        Command::SweepFraction(a) => {
            let cfg = RunConfig::SweepFraction(resolve_sweep(
                &a.exp,
                a.fraction_grid.clone(),
                |spec, g| spec.observe_fraction = g,
                |spec| spec.snr_db = a.snr_db,
            )?);
            execute(&RunManifest::new(cfg), &a.exp.out, a.exp.jobs)
        }
        Command::Bench(a) => {
            let cfg = resolve_bench(&a)?;
            execute(&RunManifest::new(cfg), &a.out, 1)
        }
        Command::Replay(a) => {
            let text = fs::read_to_string(&a.manifest).map_err(io_err(&a.manifest))?;
            let manifest = RunManifest::from_json(&text)?;
            execute(&manifest, &a.out, 0)
        }
    }
}

fn scale(v: Option<f64>) -> Scale {
    v.map_or(Scale::Threshold, Scale::Fixed)
}

fn loss_spec(kind: LossKind, a: &LossArgs) -> LossSpec {
    match kind {
        LossKind::How => LossSpec::How { sigma: scale(a.sigma) },
        LossKind::Hoc => LossSpec::Hoc { gamma: scale(a.gamma) },
        LossKind::Hop => LossSpec::Hop { p: a.p },
        LossKind::Huber => LossSpec::Huber,
    }
}

fn methods(a: &LossArgs) -> Result<Vec<Method>, CliError> {
    let ms = Method::standard(a.p, scale(a.sigma), scale(a.gamma));
    for m in &ms {
        if let Some(l) = m.loss() {
            l.validate().map_err(rmc_core::Error::from)?;
        }
    }
    Ok(ms.to_vec())
}

fn knobs(a: &SolverArgs) -> SolverKnobs {
    SolverKnobs { xi: a.xi, zeta: a.zeta, max_iters: a.max_iters, warm_start: !a.no_warm_start }
}

fn resolve_solve(a: &SolveArgs) -> Result<RunConfig, CliError> {
    let mut solver = SolverConfig::new(a.rank, loss_spec(a.loss, &a.loss_args));
    solver.xi = a.solver.xi;
    solver.zeta = a.solver.zeta;
    solver.max_iters = a.solver.max_iters;
    solver.warm_start = !a.solver.no_warm_start;
    solver.seed = a.seed;
    solver.validate()?;
    Ok(RunConfig::Solve(SolveConfig { input: a.input.clone(), solver, dense: a.dense }))
}

fn resolve_sweep(
    a: &ExperimentArgs,
    grid: Vec<f64>,
    set_axis: impl Fn(&mut ExperimentSpec, f64),
    set_fixed: impl Fn(&mut ExperimentSpec),
) -> Result<SweepConfig, CliError> {
    if grid.is_empty() {
        return Err(CliError::Usage("empty grid".into()));
    }
    let mut base = ExperimentSpec {
        m: a.m,
        n: a.n,
        r: a.rank,
        tau: a.tau,
        variance_ratio: a.ratio,
        trials: a.trials,
        seed: a.seed,
        ..ExperimentSpec::default()
    };
    set_fixed(&mut base);
    for &g in &grid {
        let mut spec = base.clone();
        set_axis(&mut spec, g);
        spec.validate()?;
        if !(spec.observe_fraction > 0.0 && spec.observe_fraction <= 1.0) {
            return Err(CliError::Usage(format!("observe fraction {} outside (0, 1]", spec.observe_fraction)));
        }
    }
    let knobs = knobs(&a.solver);
    validate_knobs(&knobs)?;
    Ok(SweepConfig { grid, base, methods: methods(&a.loss_args)?, knobs })
}

fn validate_knobs(k: &SolverKnobs) -> Result<(), CliError> {
    let cfg = SolverConfig { xi: k.xi, zeta: k.zeta, max_iters: k.max_iters, ..SolverConfig::new(1, LossSpec::Huber) };
    cfg.validate()?;
    Ok(())
}

fn resolve_bench(a: &BenchArgs) -> Result<RunConfig, CliError> {
    let mut cases: Vec<BenchCase> = Vec::new();
    for &id in &a.cases {
        let case = BENCH_CASES
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| CliError::Usage(format!("unknown bench case {id} (expected 1-4)")))?;
        cases.push(*case);
    }
    if cases.is_empty() || a.trials == 0 {
        return Err(CliError::Usage("bench needs at least one case and one trial".into()));
    }
    let knobs = knobs(&a.solver);
    validate_knobs(&knobs)?;
    Ok(RunConfig::Bench(BenchConfig {
        cases,
        snr_db: a.snr_db,
        observe_fraction: a.observe_fraction,
        tau: a.tau,
        variance_ratio: a.ratio,
        trials: a.trials,
        seed: a.seed,
        methods: methods(&a.loss_args)?,
        knobs,
    }))
}

/// Runs a resolved configuration and writes its outputs under `out`.
pub fn execute(manifest: &RunManifest, out: &Path, jobs: usize) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    write_text(&out.join("manifest.json"), &manifest.to_json())?;
    match &manifest.config {
        RunConfig::Solve(c) => run_solve(c, out),
        RunConfig::SweepSnr(c) => run_sweep(c, "snr_db", |s, g| s.snr_db = g, out, jobs),
        RunConfig::SweepFraction(c) => run_sweep(c, "observe_fraction", |s, g| s.observe_fraction = g, out, jobs),
        RunConfig::Bench(c) => run_bench(c, out),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

#[derive(Serialize)]
struct SolveJson<'a> {
    stop_reason: &'a str,
    abort: Option<String>,
    iterations: usize,
    warm_start_iterations: usize,
    final_objective: Option<f64>,
    objective_history: &'a [f64],
    surrogate_history: &'a [f64],
    c_history: &'a [f64],
    wall_time_seconds: f64,
}

fn run_solve(c: &SolveConfig, out: &Path) -> Result<(), CliError> {
    let file = File::open(&c.input).map_err(io_err(&c.input))?;
    let x = mtx::read_coordinate(BufReader::new(file))
        .map_err(|source| CliError::Parse { path: c.input.clone(), source })?;
    let report = solve(&x, &c.solver)?;

    let write_matrix = |name: &str, a: &rmc_core::nalgebra::DMatrix<f64>| -> Result<(), CliError> {
        let path = out.join(name);
        let mut w = create(&path)?;
        mtx::write_array(&mut w, a).and_then(|_| w.flush()).map_err(io_err(&path))
    };
    write_matrix("U.mtx", &report.factors.u)?;
    write_matrix("V.mtx", &report.factors.v)?;
    if c.dense {
        write_matrix("completion.mtx", &report.completion())?;
    }

    let json = SolveJson {
        stop_reason: report.stop_reason.as_str(),
        abort: report.abort.as_ref().map(ToString::to_string),
        iterations: report.iterations,
        warm_start_iterations: report.warm_start_iterations,
        final_objective: report.final_objective(),
        objective_history: &report.objective_history,
        surrogate_history: &report.surrogate_history,
        c_history: &report.c_history,
        wall_time_seconds: report.wall_time_seconds,
    };
    let mut text = serde_json::to_string_pretty(&json).expect("report serializes");
    text.push('\n');
    write_text(&out.join("report.json"), &text)?;

    if report.stop_reason == StopReason::RankDeficiency {
        let why = report.abort.map_or_else(|| "rank deficiency".to_string(), |e| e.to_string());
        return Err(CliError::SolverAbort(why));
    }
    Ok(())
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n.max(1) as f64
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Io { path: path.to_path_buf(), source: e.into() }
}

/// Runs every (grid point, method, trial) and writes results and summary.
fn run_sweep(
    c: &SweepConfig,
    axis: &str,
    set_axis: impl Fn(&mut ExperimentSpec, f64) + Sync,
    out: &Path,
    jobs: usize,
) -> Result<(), CliError> {
    let mut jobs_list = Vec::new();
    for (gi, &g) in c.grid.iter().enumerate() {
        for (mi, &method) in c.methods.iter().enumerate() {
            for t in 0..c.base.trials {
                jobs_list.push((gi, g, mi, method, t));
            }
        }
    }
    // collect() keeps job order regardless of scheduling
    let results: Vec<TrialResult> = pool(jobs)?.install(|| {
        jobs_list
            .par_iter()
            .map(|&(_, g, _, method, t)| {
                let mut spec = c.base.clone();
                set_axis(&mut spec, g);
                run_trial(&spec, method, c.knobs, t)
            })
            .collect::<Result<_, _>>()
    })?;

    let path = out.join("results.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["method", axis, "trial", "rmse", "iterations", "stop_reason", "seconds"])
        .map_err(csv_err(&path))?;
    for (&(_, g, _, _, _), r) in jobs_list.iter().zip(&results) {
        w.write_record([
            r.method.clone(),
            g.to_string(),
            r.trial.to_string(),
            r.rmse.to_string(),
            r.iterations.to_string(),
            r.stop_reason.clone(),
            r.wall_time_seconds.to_string(),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;

    let path = out.join("summary.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["method", axis, "trials", "mean_rmse", "mean_iterations", "mean_seconds"])
        .map_err(csv_err(&path))?;
    let per_point = c.base.trials;
    for (k, chunk) in results.chunks(per_point).enumerate() {
        let (gi, g, _, method, _) = jobs_list[k * per_point];
        debug_assert!(jobs_list[k * per_point..(k + 1) * per_point].iter().all(|j| j.0 == gi));
        w.write_record([
            method.label().to_string(),
            g.to_string(),
            chunk.len().to_string(),
            mean(chunk.iter().map(|r| r.rmse)).to_string(),
            mean(chunk.iter().map(|r| r.iterations as f64)).to_string(),
            mean(chunk.iter().map(|r| r.wall_time_seconds)).to_string(),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(())
}

/// Sequential timing runs; trials are not parallelized so timings do not
/// contend with each other.
fn run_bench(c: &BenchConfig, out: &Path) -> Result<(), CliError> {
    let path = out.join("bench.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record([
        "method",
        "case",
        "m",
        "n",
        "r",
        "trials",
        "mean_seconds",
        "mean_iterations",
        "mean_seconds_per_iteration",
    ])
    .map_err(csv_err(&path))?;
    for method in &c.methods {
        for case in &c.cases {
            let spec = ExperimentSpec {
                m: case.m,
                n: case.n,
                r: case.r,
                observe_fraction: c.observe_fraction,
                snr_db: c.snr_db,
                tau: c.tau,
                variance_ratio: c.variance_ratio,
                trials: c.trials,
                seed: c.seed,
            };
            let runs: Vec<TrialResult> =
                (0..c.trials).map(|t| run_trial(&spec, *method, c.knobs, t)).collect::<Result<_, _>>()?;
            let secs = mean(runs.iter().map(|r| r.wall_time_seconds));
            let iters = mean(runs.iter().map(|r| r.iterations as f64));
            w.write_record([
                method.label().to_string(),
                case.id.to_string(),
                case.m.to_string(),
                case.n.to_string(),
                case.r.to_string(),
                c.trials.to_string(),
                secs.to_string(),
                iters.to_string(),
                mean(runs.iter().map(|r| r.wall_time_seconds / r.iterations.max(1) as f64)).to_string(),
            ])
            .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(io_err(&path))?;
    Ok(())
}
