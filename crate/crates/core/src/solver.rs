//! Robust matrix completion by alternating shrinkage and SASD.
//!
//! Each outer iteration:
//!
//! 1. `D = X_Ω − (UV)_Ω` from the current factors;
//! 2. `c ← max(c_floor, min(ξ·IQR(D)/1.349, c_prev))`;
//! 3. `S = shrink(D)` entrywise (zero wherever `|D| ≤ c`);
//! 4. one SASD sweep on `½‖(X − S)_Ω − (UV)_Ω‖²`;
//! 5. record `E = Σ_Ω l(X − UV)` and the surrogate
//!    `L = ½‖X − UV − S‖²_Ω + Σ φ(S)`.
//!
//! With `warm_start` (the default) the threshold is held at its first value
//! `c¹ = ξ d¹` until the objective settles, and only then does the `min`
//! rule start lowering it. Lowering `c` straight from a random start labels
//! cells the factors simply have not reached yet as outliers, and the fit
//! freezes around them.
//!
//! The loop stops once `|E_k − E_{k−1}| / E_{k−1} < ζ` (after `min_iters`),
//! at `max_iters`, or when a Gram matrix loses rank.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, LinalgError, Result};
use crate::estimators::{HybridLoss, LossSpec};
use crate::masked_linalg::{frob_norm_sq_omega, residual, sasd_sweep, FactorPair, ObservedMatrix, SparseResidual};

/// Gaussian IQR: `Φ⁻¹(3/4) − Φ⁻¹(1/4)`.
pub const GAUSSIAN_IQR: f64 = 1.349;

/// How the threshold `c` is chosen each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ThresholdRule {
    /// `c^k = min{ξ d^k, c^{k−1}}` with `d^k` the normalized IQR of the residuals.
    Iqr,
    /// A constant threshold; freezes the surrogate objective.
    Fixed { c: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub rank: usize,
    pub loss: LossSpec,
    pub xi: f64,
    pub zeta: f64,
    pub max_iters: usize,
    pub min_iters: usize,
    pub seed: u64,
    pub c_floor: f64,
    pub threshold: ThresholdRule,
    /// SASD sweeps per outer iteration.
    pub sweeps_per_iter: usize,
    /// Hold `c` at `c¹` until the objective settles before applying the `min` rule.
    pub warm_start: bool,
}

impl SolverConfig {
    pub fn new(rank: usize, loss: LossSpec) -> Self {
        SolverConfig {
            rank,
            loss,
            xi: 2.0,
            zeta: 1e-4,
            max_iters: 500,
            min_iters: 2,
            seed: 0,
            c_floor: 1e-12,
            threshold: ThresholdRule::Iqr,
            sweeps_per_iter: 1,
            warm_start: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        let bad = |msg: String| Err(Error::Config(msg));
        if self.rank == 0 {
            return bad("rank must be positive".into());
        }
        if !(self.xi.is_finite() && self.xi > 0.0) {
            return bad(format!("xi must be positive, got {}", self.xi));
        }
        // +∞ is allowed and means "stop as soon as min_iters is reached"
        if !(self.zeta > 0.0) {
            return bad(format!("zeta must be positive, got {}", self.zeta));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive".into());
        }
        if !(self.c_floor.is_finite() && self.c_floor >= 0.0) {
            return bad(format!("c_floor must be nonnegative, got {}", self.c_floor));
        }
        if let ThresholdRule::Fixed { c } = self.threshold {
            if !(c.is_finite() && c > 0.0) {
                return bad(format!("fixed threshold must be positive, got {c}"));
            }
        }
        if self.sweeps_per_iter == 0 {
            return bad("sweeps_per_iter must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Tolerance,
    MaxIters,
    RankDeficiency,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Tolerance => "tolerance",
            StopReason::MaxIters => "max_iters",
            StopReason::RankDeficiency => "rank_deficiency",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub factors: FactorPair,
    pub iterations: usize,
    /// Leading iterations spent with `c` held at `c¹`.
    pub warm_start_iterations: usize,
    pub stop_reason: StopReason,
    /// Set when the solve aborted early.
    pub abort: Option<LinalgError>,
    pub objective_history: Vec<f64>,
    pub surrogate_history: Vec<f64>,
    pub c_history: Vec<f64>,
    pub wall_time_seconds: f64,
}

impl SolveReport {
    /// The completed matrix `UV`.
    pub fn completion(&self) -> DMatrix<f64> {
        self.factors.product()
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.objective_history.last().copied()
    }
}

/// Gaussian factors scaled so that `E[(UV)²]` matches the mean observed energy.
///
/// Each factor entry is `N(0, 1)·(ν/r)^{1/4}` with `ν = Σ_Ω X² / |Ω|`; an
/// all-zero observation falls back to unit scale.
pub fn init_factors(x: &ObservedMatrix, rank: usize, seed: u64) -> Result<FactorPair> {
    let (m, n) = (x.nrows(), x.ncols());
    if rank == 0 || rank > m.min(n) {
        return Err(Error::Config(format!("rank {rank} invalid for a {m}x{n} matrix")));
    }
    let nu = x.mean_energy();
    let scale = if nu > 0.0 && nu.is_finite() { (nu / rank as f64).powf(0.25) } else { 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |_, _| -> f64 {
        let z: f64 = StandardNormal.sample(&mut rng);
        scale * z
    };
    let u = DMatrix::from_fn(m, rank, &mut draw);
    let v = DMatrix::from_fn(rank, n, &mut draw);
    Ok(FactorPair::new(u, v)?)
}

/// `IQR(values) / 1.349`, quantiles by linear interpolation at `(N−1)q`.
pub fn normalized_iqr(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::TooFewValues { needed: 2, got: values.len() });
    }
    let mut buf = values.to_vec();
    let q1 = quantile_in_place(&mut buf, 0.25);
    let q3 = quantile_in_place(&mut buf, 0.75);
    Ok((q3 - q1) / GAUSSIAN_IQR)
}

/// Linear-interpolation quantile; reorders `buf`.
fn quantile_in_place(buf: &mut [f64], q: f64) -> f64 {
    let pos = (buf.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    let (_, &mut lo_val, right) = buf.select_nth_unstable_by(lo, f64::total_cmp);
    if frac == 0.0 || right.is_empty() {
        return lo_val;
    }
    let hi_val = right.iter().copied().fold(f64::INFINITY, f64::min);
    lo_val + frac * (hi_val - lo_val)
}

/// `Σ_Ω l(X − UV)`.
pub fn objective(x: &ObservedMatrix, f: &FactorPair, loss: &HybridLoss) -> Result<f64> {
    let d = residual(x, f, None)?;
    Ok(d.values().iter().map(|&r| loss.value(r)).sum())
}

/// Entrywise shrinkage of `D = X − UV`.
pub fn s_step(x: &ObservedMatrix, f: &FactorPair, loss: &HybridLoss) -> Result<SparseResidual> {
    let mut d = residual(x, f, None)?;
    for v in d.values_mut() {
        *v = loss.shrink(*v);
    }
    Ok(d)
}

/// One SASD sweep on `H = X_Ω − S_Ω`.
pub fn uv_step(x: &ObservedMatrix, s: &SparseResidual, f: &FactorPair) -> Result<FactorPair> {
    let mut next = f.clone();
    sasd_sweep(&shrinkage_target(x, s)?, &mut next)?;
    Ok(next)
}

fn shrinkage_target(x: &ObservedMatrix, s: &SparseResidual) -> Result<SparseResidual> {
    if x.mask() != s.mask() {
        return Err(LinalgError::MaskMismatch.into());
    }
    let values = x.values().iter().zip(s.values()).map(|(a, b)| a - b).collect();
    Ok(SparseResidual::from_values(Arc::clone(x.mask()), values)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Robust,
    Frobenius,
}

/// Iterate state of a single solve.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub factors: FactorPair,
    pub s: SparseResidual,
    pub c: f64,
    pub objective_history: Vec<f64>,
    pub surrogate_history: Vec<f64>,
    pub c_history: Vec<f64>,
    pub iter: usize,
    /// Iterations completed while `c` was held; `None` while still holding.
    warm_start_iters: Option<usize>,
    mode: Mode,
}

impl SolverState {
    pub fn new(x: &ObservedMatrix, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let factors = init_factors(x, cfg.rank, cfg.seed)?;
        Ok(SolverState::with_factors(x, factors, Mode::Robust))
    }

    /// Starts from given factors instead of a random draw.
    pub fn from_factors(x: &ObservedMatrix, factors: FactorPair) -> Self {
        SolverState::with_factors(x, factors, Mode::Robust)
    }

    fn with_factors(x: &ObservedMatrix, factors: FactorPair, mode: Mode) -> Self {
        SolverState {
            factors,
            s: SparseResidual::zeros(Arc::clone(x.mask())),
            c: f64::INFINITY,
            objective_history: Vec::new(),
            surrogate_history: Vec::new(),
            c_history: Vec::new(),
            iter: 0,
            warm_start_iters: None,
            mode,
        }
    }

    /// `c ← max(c_floor, min(ξ d, c_prev))`; returns the new value.
    ///
    /// While a warm start is holding, `c` keeps its first value.
    pub fn update_c(&mut self, cfg: &SolverConfig, d_values: &[f64]) -> Result<f64> {
        let next = match cfg.threshold {
            ThresholdRule::Fixed { c } => c,
            ThresholdRule::Iqr if self.holding(cfg) && self.c.is_finite() => self.c,
            ThresholdRule::Iqr => (cfg.xi * normalized_iqr(d_values)?).min(self.c),
        };
        self.c = next.max(cfg.c_floor).max(f64::MIN_POSITIVE);
        Ok(self.c)
    }

    /// One outer iteration. Returns the new objective value.
    pub fn step(&mut self, x: &ObservedMatrix, cfg: &SolverConfig) -> Result<f64> {
        let d = residual(x, &self.factors, None)?;
        let (loss, s, phi_sum) = match self.mode {
            Mode::Robust => {
                self.update_c(cfg, d.values())?;
                let loss = cfg.loss.at(self.c)?;
                let mut s = d;
                let mut phi_sum = 0.0;
                for v in s.values_mut() {
                    let (y, phi) = loss.dual_at_image(*v);
                    *v = y;
                    phi_sum += phi;
                }
                (Some(loss), s, phi_sum)
            }
            Mode::Frobenius => (None, SparseResidual::zeros(Arc::clone(x.mask())), 0.0),
        };

        let target = shrinkage_target(x, &s)?;
        let mut info = sasd_sweep(&target, &mut self.factors)?;
        for _ in 1..cfg.sweeps_per_iter {
            info = sasd_sweep(&target, &mut self.factors)?;
        }

        // X − UV = (H − UV) + S on Ω
        let fit = info.residual.values();
        let e = match &loss {
            Some(l) => fit.iter().zip(s.values()).map(|(r, sv)| l.value(r + sv)).sum(),
            None => 0.5 * frob_norm_sq_omega(fit),
        };
        self.surrogate_history.push(0.5 * frob_norm_sq_omega(fit) + phi_sum);
        self.objective_history.push(e);
        if self.mode == Mode::Robust {
            self.c_history.push(self.c);
        }
        self.s = s;
        self.iter += 1;
        Ok(e)
    }

    fn holds_c(&self, cfg: &SolverConfig) -> bool {
        cfg.warm_start && cfg.threshold == ThresholdRule::Iqr && self.mode == Mode::Robust
    }

    fn holding(&self, cfg: &SolverConfig) -> bool {
        self.holds_c(cfg) && self.warm_start_iters.is_none()
    }

    /// Leading iterations that ran with `c` held at `c¹`.
    pub fn warm_start_iterations(&self, cfg: &SolverConfig) -> usize {
        match self.warm_start_iters {
            Some(k) => k,
            None if self.holds_c(cfg) => self.iter,
            None => 0,
        }
    }

    fn settled(&self, cfg: &SolverConfig, since: usize) -> bool {
        if self.iter < since + cfg.min_iters.max(1) {
            return false;
        }
        if cfg.zeta == f64::INFINITY {
            return true;
        }
        match self.objective_history[since..] {
            [.., prev, cur] => (cur - prev).abs() / prev.max(f64::EPSILON) < cfg.zeta,
            _ => false,
        }
    }

    /// Checks the stopping rule; a settled warm start releases `c` instead
    /// of stopping. Holding gives up after half the iteration budget.
    fn converged(&mut self, cfg: &SolverConfig) -> bool {
        if self.holding(cfg) {
            if self.settled(cfg, 0) || 2 * self.iter >= cfg.max_iters {
                self.warm_start_iters = Some(self.iter);
            }
            return false;
        }
        let since = self.warm_start_iters.unwrap_or(0);
        self.settled(cfg, since)
    }
}

fn run(x: &ObservedMatrix, cfg: &SolverConfig, mut state: SolverState) -> Result<SolveReport> {
    let start = Instant::now();
    let mut stop_reason = StopReason::MaxIters;
    let mut abort = None;
    while state.iter < cfg.max_iters {
        match state.step(x, cfg) {
            Ok(_) => {}
            Err(Error::Linalg(e @ (LinalgError::RankDeficient { .. } | LinalgError::DegenerateDirection { .. }))) => {
                stop_reason = StopReason::RankDeficiency;
                abort = Some(e);
                break;
            }
            Err(e) => return Err(e),
        }
        if state.converged(cfg) {
            stop_reason = StopReason::Tolerance;
            break;
        }
    }
    let warm_start_iterations = state.warm_start_iterations(cfg);
    Ok(SolveReport {
        factors: state.factors,
        iterations: state.iter,
        warm_start_iterations,
        stop_reason,
        abort,
        objective_history: state.objective_history,
        surrogate_history: state.surrogate_history,
        c_history: state.c_history,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Robust completion with the configured hybrid loss.
pub fn solve(x: &ObservedMatrix, cfg: &SolverConfig) -> Result<SolveReport> {
    let state = SolverState::new(x, cfg)?;
    run(x, cfg, state)
}

/// Robust completion from caller-supplied initial factors.
pub fn solve_from(x: &ObservedMatrix, cfg: &SolverConfig, factors: FactorPair) -> Result<SolveReport> {
    cfg.validate()?;
    run(x, cfg, SolverState::from_factors(x, factors))
}

/// The plain least-squares fit `min ½‖X_Ω − (UV)_Ω‖²` with the same loop,
/// `S ≡ 0` and no threshold schedule.
pub fn solve_fnorm_baseline(x: &ObservedMatrix, cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let factors = init_factors(x, cfg.rank, cfg.seed)?;
    run(x, cfg, SolverState::with_factors(x, factors, Mode::Frobenius))
}
