//! Synthetic instances: Gaussian low-rank ground truth, uniform masks,
//! two-component Gaussian-mixture noise calibrated to a target SNR, and the
//! full-matrix RMSE.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Error, LinalgError, Result};
use crate::masked_linalg::{FactorPair, Mask, ObservedMatrix};

// Independent ChaCha streams per purpose, so that e.g. changing the noise
// level leaves ground truth and mask untouched.
const STREAM_TRUTH: u64 = 0;
const STREAM_MASK: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_INIT: u64 = 3;

fn rng_for(seed: u64, trial: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial.wrapping_mul(4).wrapping_add(purpose));
    rng
}

/// A ground-truth matrix `X = UV` with its factors.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub x: DMatrix<f64>,
    pub factors: FactorPair,
}

/// `X = UV` with i.i.d. standard Gaussian `U` (m×r) and `V` (r×n).
pub fn gen_ground_truth(m: usize, n: usize, r: usize, seed: u64) -> Result<GroundTruth> {
    gen_ground_truth_with(m, n, r, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn gen_ground_truth_with(m: usize, n: usize, r: usize, rng: &mut ChaCha8Rng) -> Result<GroundTruth> {
    if r == 0 || r > m.min(n) {
        return Err(Error::Config(format!("rank {r} invalid for a {m}x{n} matrix")));
    }
    let mut g = |_, _| -> f64 { StandardNormal.sample(rng) };
    let u = DMatrix::from_fn(m, r, &mut g);
    let v = DMatrix::from_fn(r, n, &mut g);
    let factors = FactorPair::new(u, v)?;
    Ok(GroundTruth { x: factors.product(), factors })
}

/// Uniformly random `round(fraction·m·n)` cells, without replacement.
pub fn gen_mask(m: usize, n: usize, fraction: f64, seed: u64) -> Result<Mask> {
    gen_mask_with(m, n, fraction, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn gen_mask_with(m: usize, n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> Result<Mask> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("observe fraction must lie in (0, 1], got {fraction}")));
    }
    let total = m * n;
    let k = ((total as f64) * fraction).round() as usize;
    if k == 0 {
        return Err(LinalgError::Empty.into());
    }
    let idx = rand::seq::index::sample(rng, total, k.min(total));
    Ok(Mask::new(m, n, idx.iter().map(|t| (t / n, t % n)).collect())?)
}

/// Component variances `(σ1², σ2²)` giving the requested SNR
/// `‖X_Ω‖² / (|Ω|((1−τ)σ1² + τσ2²))`, with `σ2² = ratio·σ1²`.
pub fn calibrate_gmm(energy: f64, omega_size: usize, snr_db: f64, tau: f64, ratio: f64) -> Result<(f64, f64)> {
    if !(energy > 0.0 && energy.is_finite()) {
        return Err(Error::Config(format!("observed energy must be positive, got {energy}")));
    }
    if omega_size == 0 {
        return Err(LinalgError::Empty.into());
    }
    check_tau(tau)?;
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::Config(format!("variance ratio must be positive, got {ratio}")));
    }
    if !snr_db.is_finite() {
        return Err(Error::Config(format!("snr must be finite, got {snr_db}")));
    }
    let snr = 10f64.powf(snr_db / 10.0);
    let s1 = energy / (omega_size as f64 * snr * ((1.0 - tau) + tau * ratio));
    Ok((s1, ratio * s1))
}

fn check_tau(tau: f64) -> Result<()> {
    if (0.0..1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::Config(format!("tau must lie in [0, 1), got {tau}")))
    }
}

/// A noise realization and which entries drew from the wide component.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmNoise {
    pub noise: Vec<f64>,
    pub outlier: Vec<bool>,
}

/// `len` i.i.d. draws from `(1−τ)N(0, σ1²) + τN(0, σ2²)`.
pub fn gmm_noise(len: usize, sigma1_sq: f64, sigma2_sq: f64, tau: f64, seed: u64) -> Result<GmmNoise> {
    gmm_noise_with(len, sigma1_sq, sigma2_sq, tau, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn gmm_noise_with(len: usize, sigma1_sq: f64, sigma2_sq: f64, tau: f64, rng: &mut ChaCha8Rng) -> Result<GmmNoise> {
    check_tau(tau)?;
    if !(sigma1_sq >= 0.0 && sigma2_sq >= 0.0 && sigma1_sq.is_finite() && sigma2_sq.is_finite()) {
        return Err(Error::Config(format!("invalid variances ({sigma1_sq}, {sigma2_sq})")));
    }
    let pick = Bernoulli::new(tau).map_err(|e| Error::Config(e.to_string()))?;
    let (s1, s2) = (sigma1_sq.sqrt(), sigma2_sq.sqrt());
    let mut noise = Vec::with_capacity(len);
    let mut outlier = Vec::with_capacity(len);
    for _ in 0..len {
        let wide = pick.sample(rng);
        let z: f64 = StandardNormal.sample(rng);
        noise.push(if wide { s2 * z } else { s1 * z });
        outlier.push(wide);
    }
    Ok(GmmNoise { noise, outlier })
}

/// Adds GMM noise to every observed value.
pub fn add_gmm_noise(
    x: &ObservedMatrix,
    sigma1_sq: f64,
    sigma2_sq: f64,
    tau: f64,
    seed: u64,
) -> Result<ObservedMatrix> {
    let draw = gmm_noise(x.len(), sigma1_sq, sigma2_sq, tau, seed)?;
    corrupt(x, &draw.noise)
}

fn corrupt(x: &ObservedMatrix, noise: &[f64]) -> Result<ObservedMatrix> {
    let values = x.values().iter().zip(noise).map(|(a, b)| a + b).collect();
    Ok(ObservedMatrix::with_values(Arc::clone(x.mask()), values)?)
}

/// `‖X − UV‖_F / √(mn)` over every cell.
pub fn rmse(x_true: &DMatrix<f64>, m_hat: &FactorPair) -> Result<f64> {
    if x_true.shape() != (m_hat.nrows(), m_hat.ncols()) {
        return Err(LinalgError::Dimension(format!(
            "truth is {:?}, estimate is {}x{}",
            x_true.shape(),
            m_hat.nrows(),
            m_hat.ncols()
        ))
        .into());
    }
    Ok(rmse_dense(x_true, &m_hat.product()))
}

pub fn rmse_dense(x_true: &DMatrix<f64>, m_hat: &DMatrix<f64>) -> f64 {
    let sq: f64 = x_true.iter().zip(m_hat.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    (sq / x_true.len() as f64).sqrt()
}

/// One synthetic experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub observe_fraction: f64,
    pub snr_db: f64,
    pub tau: f64,
    pub variance_ratio: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            m: 300,
            n: 200,
            r: 5,
            observe_fraction: 0.3,
            snr_db: 10.0,
            tau: 0.1,
            variance_ratio: 100.0,
            trials: 10,
            seed: 0,
        }
    }
}

/// Everything a single trial needs.
#[derive(Debug, Clone)]
pub struct Instance {
    pub truth: GroundTruth,
    pub observed: ObservedMatrix,
    pub outlier: Vec<bool>,
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    /// Seed for the solver's factor initialization.
    pub init_seed: u64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 || self.r > self.m.min(self.n) {
            return Err(Error::Config(format!("rank {} invalid for a {}x{} matrix", self.r, self.m, self.n)));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        check_tau(self.tau)?;
        Ok(())
    }

    /// The `trial`-th instance; a pure function of `(self, trial)`.
    pub fn instance(&self, trial: usize) -> Result<Instance> {
        self.validate()?;
        let t = trial as u64;
        let truth = gen_ground_truth_with(self.m, self.n, self.r, &mut rng_for(self.seed, t, STREAM_TRUTH))?;
        let mask = gen_mask_with(self.m, self.n, self.observe_fraction, &mut rng_for(self.seed, t, STREAM_MASK))?;
        let clean = ObservedMatrix::sample(&truth.x, Arc::new(mask))?;
        let energy = crate::masked_linalg::frob_norm_sq_omega(clean.values());
        let (s1, s2) = calibrate_gmm(energy, clean.len(), self.snr_db, self.tau, self.variance_ratio)?;
        let draw = gmm_noise_with(clean.len(), s1, s2, self.tau, &mut rng_for(self.seed, t, STREAM_NOISE))?;
        let observed = corrupt(&clean, &draw.noise)?;
        let init_seed = {
            use rand::RngCore;
            rng_for(self.seed, t, STREAM_INIT).next_u64()
        };
        Ok(Instance { truth, observed, outlier: draw.outlier, sigma1_sq: s1, sigma2_sq: s2, init_seed })
    }
}

/// Outcome of one method on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub method: String,
    pub trial: usize,
    pub rmse: f64,
    pub iterations: usize,
    pub wall_time_seconds: f64,
    pub stop_reason: String,
}
