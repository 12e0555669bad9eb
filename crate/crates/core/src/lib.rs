//! Robust low-rank matrix completion.
//!
//! A partially observed matrix `X_Ω` is fitted by `UV` under a hybrid
//! M-estimator loss that is quadratic for residuals up to a data-driven
//! threshold `c` and robust beyond it. The nonconvex fit is split into an
//! entrywise shrinkage step for the outlier estimate `S` and a scaled
//! alternating steepest descent (SASD) sweep on the factors.
//!
//! ```
//! use rmc_core::{datagen::ExperimentSpec, estimators::LossSpec, solver::{solve, SolverConfig}};
//!
//! let spec = ExperimentSpec { m: 60, n: 40, r: 2, observe_fraction: 0.5, ..Default::default() };
//! let inst = spec.instance(0).unwrap();
//! let report = solve(&inst.observed, &SolverConfig::new(2, LossSpec::how())).unwrap();
//! assert!(report.iterations > 0);
//! ```

pub mod datagen;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod masked_linalg;
pub mod mtx;
pub mod solver;

pub use error::{Error, Result};
pub use estimators::{HybridLoss, LossSpec, Scale};
pub use masked_linalg::{FactorPair, Mask, ObservedMatrix, SparseResidual};
pub use nalgebra;
pub use solver::{solve, solve_fnorm_baseline, SolveReport, SolverConfig, StopReason};
