//! Regularized non-convex matrix completion.
//!
//! The objective is
//! `f(X) = ½‖P_Ω(XXᵀ − M)‖²_F + λ Σ_i (‖X_i‖ − α)⁴₊`
//! over `X ∈ ℝ^{d×r}`. The crate provides its gradient and Hessian, first
//! order solvers (gradient descent, SGD and perturbed GD), certification of
//! candidate points and a multi-start landscape scan, and Monte Carlo
//! measurement of the concentration bounds the landscape analysis uses.
//!
//! Randomness is keyed by `(seed, purpose, index)` throughout, so every
//! result is reproducible regardless of execution mode.

// parameter guards are written `!(x > 0.0)` so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod concentration;
pub mod error;
pub mod exec;
pub mod instance;
pub mod linalg;
pub mod objective;
pub mod rng;
pub mod solvers;

#[cfg(test)]
mod testutil;

pub use certify::{certify_point, landscape_scan, CertReport, CertTolerances, Classification, ScanOptions, ScanSummary};
pub use concentration::{fit_scaling, run_concentration, ConcentrationTrial, Kind, TrialResult};
pub use error::{Error, Result};
pub use exec::Execution;
pub use instance::{GroundTruth, HyperParams, Instance, InstanceSpec, Observation};
pub use linalg::{DenseMatrix, FactorMatrix, ObservationMask};
pub use objective::{EvalBreakdown, HessianEig, ObjectiveConfig};
pub use solvers::{solve, Method, SolveResult, SolveStatus, SolverConfig};
