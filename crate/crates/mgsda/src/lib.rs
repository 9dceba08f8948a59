//! Multi-group sparse discriminant analysis (MGSDA).
//!
//! Estimates row-sparse discriminant directions for Gaussian classification
//! with `G` groups by solving a group-penalized quadratic program with block
//! coordinate descent. Around the estimator the crate provides:
//!
//! - [`stats`] — pooled within-group scatter and the mean-contrast matrix
//!   computed from labeled data;
//! - [`solver`] — the penalized solver itself, with KKT certificates, the
//!   oracle (support-restricted) solve, and the primal-dual witness check;
//! - [`population`] — Gaussian population models (priors, means, covariance)
//!   with derived contrasts, discriminant directions, and their support;
//! - [`diagnostics`] — the population-level quantities that govern exact
//!   support recovery: irrepresentability, minimal signal strength, tuning
//!   parameter bounds, and sample-complexity expressions;
//! - [`classifier`] — the plug-in classification rule built from a fitted
//!   coefficient matrix;
//! - [`experiments`] — a deterministic Monte-Carlo harness that sweeps the
//!   rescaled sample size and records support-recovery Hamming distances;
//! - [`cli`] — the `fit` / `predict` / `simulate` / `diagnose` / `plot`
//!   commands used by the `mgsda` binary.
//!
//! Each major capability has a runnable program under `examples/`; start
//! with `penalized_solve` and `phase_transition`.

pub mod classifier;
pub mod cli;
pub mod diagnostics;
pub mod experiments;
pub mod linalg;
pub mod population;
pub mod rng;
pub mod solver;
pub mod stats;

mod error;

pub use error::{Error, Result};
