//! Spectral Faedo–Galerkin simulator for the stochastic heat equation
//! constrained to the unit sphere of L², with a Monte Carlo diagnostics
//! suite: sphere-invariance defects, uniform energy estimators, Aldous
//! continuity probes, quadratic-variation checks, and martingale
//! increment statistics.
//!
//! The library is organized along the pipeline:
//!
//! - [`spectral`]: sine eigenbasis on (0, π), norms, grid transforms
//! - [`fields`]: drift, tangential noise, Itô correction, envelopes
//! - [`integrators`]: Brownian driver and the three time steppers
//! - [`diagnostics`]: per-path and per-ensemble estimators
//! - [`ensemble`]: seeded parallel Monte Carlo, sweeps, refinements
//! - [`config`] / [`report`] / [`cli`]: run manifests, CSV/JSON output,
//!   and the command-line surface
//!
//! Everything downstream of a `(config, seed)` pair is deterministic,
//! independent of the number of worker threads.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod fields;
pub mod integrators;
pub mod report;
pub mod spectral;

pub use error::{Result, SimError};
