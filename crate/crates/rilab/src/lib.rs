//! Lattice potential theory and random-interlacements laboratory.
//!
//! The crate computes exact discrete potential theory on `Z^d` (`d >= 3`) —
//! Green functions, equilibrium measures, capacities, Dirichlet forms — and
//! samples standard and tilted random interlacements restricted to finite
//! windows. On top of those it provides Monte Carlo and importance-sampling
//! estimators for the probability that a blown-up body is disconnected from
//! infinity by the interlacement set.
//!
//! Modules follow the problem decomposition:
//!
//! * [`lattice`] — sites, finite site sets, blow-ups, boundaries, connectivity.
//! * [`walk`] — continuous-time simple and tilted random walks, path functionals.
//! * [`potential`] — Green tables, equilibrium measures, capacities, entrance
//!   measures, sweeping identity.
//! * [`tilt`] — the tilt profile `(f, V, lambda)` built from a mollified
//!   equilibrium potential, the relative-entropy formula, and the scaled
//!   Dirichlet-form limit.
//! * [`interlace`] — Poisson samplers for interlacements hitting a finite set,
//!   traces, vacant sets, and change-of-measure weights.
//! * [`experiments`] — disconnection estimators (direct, tilted,
//!   importance-sampled), domination reports, occupation scans.
//! * [`cli`] — configuration parsing and the command-line front end.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod interlace;
pub mod lattice;
pub mod potential;
pub mod stats;
pub mod tilt;
pub mod walk;

pub(crate) mod solver;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("tolerance {requested:.3e} unachievable (achieved {achieved:.3e})")]
    ToleranceUnachievable { requested: f64, achieved: f64 },

    #[error("step cap {cap} exceeded before the stop rule was met")]
    StepCapExceeded { cap: u64 },

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
