//! Numerical toolkit for finite-window shadowing of pseudotrajectories and
//! for the linear-cocycle side of the same story: min–sup solvers for
//! inhomogeneous recursions, growth-exponent fitting, and exponential
//! dichotomy detection with transversality checks.
//!
//! The crate is organized around five layers:
//!
//! * [`space`] — flat phase spaces (circle, 2-torus, plane) with wrap-aware
//!   charts and distances.
//! * [`maps`] — smooth test maps: a circle map with a neutral cubic repeller
//!   and a hyperbolic attractor, the cat map, a planar contraction, the
//!   identity, and the Hénon map.
//! * [`pseudo`] — pseudotrajectory generation/validation, optimal and
//!   Newton-refined shadowing, and Hölder-exponent estimation.
//! * [`cocycle`] / [`dichotomy`] — sequences of invertible linear maps along
//!   orbits, min–sup response solvers with independent oracles, dichotomy
//!   splittings, trichotomy scans, and orthogonal reductions.
//! * [`bridge`] — the constructions tying both sides together: lifting
//!   cocycle solutions to pseudotrajectories and extracting linearized
//!   residuals from shadowing orbits.

// `!(x > 0.0)` guards reject NaN along with nonpositive values; the
// partial_cmp form the lint suggests would lose that.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bridge;
pub mod cocycle;
pub mod dichotomy;
pub mod maps;
pub mod pseudo;
pub mod report;
pub mod space;
pub mod stats;

use thiserror::Error;

/// Error type shared by all modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("window too short: need {need}, have {have}")]
    WindowTooShort { need: usize, have: usize },
    #[error("no convergence after {iters} iterations")]
    NoConvergence { iters: usize },
    #[error("chart domain violation: {0}")]
    ChartDomain(String),
    #[error("numerically singular: {0}")]
    Singular(String),
    #[error("orbit left the bounding box at step {step}")]
    Divergence { step: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
