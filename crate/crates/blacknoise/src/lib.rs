//! Simulation and analysis toolkit for a black-noise cascade.
//!
//! A black noise is a noise with no first-order chaos: no linear sensor
//! (Wiener integral) detects it. One construction realizes it as the
//! projective limit of function spaces linked by smoothing-and-clipping
//! maps with geometrically shrinking radii. This crate generates
//! approximate samples of that limit through a function-space Bayesian
//! posterior construction, computes the H1 blackness statistic over
//! refining interval partitions, and validates the machinery against a
//! white-noise control cascade and analytic Gaussian targets.
//!
//! Module map:
//! - [`gridfn`]: uniformly sampled functions on intervals, trapezoid
//!   quadrature and O(n) sliding-window integrals.
//! - [`cascade`]: the clipping nonlinearity, the level-independent recursion
//!   between successive `xi` fields, reconstruction of `omega` levels, the
//!   cumulative scaling map and its integrated correlation functional, and
//!   the domain planner.
//! - [`measures`]: seeded samplers for every law the pipeline consumes.
//! - [`inference`]: Gaussian-kernel likelihood and the preconditioned
//!   Crank-Nicolson Metropolis chain over the discretized top-level field,
//!   plus the mixture sampler over Brownian observations.
//! - [`blackstat`]: the H1 statistic, interval-conditional expectation
//!   estimates, and distributional diagnostics.
//! - [`baseline`]: the linear white-noise cascade used as a control.

pub mod baseline;
pub mod blackstat;
pub mod cascade;
pub mod error;
pub mod gridfn;
pub mod inference;
pub mod measures;

pub use error::{Error, Result};
pub use gridfn::{GridFunction, GridSpec, Interval};
