//! Experiment runner for the black-noise simulator: configuration handling,
//! run orchestration, artifact layout and SVG plotting. The binary in this
//! crate is a thin argument parser over these modules.

pub mod config;
pub mod csvio;
pub mod manifest;
pub mod plot;
pub mod runner;
