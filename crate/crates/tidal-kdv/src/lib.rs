//! Experiment runner for the tidal-KdV spectral library: declarative configs,
//! orchestration, and plot-ready CSV/binary outputs.

pub mod config;
pub mod experiments;
pub mod output;
