//! Experiment plumbing: synthetic data, sweeps, ablation, CSV and SVG output.

pub mod ablation;
pub mod config;
pub mod data;
pub mod output;
pub mod stats;
pub mod sweep;
pub mod pipeline;
