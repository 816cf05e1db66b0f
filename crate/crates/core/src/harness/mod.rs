//! Experiment configuration, sweeps, CSV records and plots.

pub mod config;
pub mod seeds;
pub mod record;
pub mod sweep;
pub mod plot;
