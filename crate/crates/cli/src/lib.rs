//! Command-line driver for the gait perturbation toolkit: simulate cohorts,
//! analyze recordings, plot waveforms.

pub mod analyze;
pub mod app;
pub mod error;
pub mod plot;
pub mod simulate;
pub mod svg;

pub use error::CliError;
