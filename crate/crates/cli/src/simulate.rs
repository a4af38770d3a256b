//! `simulate`: synthetic cohort to disk.

use std::fs;
use std::path::Path;

use gait_perturb::sim::{self, SessionSimConfig, SimulatedSubject};
use rayon::prelude::*;

use crate::error::CliError;

/// Name of the resolved config written next to the subject folders.
pub const RESOLVED_CONFIG: &str = "simulation.toml";

/// Reads a TOML config; absent keys take their defaults, unknown keys are
/// rejected with the key named.
pub fn load_config(path: &Path) -> Result<SessionSimConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let cfg: SessionSimConfig = toml::from_str(&text).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        message: e.message().to_string(),
    })?;
    cfg.validate().map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(cfg)
}

pub fn simulate(cfg: &SessionSimConfig, out: &Path) -> Result<Vec<SimulatedSubject>, CliError> {
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let subjects = (0..cfg.subjects)
        .into_par_iter()
        .map(|i| sim::simulate_subject(cfg, i))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::runtime)?;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    sim::write_cohort(&subjects, out).map_err(CliError::runtime)?;
    let resolved = toml::to_string(cfg).map_err(CliError::runtime)?;
    let path = out.join(RESOLVED_CONFIG);
    fs::write(&path, resolved).map_err(|e| CliError::io(path, e))?;
    Ok(subjects)
}
