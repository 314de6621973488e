//! Scenario files, trace export, the finite-difference chain oracle and the
//! `quadsafe` command line for `quadsafe-core`.

pub mod config;
pub mod export;
pub mod oracle;
pub mod presets;

use std::path::Path;
use std::time::Instant;

use quadsafe_core::sim::run;
use quadsafe_core::Error as CoreError;

pub use config::{ConfigError, ScenarioFile};
pub use export::{export_trace, ExportError, Summary};

/// Anything `quadsafe run` can fail with.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    /// Bad scenario.
    #[error("invalid scenario: {0}")]
    Config(#[from] ConfigError),
    /// Simulation aborted.
    #[error("simulation aborted: {0}")]
    Sim(#[from] CoreError),
    /// Writing results failed.
    #[error("export failed: {0}")]
    Export(#[from] ExportError),
}

impl RunError {
    /// Process exit code: 2 for a non-finite state, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Sim(CoreError::NonFiniteState { .. }) => 2,
            _ => 1,
        }
    }
}

/// Loads, optionally overrides `dt`, runs and exports a scenario.
pub fn run_scenario(source: &str, dt: Option<f64>, out: &Path) -> Result<Summary, RunError> {
    let mut file = config::load(source)?;
    if let Some(dt) = dt {
        file.simulation.dt_s = dt;
    }
    let scenario = file.to_scenario()?;
    let start = Instant::now();
    let trace = run(&scenario)?;
    let wall = start.elapsed();
    Ok(export_trace(&trace, scenario.dt, wall, out)?)
}
