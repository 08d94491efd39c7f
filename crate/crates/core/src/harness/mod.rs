//! Experiment orchestration: episodes, sweeps, metrics and profiling.

pub mod config;
pub mod episode;
pub mod metrics;
pub mod profile;
pub mod sweep;
pub mod trace;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{parse_config, ConfigError, ConfigFile, Controller, ExperimentConfig};
pub use episode::{run_episode, run_episode_in, topk_snr, EpisodeOptions, EpisodeResult, Environment};
pub use metrics::{read_csv, write_csv, MetricsRecord};
pub use profile::{profile_runtime, Phase, ScaleAxis, ScalingSummary};
pub use sweep::{expand, sweep, threads_from_env};

use crate::execution::ExecError;
use crate::map::{MapError, ScenarioError};
use crate::tasks::TaskError;
use crate::uplink::UplinkError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("map: {0}")]
    Map(#[from] MapError),
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("tasks: {0}")]
    Task(#[from] TaskError),
    #[error("execution: {0}")]
    Exec(#[from] ExecError),
    #[error("uplink: {0}")]
    Uplink(#[from] UplinkError),
    #[error("empty sweep: {0}")]
    EmptyGrid(String),
    #[error("bad thread count `{0}`")]
    Threads(String),
    #[error("profile: {0}")]
    Profile(String),
    #[error("run {run}: {source}")]
    Run { run: String, source: Box<HarnessError> },
}

/// Reads and parses a config file; relative paths resolve against its
/// directory.
pub fn load_config(path: &std::path::Path) -> Result<ConfigFile, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
    Ok(parse_config(&text, path.parent())?)
}
