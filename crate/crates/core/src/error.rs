use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("could not place route endpoints {min_separation} m apart after {attempts} attempts")]
    RouteGeneration { attempts: usize, min_separation: f64 },

    #[error("value iteration did not converge after {sweeps} sweeps (residual {residual:e})")]
    NonConvergence { sweeps: usize, residual: f64 },

    #[error("malformed policy file: {0}")]
    PolicyFormat(String),

    #[error("policy file {0} is missing and offline build is disabled")]
    MissingPolicy(PathBuf),

    #[error("malformed scenario log line {line}: {reason}")]
    ScenarioLog { line: usize, reason: String },

    #[error("graph search found no path to the goal")]
    NoPath,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
