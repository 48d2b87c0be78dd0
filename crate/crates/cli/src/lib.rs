//! Configuration, orchestration and output of the solver experiments.

pub mod config;
pub mod output;
pub mod run;

pub use config::{Experiment, RunConfig};
pub use run::{run, RunManifest, RunOptions};

/// Failures of a command-line run.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] nsrepro_core::Error),

    #[error("cannot write output: {0}")]
    Output(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1: monitor outside its regime, 2: usage or configuration error,
    /// 3: numerical or I/O failure.
    pub fn exit_code(&self) -> i32 {
        use nsrepro_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                E::RegimeViolation(_) => 1,
                E::InvalidParameter(_)
                | E::InvalidBoundaryData(_)
                | E::InvalidGrid(_)
                | E::Compatibility { .. }
                | E::NoBoundary
                | E::GridMismatch => 2,
                _ => 3,
            },
            CliError::Output(_) | CliError::Io(_) => 3,
        }
    }
}
