//! Experiment driver: configuration, output files and the subcommands of
//! the `rbcv` binary.

pub mod commands;
pub mod config;
mod output;

use std::fmt;

pub use commands::{
    bayes_pde, bayes_toy, breakeven, holdout, kl_spectrum, propagate, rb_train, BayesPdeSummary, BayesToySummary,
    HoldoutRow, PropagateSummary, RbTrainSummary,
};
pub use config::{Axis, Config, Spacing};
pub use output::Output;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_TOLERANCE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad configuration, inputs or output location.
    Config(String),
    /// The run finished and wrote its outputs, but a tolerance was not met.
    Tolerance(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Tolerance(_) => EXIT_TOLERANCE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Tolerance(m) => write!(f, "tolerance not met: {m}"),
            CliError::Numerical(m) => write!(f, "numerical defect: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<rbcv::Error> for CliError {
    fn from(e: rbcv::Error) -> Self {
        use rbcv::Error as E;
        match e {
            E::Numerical(_) | E::DegenerateLikelihood { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
