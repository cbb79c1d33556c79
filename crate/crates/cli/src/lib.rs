//! Library side of the `segfeat` command line tool: run configuration and
//! the subcommand implementations, kept here so tests can call them directly.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

pub use config::RunConfig;

use segfeat_core::ErrorKind;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] segfeat_core::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    /// 3 for configuration problems, 4 for bad or missing data, 5 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Config => 3,
                ErrorKind::Data => 4,
                ErrorKind::Runtime => 5,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
