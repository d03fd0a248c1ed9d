//! Command-line front end: CSV ingestion, run configuration and the
//! `detect`, `simulate`, `evaluate` and `gains` subcommands.
//!
//! Row indices in every output follow the 1-based convention: a change
//! point `s` is the last row of its left segment, and a segment
//! `{start, end}` covers rows `start + 1 ..= end`.

pub mod args;
pub mod commands;
pub mod config;
pub mod table;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const PARSE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const NOTHING_TO_SPLIT: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] hdcpd::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => exit::PARSE,
            CliError::Config(_) => exit::CONFIG,
            CliError::Core(hdcpd::Error::EmptySubset) => exit::NOTHING_TO_SPLIT,
            CliError::Core(_) => exit::CONFIG,
            CliError::Io { .. } => exit::IO,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
