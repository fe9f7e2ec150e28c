//! Batch front-end over the `lensopt` library: job configuration files,
//! newline-delimited archives on disk, metrics reports, and static SVG
//! renderings of archived designs.
//!
//! Everything here is plumbing around the library's optimizers; no numerics
//! live in this crate. The binary exposes the subcommands `run`, `baseline`,
//! `refine`, `report`, `render`, and `scaffold` (see [`commands`]).

pub mod archive;
pub mod args;
pub mod commands;
pub mod config;
pub mod render;
pub mod report;

use std::fmt;

/// Failure classes mapped to process exit codes: configuration problems
/// (unreadable inputs, bad arguments, out-of-range requests) exit with 2,
/// failures during an already-started run exit with 3.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn config(msg: impl fmt::Display) -> CliError {
        CliError::Config(msg.to_string())
    }

    pub fn runtime(msg: impl fmt::Display) -> CliError {
        CliError::Runtime(msg.to_string())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime failure: {m}"),
        }
    }
}

/// Library errors keep their own classification; anything the library calls
/// a user-input problem exits 2, the rest exit 3. Load-phase call sites that
/// know better (e.g. a missing catalog file is a configuration problem even
/// though it surfaces as I/O) wrap with [`CliError::config`] instead.
impl From<lensopt::Error> for CliError {
    fn from(e: lensopt::Error) -> CliError {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
