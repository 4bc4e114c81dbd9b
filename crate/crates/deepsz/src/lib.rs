//! File formats, lossless backends, pipeline commands and the `deepsz` CLI
//! built on top of `deepsz-core`.

pub mod backends;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod container;
pub mod idx;
pub mod parallel;
pub mod tables;

use std::path::{Path, PathBuf};

use deepsz_core::assessor::AssessError;
use deepsz_core::netmodel::NetError;
use deepsz_core::planner::PlanError;
use deepsz_core::pruner::PruneError;

/// Process exit codes used by the CLI.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const INFEASIBLE: i32 = 2;
    pub const IO: i32 = 3;
    pub const FORMAT: i32 = 4;
}

/// Structural problems in one of the binary formats.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FormatError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("truncated input")]
    Truncated,
    #[error("{0} trailing bytes")]
    TrailingBytes(usize),
    #[error("invalid {0}")]
    Invalid(&'static str),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
    #[error("{path}: {source}")]
    Container { path: PathBuf, source: container::ContainerError },
    #[error("{path}: {source}")]
    Table { path: PathBuf, source: tables::TableError },
    #[error("{path}: {source}")]
    Config { path: PathBuf, source: config::ConfigError },
    #[error(transparent)]
    Idx(#[from] idx::IdxError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Prune(#[from] PruneError),
    #[error(transparent)]
    Assess(#[from] AssessError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Encode(#[from] container::ContainerError),
    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn format(path: &Path, source: FormatError) -> Self {
        Error::Format { path: path.to_path_buf(), source }
    }

    pub(crate) fn container(path: &Path, source: container::ContainerError) -> Self {
        Error::Container { path: path.to_path_buf(), source }
    }

    pub(crate) fn table(path: &Path, source: tables::TableError) -> Self {
        Error::Table { path: path.to_path_buf(), source }
    }

    pub(crate) fn config(path: &Path, source: config::ConfigError) -> Self {
        Error::Config { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => exit::IO,
            Error::Format { .. }
            | Error::Table { .. }
            | Error::Config { .. }
            | Error::Idx(_)
            | Error::Container { .. } => exit::FORMAT,
            Error::Plan(PlanError::InfeasibleLoss { .. } | PlanError::InfeasibleSize { .. }) => exit::INFEASIBLE,
            _ => exit::FAILURE,
        }
    }
}
