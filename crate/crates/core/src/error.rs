use std::path::PathBuf;

use thiserror::Error;

use crate::profiles::RestorationLevel;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("profile csv line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("profile {module} at M={level}: {message}")]
    Validation {
        module: String,
        level: RestorationLevel,
        message: String,
    },
    #[error("profile {module} is not applicable at M={level}")]
    NotApplicable {
        module: String,
        level: RestorationLevel,
    },
    #[error("unknown module `{0}`")]
    UnknownModule(String),
    #[error("profile {0} has no applicable restoration level")]
    Empty(String),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DeviceError {
    #[error("{cmd} to rank {rank} bank {bank} while the bank is {state}")]
    IllegalState {
        cmd: &'static str,
        rank: usize,
        bank: usize,
        state: &'static str,
    },
    #[error("address {addr:#x} is outside the configured capacity {capacity:#x}")]
    AddressOutOfRange { addr: u64, capacity: u64 },
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("trace line {line}: {message}")]
    Parse { line: u64, message: String },
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("command log line {line}: {message}")]
    Parse { line: u64, message: String },
}

/// Top-level error for simulation runs and CLI subcommands.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}
