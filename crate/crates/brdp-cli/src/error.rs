//! Harness-level error type: everything the CLI can fail with, each with a
//! stable machine-readable category for scripted consumers.

use brdp_core::BrdpError;

/// Errors produced by the harness on top of the core library's own.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// A privacy-core operation failed.
    #[error(transparent)]
    Core(#[from] BrdpError),

    /// The input file lacks a required column or a parsable header.
    #[error("schema error: {0}")]
    Schema(String),

    /// Ingestion produced no usable rows.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// A configuration value is missing or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// Reading or writing a file failed.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A delimited input row could not be decoded at all.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// Serialized output could not be produced.
    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),
}

impl HarnessError {
    /// Stable machine-readable category name, used in the CLI's error JSON.
    #[must_use]
    pub fn category(&self) -> &'static str {
        match self {
            HarnessError::Core(e) => e.category(),
            HarnessError::Schema(_) => "schema",
            HarnessError::EmptyDataset(_) => "empty-dataset",
            HarnessError::Config(_) => "config",
            HarnessError::Io(_) => "io",
            HarnessError::Csv(_) => "csv",
            HarnessError::Serialization(_) => "serialization",
        }
    }
}

/// Harness result alias.
pub type Result<T> = std::result::Result<T, HarnessError>;
