//! Experiment harness for budget-recycled differentially private release.
//!
//! The library half of the `brdp` binary: CSV ingestion with clipping and
//! schema checks, the experiment engine (mechanism resolution, seeded
//! trials, acceptance measurement, composed-leakage accounting), and the
//! deterministic report serializer. The binary is a thin argument-parsing
//! shell over these modules, so integration tests drive the exact code the
//! CLI runs.

pub mod dataset;
pub mod error;
pub mod experiment;
pub mod report;

pub use dataset::{ingest_csv, DatasetTable};
pub use error::{HarnessError, Result};
pub use experiment::{
    run_experiment, run_query, run_subsampled_query, CountPredicate, DataConfig, ExperimentConfig,
    MechanismChoice,
};
pub use report::{
    emit_report, quantiles_of, render_report, AcceptanceReport, Quantiles, ReportFormat,
    ResolvedParams,
};
