//! Error taxonomy shared by every module in the crate.
//!
//! Each variant corresponds to one machine-readable category so that callers
//! (in particular the CLI) can map failures to stable exit diagnostics
//! without parsing prose.

use thiserror::Error;

/// Unified error type for calibration, accounting, search, and sampling.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum BrdpError {
    /// An argument violated a documented precondition (e.g. ε ≤ 0, p ∉ (0,1]).
    #[error("domain error: {0}")]
    Domain(String),

    /// A root search failed to converge within its iteration cap.
    #[error("calibration failure: {0}")]
    Calibration(String),

    /// Numerical quadrature could not meet its accuracy target.
    #[error("accuracy error: {0}")]
    Accuracy(String),

    /// A discretization was too coarse (or too large) to represent the
    /// required probability mass.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// The recycle loop exceeded its safety cap (signals q ≈ 1 with p_θ ≈ 0).
    #[error("nontermination: {0}")]
    Nontermination(String),

    /// No parameter in the search region satisfies the privacy constraint.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A profile inversion target lies outside the search bracket.
    #[error("bracket error: {0}")]
    Bracket(String),

    /// An analytic path was requested for a kernel it does not cover.
    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),
}

impl BrdpError {
    /// Stable machine-readable category name for this error.
    #[must_use]
    pub fn category(&self) -> &'static str {
        match self {
            BrdpError::Domain(_) => "domain",
            BrdpError::Calibration(_) => "calibration",
            BrdpError::Accuracy(_) => "accuracy",
            BrdpError::Resolution(_) => "resolution",
            BrdpError::Nontermination(_) => "nontermination",
            BrdpError::Infeasible(_) => "infeasible",
            BrdpError::Bracket(_) => "bracket",
            BrdpError::UnsupportedKernel(_) => "unsupported-kernel",
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, BrdpError>;
