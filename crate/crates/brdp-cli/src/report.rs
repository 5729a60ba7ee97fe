//! Acceptance report: the single serializable record of an experiment run.
//!
//! The report embeds every resolved parameter (budget split, recycling
//! rate, sampling rate, shift pair) so a run can be audited and replayed
//! without the original config. Rendering is deterministic: identical
//! reports serialize to identical bytes in both formats.

use crate::error::{HarnessError, Result};
use crate::experiment::MechanismChoice;
use brdp_core::{KernelKind, QueryKind};
use serde::{Deserialize, Serialize};
use std::io::Write;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Output serialization format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    /// Pretty-printed JSON (round-trips through [`AcceptanceReport`]).
    Json,
    /// Long-form `section,key,value` rows.
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(HarnessError::Config(format!(
                "unknown report format {other:?} (expected json or csv)"
            ))),
        }
    }
}

/// Per-partition audit row: everything the resolver decided.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedParams {
    /// Partition index.
    pub partition: u32,
    /// Records in the partition.
    pub size: u64,
    /// Query sensitivity the kernel was calibrated at (already scaled by
    /// 1/p for subsampled runs).
    pub sensitivity: f64,
    /// Kernel noise scale (σ or b).
    pub scale: f64,
    /// Kernel budget ε_y.
    pub epsilon_y: f64,
    /// Kernel budget δ_y.
    pub delta_y: f64,
    /// Recycling rate q.
    pub q: f64,
    /// Bernoulli sampling rate (1 when the pipeline does not subsample).
    pub p: f64,
    /// Shift weight W of the reported profile.
    pub w: f64,
    /// Privacy-loss shift 𝓛 = −ln(1 − q).
    pub l: f64,
    /// Analytic end-to-end acceptance for this partition.
    pub analytic_acceptance: f64,
    /// Planner warning, when a statistical approximation was thin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Five-number summary of released outputs (type-7 linear interpolation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    /// 2.5th percentile.
    pub q025: f64,
    /// First quartile.
    pub q25: f64,
    /// Median.
    pub q50: f64,
    /// Third quartile.
    pub q75: f64,
    /// 97.5th percentile.
    pub q975: f64,
}

/// Full record of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceReport {
    /// Release pipeline that ran.
    pub mechanism: MechanismChoice,
    /// Noise kernel family.
    pub kernel: KernelKind,
    /// Query family.
    pub query: QueryKind,
    /// Releases per partition.
    pub trials: u32,
    /// Dataset partitions queried side by side.
    pub partitions: u32,
    /// Master random seed.
    pub seed: u64,
    /// Fraction of releases that landed inside the θ-window.
    pub empirical_acceptance: f64,
    /// Binomial standard error of the empirical acceptance.
    pub empirical_se: f64,
    /// Mean analytic acceptance across partitions.
    pub analytic_acceptance: f64,
    /// ε after `trials`-fold composition at `composed_delta`. Partitions see
    /// disjoint records, so parallel composition keeps this a single-query
    /// figure — it does not grow with `partitions`.
    pub composed_epsilon: f64,
    /// Target δ of the composed figure.
    pub composed_delta: f64,
    /// Whether outputs were shifted to empirical mean 0 per partition.
    pub outputs_calibrated: bool,
    /// Five-number summary of `outputs` (absent when there are none).
    pub output_quantiles: Option<Quantiles>,
    /// Per-partition audit rows.
    pub resolved: Vec<ResolvedParams>,
    /// Released values, partition-major then trial order.
    pub outputs: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Quantiles
// ---------------------------------------------------------------------------

/// Type-7 quantile (the spreadsheet default): linear interpolation between
/// order statistics at rank h = (n−1)·p.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Five-number summary of a sample; `None` when it is empty.
#[must_use]
pub fn quantiles_of(values: &[f64]) -> Option<Quantiles> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(Quantiles {
        q025: quantile_sorted(&sorted, 0.025),
        q25: quantile_sorted(&sorted, 0.25),
        q50: quantile_sorted(&sorted, 0.50),
        q75: quantile_sorted(&sorted, 0.75),
        q975: quantile_sorted(&sorted, 0.975),
    })
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

/// Render a report to its exact output bytes (as a string).
pub fn render_report(report: &AcceptanceReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => render_csv(report),
    }
}

/// Write a rendered report to `out`.
pub fn emit_report<W: Write>(
    report: &AcceptanceReport,
    format: ReportFormat,
    out: &mut W,
) -> Result<()> {
    out.write_all(render_report(report, format)?.as_bytes())?;
    Ok(())
}

fn render_csv(report: &AcceptanceReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["section", "key", "value"])?;
    let row = |w: &mut csv::Writer<Vec<u8>>, section: &str, key: &str, value: String| {
        w.write_record([section, key, value.as_str()])
    };

    row(&mut w, "meta", "mechanism", format!("{:?}", report.mechanism).to_lowercase())?;
    row(&mut w, "meta", "kernel", report.kernel.to_string())?;
    row(&mut w, "meta", "query", format!("{:?}", report.query).to_lowercase())?;
    row(&mut w, "meta", "trials", report.trials.to_string())?;
    row(&mut w, "meta", "partitions", report.partitions.to_string())?;
    row(&mut w, "meta", "seed", report.seed.to_string())?;
    row(&mut w, "meta", "outputs_calibrated", report.outputs_calibrated.to_string())?;
    row(&mut w, "acceptance", "empirical", report.empirical_acceptance.to_string())?;
    row(&mut w, "acceptance", "se", report.empirical_se.to_string())?;
    row(&mut w, "acceptance", "analytic", report.analytic_acceptance.to_string())?;
    row(&mut w, "leakage", "composed_epsilon", report.composed_epsilon.to_string())?;
    row(&mut w, "leakage", "composed_delta", report.composed_delta.to_string())?;
    if let Some(qs) = &report.output_quantiles {
        row(&mut w, "quantiles", "q025", qs.q025.to_string())?;
        row(&mut w, "quantiles", "q25", qs.q25.to_string())?;
        row(&mut w, "quantiles", "q50", qs.q50.to_string())?;
        row(&mut w, "quantiles", "q75", qs.q75.to_string())?;
        row(&mut w, "quantiles", "q975", qs.q975.to_string())?;
    }
    for r in &report.resolved {
        let section = format!("resolved.{}", r.partition);
        row(&mut w, &section, "size", r.size.to_string())?;
        row(&mut w, &section, "sensitivity", r.sensitivity.to_string())?;
        row(&mut w, &section, "scale", r.scale.to_string())?;
        row(&mut w, &section, "epsilon_y", r.epsilon_y.to_string())?;
        row(&mut w, &section, "delta_y", r.delta_y.to_string())?;
        row(&mut w, &section, "q", r.q.to_string())?;
        row(&mut w, &section, "p", r.p.to_string())?;
        row(&mut w, &section, "w", r.w.to_string())?;
        row(&mut w, &section, "l", r.l.to_string())?;
        row(&mut w, &section, "analytic_acceptance", r.analytic_acceptance.to_string())?;
        if let Some(warning) = &r.warning {
            row(&mut w, &section, "warning", warning.clone())?;
        }
    }
    for (i, v) in report.outputs.iter().enumerate() {
        row(&mut w, "output", &i.to_string(), v.to_string())?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits UTF-8"))
}
