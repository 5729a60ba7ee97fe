//! Dataset ingestion: delimited text in, clipped numeric values out.
//!
//! Ingestion is deliberately boring and deterministic: rows keep file
//! order, non-available values are dropped, and every surviving value is
//! clamped into the clipping window [clip_lo, clip_hi] before any
//! aggregation. The clipping window is what defines the query sensitivity
//! Δ_f, so clamping is a correctness requirement, not cosmetics.

use crate::error::{HarnessError, Result};
use brdp_core::QueryKind;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A clipped, single-column dataset with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetTable {
    /// Clamped values in deterministic (file) order.
    pub values: Vec<f64>,
    /// Name of the identifier column (metadata only).
    pub id_column: String,
    /// Name of the ingested value column.
    pub value_column: String,
    /// Lower clipping bound.
    pub clip_lo: f64,
    /// Upper clipping bound.
    pub clip_hi: f64,
}

impl DatasetTable {
    /// Build a table from raw values, clamping each into the clipping
    /// window. Requires clip_lo < clip_hi and at least one value.
    pub fn new(
        values: Vec<f64>,
        id_column: impl Into<String>,
        value_column: impl Into<String>,
        clip_lo: f64,
        clip_hi: f64,
    ) -> Result<Self> {
        if !(clip_lo < clip_hi) || !clip_lo.is_finite() || !clip_hi.is_finite() {
            return Err(HarnessError::Config(format!(
                "clipping bounds must be finite with clip_lo < clip_hi, got [{clip_lo}, {clip_hi}]"
            )));
        }
        if values.is_empty() {
            return Err(HarnessError::EmptyDataset(
                "no usable rows after dropping non-available values".into(),
            ));
        }
        let values = values
            .into_iter()
            .map(|v| v.clamp(clip_lo, clip_hi))
            .collect();
        Ok(Self {
            values,
            id_column: id_column.into(),
            value_column: value_column.into(),
            clip_lo,
            clip_hi,
        })
    }

    /// Number of records |X|.
    #[must_use]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True when the table holds no records.
    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Query sensitivity induced by the clipping window: Sum uses the
    /// window width, Count is 1 per record, Average divides the width by
    /// the record count.
    #[must_use]
    pub fn sensitivity(&self, kind: QueryKind) -> f64 {
        let width = self.clip_hi - self.clip_lo;
        match kind {
            QueryKind::Sum => width,
            QueryKind::Count => 1.0,
            QueryKind::Average => width / self.values.len() as f64,
        }
    }
}

/// Read a comma-separated file with a header row, keeping `value_column`
/// and dropping rows whose value does not parse as a finite number
/// (empty cells, "NA", "?", and similar markers all count as
/// non-available). Values are clamped into [clip_lo, clip_hi].
pub fn ingest_csv(
    path: impl AsRef<Path>,
    id_column: &str,
    value_column: &str,
    clip_lo: f64,
    clip_hi: f64,
) -> Result<DatasetTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let value_idx = headers
        .iter()
        .position(|h| h == value_column)
        .ok_or_else(|| {
            HarnessError::Schema(format!(
                "value column {value_column:?} not found in header {:?}",
                headers.iter().collect::<Vec<_>>()
            ))
        })?;
    // The id column is provenance metadata; require it to exist so typos
    // fail loudly, but its contents are never read.
    if !headers.iter().any(|h| h == id_column) {
        return Err(HarnessError::Schema(format!(
            "id column {id_column:?} not found in header {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record?;
        let Some(cell) = record.get(value_idx) else {
            continue;
        };
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            _ => {} // non-available: drop the row
        }
    }
    DatasetTable::new(values, id_column, value_column, clip_lo, clip_hi)
}
