//! The return matrix shared by every stage of the pipeline.

use std::io::Write;
use std::ops::Range;

use nalgebra::DMatrix;

use crate::error::{LabError, Result};

/// Variances at or below this level (return² units) mark an asset as constant.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// A `T × N` matrix of simple per-period returns, one column per asset.
///
/// Every entry is finite and strictly greater than `-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    values: DMatrix<f64>,
    labels: Vec<String>,
}

impl ReturnMatrix {
    pub fn new(values: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        let (periods, assets) = values.shape();
        if periods < 2 {
            return Err(LabError::InsufficientData(format!(
                "a return matrix needs at least 2 periods, got {periods}"
            )));
        }
        if assets < 2 {
            return Err(LabError::InsufficientData(format!(
                "a return matrix needs at least 2 assets, got {assets}"
            )));
        }
        if labels.len() != assets {
            return Err(LabError::DimensionMismatch {
                expected: assets,
                found: labels.len(),
            });
        }
        for a in 0..assets {
            for t in 0..periods {
                let r = values[(t, a)];
                if !r.is_finite() || r <= -1.0 {
                    return Err(LabError::Domain(format!(
                        "return {r} of asset `{}` at period {t} is not a valid simple return (must be finite and > -1)",
                        labels[a]
                    )));
                }
            }
        }
        Ok(Self { values, labels })
    }

    /// Builds a matrix from per-asset columns of equal length.
    pub fn from_columns(columns: &[Vec<f64>], labels: Vec<String>) -> Result<Self> {
        let periods = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != periods) {
            return Err(LabError::DimensionMismatch {
                expected: periods,
                found: bad.len(),
            });
        }
        let values = DMatrix::from_fn(periods, columns.len(), |t, a| columns[a][t]);
        Self::new(values, labels)
    }

    pub fn periods(&self) -> usize {
        self.values.nrows()
    }

    pub fn assets(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, period: usize, asset: usize) -> f64 {
        self.values[(period, asset)]
    }

    /// Contiguous return series of one asset.
    pub fn series(&self, asset: usize) -> &[f64] {
        let t = self.periods();
        &self.values.as_slice()[asset * t..(asset + 1) * t]
    }

    /// Copies the rows in `range` into a new matrix (at least two rows).
    pub fn slice_rows(&self, range: Range<usize>) -> Result<ReturnMatrix> {
        if range.end > self.periods() || range.start >= range.end {
            return Err(LabError::InsufficientData(format!(
                "row range {range:?} is outside 0..{}",
                self.periods()
            )));
        }
        let len = range.end - range.start;
        if len < 2 {
            return Err(LabError::InsufficientData(format!(
                "window {range:?} holds {len} period(s), at least 2 are required"
            )));
        }
        Ok(ReturnMatrix {
            values: self.values.rows(range.start, len).into_owned(),
            labels: self.labels.clone(),
        })
    }

    /// Writes the matrix as CSV: a header of asset labels, then one row per period.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(&self.labels)?;
        for t in 0..self.periods() {
            wtr.write_record((0..self.assets()).map(|a| format!("{}", self.values[(t, a)])))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Labels `asset_00`, `asset_01`, ... used for synthetic traces.
pub fn default_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("asset_{i:02}")).collect()
}
