//! Covariance, Pearson correlation and the detrended (DCCA / DPCCA)
//! correlation matrices.

mod dcca;

pub use dcca::{dcca_matrix, dcca_pair, dpcca_from_dcca, dpcca_matrix, DPCCA_RIDGE};

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::returns::{ReturnMatrix, VARIANCE_FLOOR};

/// Which correlation measure produced a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "cov", alias = "pearson")]
    Pearson,
    #[serde(rename = "dcca")]
    Dcca,
    #[serde(rename = "dpcca")]
    Dpcca,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Pearson, MetricKind::Dcca, MetricKind::Dpcca];

    /// Short label used in method identifiers (`cov`, `dcca`, `dpcca`).
    pub fn label(self) -> &'static str {
        match self {
            MetricKind::Pearson => "cov",
            MetricKind::Dcca => "dcca",
            MetricKind::Dpcca => "dpcca",
        }
    }

    pub fn is_detrended(self) -> bool {
        !matches!(self, MetricKind::Pearson)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for MetricKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cov" | "pearson" => Ok(MetricKind::Pearson),
            "dcca" => Ok(MetricKind::Dcca),
            "dpcca" => Ok(MetricKind::Dpcca),
            _ => Err(LabError::UnknownMethod(s.to_string())),
        }
    }
}

/// Sample covariance of a window of returns.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    values: DMatrix<f64>,
    pub window_start: usize,
    pub window_end: usize,
}

impl CovarianceMatrix {
    /// Wraps a square symmetric matrix with a non-negative diagonal.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let n = values.nrows();
        if values.ncols() != n {
            return Err(LabError::DimensionMismatch {
                expected: n,
                found: values.ncols(),
            });
        }
        for i in 0..n {
            if !(values[(i, i)] >= 0.0) {
                return Err(LabError::Domain(format!(
                    "covariance diagonal entry {i} is {}",
                    values[(i, i)]
                )));
            }
            for j in 0..i {
                let (a, b) = (values[(i, j)], values[(j, i)]);
                if !a.is_finite() || (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(LabError::Domain(format!(
                        "covariance entry ({i}, {j}) is not symmetric"
                    )));
                }
            }
        }
        Ok(Self {
            values,
            window_start: 0,
            window_end: 0,
        })
    }

    pub fn from_rows(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::from_matrix(DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.values.diagonal().iter().copied().collect()
    }

    pub fn volatilities(&self) -> Vec<f64> {
        self.values.diagonal().iter().map(|v| v.sqrt()).collect()
    }
}

/// Sample covariance with denominator `T − 1`.
pub fn covariance(window: &ReturnMatrix) -> Result<CovarianceMatrix> {
    let t = window.periods();
    if t < 2 {
        return Err(LabError::InsufficientData(format!(
            "covariance needs at least 2 periods, got {t}"
        )));
    }
    let n = window.assets();
    let centered: Vec<Vec<f64>> = (0..n)
        .map(|a| {
            let s = window.series(a);
            let mean = s.iter().sum::<f64>() / t as f64;
            s.iter().map(|v| v - mean).collect()
        })
        .collect();
    let denom = (t - 1) as f64;
    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let c = centered[i]
                .iter()
                .zip(&centered[j])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / denom;
            values[(i, j)] = c;
            values[(j, i)] = c;
        }
    }
    Ok(CovarianceMatrix {
        values,
        window_start: 0,
        window_end: t,
    })
}

/// Covariance of the rows `start..end` of `returns`, tagged with that window.
pub fn covariance_over(returns: &ReturnMatrix, start: usize, end: usize) -> Result<CovarianceMatrix> {
    let mut cov = covariance(&returns.slice_rows(start..end)?)?;
    cov.window_start = start;
    cov.window_end = end;
    Ok(cov)
}

/// Symmetric correlation matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    values: DMatrix<f64>,
    pub kind: MetricKind,
    pub box_length: Option<usize>,
}

impl CorrelationMatrix {
    pub fn new(values: DMatrix<f64>, kind: MetricKind, box_length: Option<usize>) -> Result<Self> {
        let n = values.nrows();
        if values.ncols() != n {
            return Err(LabError::DimensionMismatch {
                expected: n,
                found: values.ncols(),
            });
        }
        for i in 0..n {
            if (values[(i, i)] - 1.0).abs() > 1e-9 {
                return Err(LabError::Domain(format!(
                    "correlation diagonal entry {i} is {}",
                    values[(i, i)]
                )));
            }
            for j in 0..n {
                let v = values[(i, j)];
                if !(v.abs() <= 1.0 + 1e-9) {
                    return Err(LabError::Domain(format!(
                        "correlation entry ({i}, {j}) = {v} is outside [-1, 1]"
                    )));
                }
                if (v - values[(j, i)]).abs() > 1e-12 {
                    return Err(LabError::Domain(format!(
                        "correlation entry ({i}, {j}) is not symmetric"
                    )));
                }
            }
        }
        Ok(Self {
            values,
            kind,
            box_length,
        })
    }

    pub fn from_rows(n: usize, data: &[f64], kind: MetricKind) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(n, n, data), kind, None)
    }

    pub fn identity(n: usize, kind: MetricKind) -> Self {
        Self {
            values: DMatrix::identity(n, n),
            kind,
            box_length: None,
        }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// Writes the matrix as CSV with a leading label column and a header row.
    pub fn write_csv<W: Write>(&self, labels: &[String], out: W) -> Result<()> {
        if labels.len() != self.dim() {
            return Err(LabError::DimensionMismatch {
                expected: self.dim(),
                found: labels.len(),
            });
        }
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec![String::new()];
        header.extend(labels.iter().cloned());
        wtr.write_record(&header)?;
        for (i, label) in labels.iter().enumerate() {
            let mut row = vec![label.clone()];
            row.extend((0..self.dim()).map(|j| format!("{}", self.values[(i, j)])));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `σ⁻¹ Σ σ⁻¹`, with a degenerate-asset error for near-constant assets.
pub fn pearson_corr(cov: &CovarianceMatrix) -> Result<CorrelationMatrix> {
    pearson_corr_labeled(cov, None)
}

pub(crate) fn pearson_corr_labeled(cov: &CovarianceMatrix, labels: Option<&[String]>) -> Result<CorrelationMatrix> {
    let n = cov.dim();
    let vars = cov.variances();
    if let Some(i) = vars.iter().position(|&v| v <= VARIANCE_FLOOR) {
        let asset = labels.map_or_else(|| i.to_string(), |l| l[i].clone());
        return Err(LabError::degenerate(asset, format!("variance {} is below the floor", vars[i])));
    }
    let sd: Vec<f64> = vars.iter().map(|v| v.sqrt()).collect();
    let values = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            (cov.values[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0)
        }
    });
    Ok(CorrelationMatrix {
        values,
        kind: MetricKind::Pearson,
        box_length: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::returns::default_labels;
    use proptest::prelude::*;

    fn matrix(cols: &[Vec<f64>]) -> ReturnMatrix {
        ReturnMatrix::from_columns(cols, default_labels(cols.len())).unwrap()
    }

    #[test]
    fn identical_columns_share_covariance() {
        let c = covariance(&matrix(&[vec![0.1, -0.2, 0.05, 0.3], vec![0.1, -0.2, 0.05, 0.3]])).unwrap();
        assert_eq!(c.values()[(0, 1)], c.values()[(0, 0)]);
        assert_eq!(c.window_end, 4);
    }

    #[test]
    fn constant_column_has_zero_covariance() {
        let c = covariance(&matrix(&[vec![0.1, 0.1, 0.1], vec![0.1, -0.2, 0.3]])).unwrap();
        assert!(c.values()[(0, 0)].abs() < 1e-30);
        assert!(c.values()[(0, 1)].abs() < 1e-16);
    }

    #[test]
    fn hand_covariance() {
        let c = covariance(&matrix(&[vec![0.01, 0.02, 0.03], vec![0.02, 0.04, 0.06]])).unwrap();
        // cov((1,2,3), (2,4,6)) = 2 with denominator 2; scaled by 1e-4 here.
        assert!((c.values()[(0, 1)] - 2e-4).abs() < 1e-18);
    }

    #[test]
    fn pearson_examples() {
        let diag = CovarianceMatrix::from_rows(2, 2, &[4.0, 0.0, 0.0, 9.0]).unwrap();
        assert_eq!(pearson_corr(&diag).unwrap().values(), &DMatrix::<f64>::identity(2, 2));
        let c = CovarianceMatrix::from_rows(2, 2, &[4.0, 2.0, 2.0, 4.0]).unwrap();
        assert_eq!(pearson_corr(&c).unwrap().get(0, 1), 0.5);
        let z = CovarianceMatrix::from_rows(2, 2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        match pearson_corr(&z) {
            Err(LabError::DegenerateAsset { asset, .. }) => assert_eq!(asset, "1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn metric_names_parse() {
        assert_eq!("cov".parse::<MetricKind>().unwrap(), MetricKind::Pearson);
        assert_eq!("DPCCA".parse::<MetricKind>().unwrap(), MetricKind::Dpcca);
        assert!(matches!("foo".parse::<MetricKind>(), Err(LabError::UnknownMethod(_))));
    }

    #[test]
    fn csv_export() {
        let c = CorrelationMatrix::from_rows(2, &[1.0, 0.5, 0.5, 1.0], MetricKind::Dcca).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&default_labels(2), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), ",asset_00,asset_01\nasset_00,1,0.5\nasset_01,0.5,1\n");
    }

    #[test]
    fn rejects_invalid_correlation() {
        assert!(CorrelationMatrix::from_rows(2, &[1.0, 1.5, 1.5, 1.0], MetricKind::Pearson).is_err());
        assert!(CorrelationMatrix::from_rows(2, &[1.0, 0.2, 0.3, 1.0], MetricKind::Pearson).is_err());
    }

    fn columns_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..6, 3usize..40).prop_flat_map(|(n, t)| {
            proptest::collection::vec(proptest::collection::vec(-0.5f64..0.5, t), n)
        })
    }

    proptest! {
        #[test]
        fn covariance_shift_invariant(cols in columns_strategy(), shift in -0.4f64..2.0, which in 0usize..6) {
            let which = which % cols.len();
            let base = covariance(&matrix(&cols)).unwrap();
            let mut shifted = cols.clone();
            for v in &mut shifted[which] {
                *v += shift;
            }
            let moved = covariance(&matrix(&shifted)).unwrap();
            let scale = base.values().amax().max(1e-12);
            prop_assert!((base.values() - moved.values()).amax() <= 1e-10 * scale.max(1.0));
        }

        #[test]
        fn covariance_is_psd(cols in columns_strategy()) {
            let c = covariance(&matrix(&cols)).unwrap();
            let eig = c.values().clone().symmetric_eigen();
            let max = eig.eigenvalues.amax();
            prop_assert!(eig.eigenvalues.min() >= -1e-10 * max.max(1e-300));
        }

        #[test]
        fn pearson_bounded(cols in columns_strategy()) {
            let c = covariance(&matrix(&cols)).unwrap();
            if let Ok(p) = pearson_corr(&c) {
                for i in 0..p.dim() {
                    prop_assert_eq!(p.get(i, i), 1.0);
                    for j in 0..p.dim() {
                        prop_assert!(p.get(i, j).abs() <= 1.0);
                    }
                }
            }
        }
    }
}
