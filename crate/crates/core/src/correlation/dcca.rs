//! Detrended cross-correlation coefficients over overlapping boxes.
//!
//! Boxes hold `n + 1` consecutive points of the integrated profile, so a
//! series of length `T` has exactly `T − n` of them. Each box is detrended by
//! an ordinary least-squares line on the local index `0..=n`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{CorrelationMatrix, MetricKind};
use crate::error::{LabError, Result};
use crate::returns::ReturnMatrix;

/// Diagonal jitter applied before inversion when DPCCA regularization is enabled.
pub const DPCCA_RIDGE: f64 = 1e-10;

const MAX_CONDITION: f64 = 1e12;

/// Residuals of one series over all boxes, flattened box after box.
struct Detrended {
    residuals: Vec<f64>,
    /// F² of the series with itself.
    fluctuation: f64,
}

fn check_box_length(t: usize, n: usize) -> Result<()> {
    if n < 2 {
        return Err(LabError::InsufficientData(format!("box length must be >= 2, got {n}")));
    }
    if t < n + 2 {
        return Err(LabError::InsufficientData(format!(
            "detrended correlation with box length {n} needs more than {} periods, got {t}",
            n + 1
        )));
    }
    Ok(())
}

fn detrend(x: &[f64], n: usize) -> Detrended {
    let t = x.len();
    let mean = x.iter().sum::<f64>() / t as f64;
    let mut acc = 0.0;
    let profile: Vec<f64> = x
        .iter()
        .map(|v| {
            acc += v - mean;
            acc
        })
        .collect();

    let width = n + 1;
    let t_mid = n as f64 / 2.0;
    let t_ss: f64 = (0..width).map(|k| (k as f64 - t_mid).powi(2)).sum();
    let boxes = t - n;
    let mut residuals = Vec::with_capacity(boxes * width);
    for j in 0..boxes {
        let seg = &profile[j..j + width];
        let seg_mean = seg.iter().sum::<f64>() / width as f64;
        let slope = seg
            .iter()
            .enumerate()
            .map(|(k, v)| (k as f64 - t_mid) * (v - seg_mean))
            .sum::<f64>()
            / t_ss;
        residuals.extend(
            seg.iter()
                .enumerate()
                .map(|(k, v)| v - seg_mean - slope * (k as f64 - t_mid)),
        );
    }
    let norm = (width * boxes) as f64;
    let fluctuation = residuals.iter().map(|r| r * r).sum::<f64>() / norm;
    let second_moment = x.iter().map(|v| v * v).sum::<f64>() / t as f64;
    let fluctuation = if fluctuation <= 1e-20 * n as f64 * second_moment {
        0.0
    } else {
        fluctuation
    };
    Detrended {
        residuals,
        fluctuation,
    }
}

fn coefficient(a: &Detrended, b: &Detrended) -> f64 {
    let norm = a.residuals.len() as f64;
    let cross = a
        .residuals
        .iter()
        .zip(&b.residuals)
        .map(|(x, y)| x * y)
        .sum::<f64>()
        / norm;
    (cross / (a.fluctuation.sqrt() * b.fluctuation.sqrt())).clamp(-1.0, 1.0)
}

/// DCCA coefficient `F²_xy / (F_xx F_yy)` at box length `n`.
pub fn dcca_pair(x: &[f64], y: &[f64], n: usize) -> Result<f64> {
    if x.len() != y.len() {
        return Err(LabError::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    check_box_length(x.len(), n)?;
    let dx = detrend(x, n);
    let dy = detrend(y, n);
    for (d, name) in [(&dx, "x"), (&dy, "y")] {
        if d.fluctuation == 0.0 {
            return Err(LabError::DegenerateSeries(format!(
                "series {name} has a perfectly linear integrated profile"
            )));
        }
    }
    Ok(coefficient(&dx, &dy))
}

/// Matrix of pairwise DCCA coefficients; entries are computed once and mirrored.
pub fn dcca_matrix(window: &ReturnMatrix, n: usize) -> Result<CorrelationMatrix> {
    check_box_length(window.periods(), n)?;
    let assets = window.assets();
    let detrended: Vec<Detrended> = (0..assets)
        .into_par_iter()
        .map(|a| detrend(window.series(a), n))
        .collect();
    if let Some(a) = detrended.iter().position(|d| d.fluctuation == 0.0) {
        return Err(LabError::DegenerateSeries(format!(
            "asset `{}` has a perfectly linear integrated profile",
            window.labels()[a]
        )));
    }
    let rows: Vec<Vec<f64>> = (0..assets)
        .into_par_iter()
        .map(|i| {
            (i + 1..assets)
                .map(|j| coefficient(&detrended[i], &detrended[j]))
                .collect()
        })
        .collect();
    let mut values = DMatrix::identity(assets, assets);
    for (i, row) in rows.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            let j = i + 1 + k;
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    Ok(CorrelationMatrix {
        values,
        kind: MetricKind::Dcca,
        box_length: Some(n),
    })
}

/// Partial correlations from the inverse `C` of a DCCA matrix:
/// `−C_xy / √(C_xx C_yy)` off the diagonal, `1` on it.
pub fn dpcca_from_dcca(dcca: &CorrelationMatrix, ridge: bool) -> Result<CorrelationMatrix> {
    let n = dcca.dim();
    let mut m = dcca.values().clone();
    if ridge {
        for i in 0..n {
            m[(i, i)] += DPCCA_RIDGE;
        }
    }
    let singular = m.singular_values();
    let (smax, smin) = (singular.max(), singular.min());
    if !(smin > 0.0) || smax / smin > MAX_CONDITION {
        return Err(LabError::Singular(format!(
            "DCCA matrix condition number {:.3e} exceeds {MAX_CONDITION:.0e}",
            smax / smin
        )));
    }
    let inv = m
        .try_inverse()
        .ok_or_else(|| LabError::Singular("DCCA matrix is not invertible".into()))?;
    let diag: Vec<f64> = inv.diagonal().iter().copied().collect();
    if let Some(i) = diag.iter().position(|&c| !(c > 0.0)) {
        return Err(LabError::Singular(format!(
            "inverse DCCA matrix has non-positive diagonal entry {i}"
        )));
    }
    let values = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            (-inv[(i, j)] / (diag[i] * diag[j]).sqrt()).clamp(-1.0, 1.0)
        }
    });
    // Symmetrize: the numerical inverse is symmetric only up to rounding.
    let values = (&values + values.transpose()) * 0.5;
    Ok(CorrelationMatrix {
        values,
        kind: MetricKind::Dpcca,
        box_length: dcca.box_length,
    })
}

pub fn dpcca_matrix(window: &ReturnMatrix, n: usize, ridge: bool) -> Result<CorrelationMatrix> {
    dpcca_from_dcca(&dcca_matrix(window, n)?, ridge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::returns::default_labels;
    use crate::trace_gen::seed::rng_from_seed;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_series(len: usize, seed: u64, scale: f64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        (0..len)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
            .collect()
    }

    /// Direct transcription of the box procedure with explicit per-box fits.
    fn dcca_oracle(x: &[f64], y: &[f64], n: usize) -> f64 {
        let t = x.len();
        let prof = |s: &[f64]| {
            let m = s.iter().sum::<f64>() / t as f64;
            let mut c = 0.0;
            s.iter().map(|v| { c += v - m; c }).collect::<Vec<_>>()
        };
        let (px, py) = (prof(x), prof(y));
        let fit = |seg: &[f64]| {
            // Normal equations for a + b k.
            let w = seg.len() as f64;
            let sk: f64 = (0..seg.len()).map(|k| k as f64).sum();
            let skk: f64 = (0..seg.len()).map(|k| (k * k) as f64).sum();
            let sv: f64 = seg.iter().sum();
            let skv: f64 = seg.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
            let b = (w * skv - sk * sv) / (w * skk - sk * sk);
            let a = (sv - b * sk) / w;
            seg.iter().enumerate().map(|(k, v)| v - a - b * k as f64).collect::<Vec<_>>()
        };
        let (mut fxy, mut fxx, mut fyy) = (0.0, 0.0, 0.0);
        for j in 0..t - n {
            let rx = fit(&px[j..=j + n]);
            let ry = fit(&py[j..=j + n]);
            for k in 0..=n {
                fxy += rx[k] * ry[k] / (n + 1) as f64;
                fxx += rx[k] * rx[k] / (n + 1) as f64;
                fyy += ry[k] * ry[k] / (n + 1) as f64;
            }
        }
        let boxes = (t - n) as f64;
        (fxy / boxes) / ((fxx / boxes).sqrt() * (fyy / boxes).sqrt())
    }

    #[test]
    fn matches_direct_oracle() {
        for seed in 0..5 {
            let x = normal_series(300, seed, 0.01);
            let mut y = normal_series(300, seed + 100, 0.01);
            for (a, b) in y.iter_mut().zip(&x) {
                *a += 0.5 * b;
            }
            let got = dcca_pair(&x, &y, 20).unwrap();
            let want = dcca_oracle(&x, &y, 20);
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn self_and_negated() {
        let x = normal_series(500, 1, 0.02);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((dcca_pair(&x, &x, 60).unwrap() - 1.0).abs() < 1e-12);
        assert!((dcca_pair(&x, &neg, 60).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn independent_series_are_weakly_correlated() {
        let small = (0..100)
            .filter(|&s| {
                let x = normal_series(2000, 2 * s, 1.0);
                let y = normal_series(2000, 2 * s + 1, 1.0);
                dcca_pair(&x, &y, 60).unwrap().abs() < 0.15
            })
            .count();
        assert!(small >= 95, "{small} of 100 below 0.15");
    }

    #[test]
    fn constant_series_is_degenerate() {
        let x = vec![0.01; 100];
        let y = normal_series(100, 3, 0.01);
        assert!(matches!(dcca_pair(&x, &y, 10), Err(LabError::DegenerateSeries(_))));
    }

    #[test]
    fn requires_more_than_n_plus_one_points() {
        let x = normal_series(61, 0, 0.01);
        assert!(matches!(dcca_pair(&x, &x, 60), Err(LabError::InsufficientData(_))));
        assert!(dcca_pair(&normal_series(62, 0, 0.01), &normal_series(62, 1, 0.01), 60).is_ok());
        assert!(dcca_pair(&x, &x, 1).is_err());
    }

    #[test]
    fn matrix_of_identical_columns_is_all_ones() {
        let x = normal_series(200, 5, 0.01);
        let r = ReturnMatrix::from_columns(&[x.clone(), x], default_labels(2)).unwrap();
        let m = dcca_matrix(&r, 30).unwrap();
        for v in m.values().iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert_eq!(m.kind, MetricKind::Dcca);
        assert_eq!(m.box_length, Some(30));
    }

    #[test]
    fn matrix_window_too_short() {
        let cols: Vec<Vec<f64>> = (0..32).map(|s| normal_series(60, s, 0.01)).collect();
        let r = ReturnMatrix::from_columns(&cols, default_labels(32)).unwrap();
        assert!(matches!(dcca_matrix(&r, 60), Err(LabError::InsufficientData(_))));
    }

    #[test]
    fn matrix_names_degenerate_asset() {
        let r = ReturnMatrix::from_columns(
            &[normal_series(100, 1, 0.01), vec![0.002; 100], normal_series(100, 2, 0.01)],
            default_labels(3),
        )
        .unwrap();
        let err = dcca_matrix(&r, 10).unwrap_err();
        assert!(err.to_string().contains("asset_01"), "{err}");
    }

    #[test]
    fn dpcca_of_identity_is_identity() {
        let id = CorrelationMatrix::identity(4, MetricKind::Dcca);
        let p = dpcca_from_dcca(&id, false).unwrap();
        assert_eq!(p.values(), &DMatrix::<f64>::identity(4, 4));
        assert_eq!(p.kind, MetricKind::Dpcca);
    }

    #[test]
    fn dpcca_two_by_two_closed_form() {
        for &r in &[-0.8, -0.3, 0.0, 0.45, 0.9] {
            let d = CorrelationMatrix::from_rows(2, &[1.0, r, r, 1.0], MetricKind::Dcca).unwrap();
            let p = dpcca_from_dcca(&d, false).unwrap();
            assert!((p.get(0, 1) - r).abs() < 1e-12, "r = {r}");
        }
    }

    #[test]
    fn dpcca_rank_one_is_singular() {
        let d = CorrelationMatrix::from_rows(3, &[1.0; 9], MetricKind::Dcca).unwrap();
        assert!(matches!(dpcca_from_dcca(&d, false), Err(LabError::Singular(_))));
        // With the ridge the condition number drops to about 3e10.
        let p = dpcca_from_dcca(&d, true).unwrap();
        assert!(p.values().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn dpcca_on_window_matches_dcca_for_two_assets() {
        let r = ReturnMatrix::from_columns(
            &[normal_series(300, 8, 0.01), normal_series(300, 9, 0.01)],
            default_labels(2),
        )
        .unwrap();
        let d = dcca_matrix(&r, 40).unwrap();
        let p = dpcca_matrix(&r, 40, false).unwrap();
        assert!((d.values() - p.values()).amax() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn symmetric_and_scale_invariant(seed in 0u64..10_000, a in 0.1f64..10.0, b in -10.0f64..-0.1) {
            let x = normal_series(150, seed, 0.01);
            let y: Vec<f64> = normal_series(150, seed + 1, 0.01)
                .iter().zip(&x).map(|(u, v)| u + 0.3 * v).collect();
            let xy = dcca_pair(&x, &y, 15).unwrap();
            prop_assert!((xy - dcca_pair(&y, &x, 15).unwrap()).abs() < 1e-12);
            let ax: Vec<f64> = x.iter().map(|v| a * v).collect();
            let by: Vec<f64> = y.iter().map(|v| b * v).collect();
            prop_assert!((dcca_pair(&ax, &by, 15).unwrap() + xy).abs() < 1e-10);
        }
    }
}
