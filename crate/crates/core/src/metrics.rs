//! Portfolio evaluation metrics.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::correlation::CovarianceMatrix;
use crate::error::{LabError, Result};
use crate::returns::VARIANCE_FLOOR;

/// Aggregated statistics for one run (or the mean across runs).
///
/// Fields that can be undefined for a degenerate run (zero variance) are
/// optional and serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub daily_return_mean: f64,
    pub daily_return_std: f64,
    pub clr: f64,
    pub nhhi: f64,
    pub pv: f64,
    pub dr: Option<f64>,
    pub sr: Option<f64>,
    pub var: f64,
    pub cvar: f64,
    pub rc: Option<Vec<f64>>,
}

fn check_dims(w: &[f64], cov: &CovarianceMatrix) -> Result<()> {
    if w.len() != cov.dim() {
        return Err(LabError::DimensionMismatch {
            expected: cov.dim(),
            found: w.len(),
        });
    }
    Ok(())
}

/// `wᵀΣw`.
pub fn portfolio_variance(w: &[f64], cov: &CovarianceMatrix) -> Result<f64> {
    check_dims(w, cov)?;
    let v = DVector::from_column_slice(w);
    Ok(v.dot(&(cov.values() * &v)))
}

fn positive_variance(w: &[f64], cov: &CovarianceMatrix) -> Result<f64> {
    let pv = portfolio_variance(w, cov)?;
    if !(pv > 0.0) {
        return Err(LabError::DegenerateSeries(format!("portfolio variance is {pv}")));
    }
    Ok(pv)
}

/// `RC_j = w_j (Σw)_j / √(wᵀΣw)`; the contributions sum to the portfolio
/// volatility.
pub fn risk_contribution(w: &[f64], cov: &CovarianceMatrix) -> Result<Vec<f64>> {
    let pv = positive_variance(w, cov)?;
    let v = DVector::from_column_slice(w);
    let marginal = cov.values() * &v;
    let vol = pv.sqrt();
    Ok(w.iter().zip(marginal.iter()).map(|(wi, m)| wi * m / vol).collect())
}

/// `wᵀσ / √(wᵀΣw)`.
pub fn diversification_ratio(w: &[f64], cov: &CovarianceMatrix) -> Result<f64> {
    let pv = positive_variance(w, cov)?;
    let weighted: f64 = w.iter().zip(cov.volatilities()).map(|(a, s)| a * s).sum();
    Ok(weighted / pv.sqrt())
}

/// Herfindahl index normalised to `[0, 1]`: `(HHI − 1/N) / (1 − 1/N)`.
pub fn nhhi(w: &[f64]) -> Result<f64> {
    let n = w.len();
    if n < 2 {
        return Err(LabError::Domain("NHHI is undefined for fewer than two assets".into()));
    }
    let inv = 1.0 / n as f64;
    let hhi: f64 = w.iter().map(|x| x * x).sum();
    Ok(((hhi - inv) / (1.0 - inv)).clamp(0.0, 1.0))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (denominator `T − 1`); zero for fewer than two
/// points.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Per-period Sharpe ratio `(mean − r_free) / std`.
pub fn sharpe_ratio(returns: &[f64], risk_free: f64) -> Result<f64> {
    if returns.len() < 2 {
        return Err(LabError::InsufficientData("Sharpe ratio needs two returns".into()));
    }
    let sd = sample_std(returns);
    if !(sd * sd > VARIANCE_FLOOR) {
        return Err(LabError::DegenerateSeries("return series has zero variance".into()));
    }
    Ok((mean(returns) - risk_free) / sd)
}

fn sorted_checked(returns: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if returns.is_empty() {
        return Err(LabError::InsufficientData("empty return series".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(LabError::Domain(format!("VaR level {alpha} is outside (0, 1)")));
    }
    let mut s = returns.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Historical VaR at level `alpha`: minus the lower empirical quantile
/// `sorted[⌊α(T − 1)⌋]`, so a loss is positive.
pub fn var_historical(returns: &[f64], alpha: f64) -> Result<f64> {
    let s = sorted_checked(returns, alpha)?;
    let idx = (alpha * (s.len() - 1) as f64).floor() as usize;
    Ok(-s[idx])
}

/// Historical CVaR: minus the mean of the returns at or below `−VaR`.
pub fn cvar_historical(returns: &[f64], alpha: f64) -> Result<f64> {
    let s = sorted_checked(returns, alpha)?;
    let idx = (alpha * (s.len() - 1) as f64).floor() as usize;
    let cutoff = s[idx];
    let tail: Vec<f64> = s.iter().copied().take_while(|&r| r <= cutoff).collect();
    Ok(-mean(&tail))
}

/// `Σ ln(1 + r_t)`.
pub fn compound_log_return(returns: &[f64]) -> Result<f64> {
    returns.iter().try_fold(0.0, |acc, &r| {
        if r > -1.0 {
            Ok(acc + r.ln_1p())
        } else {
            Err(LabError::Domain(format!("return {r} is at or below -1")))
        }
    })
}

/// `(x − b) / |b|`.
pub fn improvement(mean_x: f64, mean_baseline: f64) -> Result<f64> {
    if mean_baseline == 0.0 || !mean_baseline.is_finite() {
        return Err(LabError::UndefinedImprovement);
    }
    Ok((mean_x - mean_baseline) / mean_baseline.abs())
}
