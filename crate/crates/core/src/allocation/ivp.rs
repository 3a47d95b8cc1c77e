use super::{SchemeKind, Weights};
use crate::correlation::MetricKind;
use crate::error::{LabError, Result};
use crate::returns::VARIANCE_FLOOR;

/// Weights proportional to `1/σ_i`.
pub fn ivp_weights(volatilities: &[f64]) -> Result<Weights> {
    if let Some((i, s)) = volatilities
        .iter()
        .enumerate()
        .find(|(_, &s)| !(s.is_finite() && s * s > VARIANCE_FLOOR))
    {
        return Err(LabError::degenerate(i.to_string(), format!("volatility {s} is too small")));
    }
    let inv: Vec<f64> = volatilities.iter().map(|s| 1.0 / s).collect();
    let total: f64 = inv.iter().sum();
    Weights::new(
        inv.iter().map(|v| v / total).collect(),
        SchemeKind::Ivp,
        MetricKind::Pearson,
    )
}
