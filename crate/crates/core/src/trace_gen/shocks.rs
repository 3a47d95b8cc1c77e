//! Transient correlation mixing and return shocks layered on ARFIMA traces.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::arfima::{gen_arfima, ArfimaConfig};
use super::seed::{rng_from_seed, stream_seed};
use super::GeneratedTrace;
use crate::error::{LabError, Result};
use crate::returns::ReturnMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShockConfig {
    pub max_shocks: usize,
    pub mixing_beta: f64,
    /// Longest shock as a fraction of the trace length.
    pub max_duration_fraction: f64,
    /// Number of mixed pairs; `None` means one pair per eight assets.
    pub num_mixed_pairs: Option<usize>,
}

impl Default for ShockConfig {
    fn default() -> Self {
        Self {
            max_shocks: 5,
            mixing_beta: 0.5,
            max_duration_fraction: 0.1,
            num_mixed_pairs: None,
        }
    }
}

impl ShockConfig {
    pub fn validate(&self, assets: usize) -> Result<()> {
        if self.max_shocks < 1 {
            return Err(LabError::config("max_shocks", "must be >= 1"));
        }
        if !(self.mixing_beta > 0.0 && self.mixing_beta <= 1.0) {
            return Err(LabError::config("mixing_beta", "must lie in (0, 1]"));
        }
        if !(self.max_duration_fraction > 0.0 && self.max_duration_fraction <= 1.0) {
            return Err(LabError::config("max_duration_fraction", "must lie in (0, 1]"));
        }
        if self.mixed_pairs(assets) > assets / 2 {
            return Err(LabError::config(
                "num_mixed_pairs",
                format!("at most {} disjoint pairs exist among {assets} assets", assets / 2),
            ));
        }
        Ok(())
    }

    pub fn mixed_pairs(&self, assets: usize) -> usize {
        self.num_mixed_pairs.unwrap_or(assets / 8)
    }
}

/// Two assets mixed over the periods `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixingInterval {
    pub first: usize,
    pub second: usize,
    pub start: usize,
    pub end: usize,
}

/// Draws `count` disjoint asset pairs, each with one interval whose length is
/// uniform in `[T/20, T/5]`.
pub fn draw_mixing_pairs<R: Rng>(
    assets: usize,
    periods: usize,
    count: usize,
    rng: &mut R,
) -> Vec<MixingInterval> {
    let mut order: Vec<usize> = (0..assets).collect();
    for i in (1..assets).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let min_len = (periods / 20).max(1);
    let max_len = (periods / 5).max(min_len);
    order
        .chunks_exact(2)
        .take(count)
        .map(|pair| {
            let len = rng.random_range(min_len..=max_len);
            let start = rng.random_range(0..=periods - len);
            MixingInterval {
                first: pair[0],
                second: pair[1],
                start,
                end: start + len,
            }
        })
        .collect()
}

/// Sets `r_a ← β r_a + (1 − β) r_b` and `r_b ← β r_b + (1 − β) r_a`
/// simultaneously inside each interval.
pub fn apply_correlation_mixing(
    returns: &ReturnMatrix,
    pairs: &[MixingInterval],
    beta: f64,
) -> Result<ReturnMatrix> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(LabError::config("mixing_beta", "must lie in (0, 1]"));
    }
    let (periods, assets) = (returns.periods(), returns.assets());
    let mut claimed: Vec<Vec<(usize, usize)>> = vec![Vec::new(); assets];
    for p in pairs {
        if p.first == p.second || p.first >= assets || p.second >= assets {
            return Err(LabError::config(
                "mixing_pairs",
                format!("pair ({}, {}) must name two distinct assets below {assets}", p.first, p.second),
            ));
        }
        if p.start >= p.end || p.end > periods {
            return Err(LabError::config(
                "mixing_pairs",
                format!("interval {}..{} is not inside 0..{periods}", p.start, p.end),
            ));
        }
        for asset in [p.first, p.second] {
            if claimed[asset].iter().any(|&(s, e)| p.start < e && s < p.end) {
                return Err(LabError::config(
                    "mixing_pairs",
                    format!("overlapping mixing intervals on asset {asset}"),
                ));
            }
            claimed[asset].push((p.start, p.end));
        }
    }
    let mut values = returns.values().clone();
    for p in pairs {
        for t in p.start..p.end {
            let a = values[(t, p.first)];
            let b = values[(t, p.second)];
            values[(t, p.first)] = beta * a + (1.0 - beta) * b;
            values[(t, p.second)] = beta * b + (1.0 - beta) * a;
        }
    }
    ReturnMatrix::new(values, returns.labels().to_vec())
}

/// One shock: `duration` periods of asset `asset` starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shock {
    pub asset: usize,
    pub start: usize,
    pub duration: usize,
    pub amplitude: f64,
}

/// Draws between 1 and `max_shocks` shocks; shocks on the same asset never overlap.
pub fn draw_shocks<R: Rng>(assets: usize, periods: usize, cfg: &ShockConfig, rng: &mut R) -> Vec<Shock> {
    let count = rng.random_range(1..=cfg.max_shocks);
    let max_duration = ((periods as f64 * cfg.max_duration_fraction).floor() as usize).max(1);
    let mut shocks: Vec<Shock> = Vec::with_capacity(count);
    for _ in 0..count {
        for _attempt in 0..100 {
            let asset = rng.random_range(0..assets);
            let start = rng.random_range(0..periods);
            let duration = rng.random_range(1..=max_duration).min(periods - start);
            let amplitude = rng.random_range(0.0..1.0);
            let clashes = shocks.iter().any(|s| {
                s.asset == asset && start < s.start + s.duration && s.start < start + duration
            });
            if !clashes {
                shocks.push(Shock {
                    asset,
                    start,
                    duration,
                    amplitude,
                });
                break;
            }
        }
    }
    shocks
}

/// Adds `amplitude · U(−r_max, r_max)` to every period of the shock.
pub fn apply_shock<R: Rng>(series: &mut [f64], shock: &Shock, r_max: f64, rng: &mut R) {
    let bound = r_max.abs();
    for v in &mut series[shock.start..shock.start + shock.duration] {
        let u = if bound > 0.0 { rng.random_range(-bound..bound) } else { 0.0 };
        *v += shock.amplitude * u;
    }
}

pub fn apply_shocks(returns: &ReturnMatrix, cfg: &ShockConfig, seed: u64) -> Result<ReturnMatrix> {
    cfg.validate(returns.assets())?;
    if returns.periods() < 10 {
        return Err(LabError::InsufficientData(format!(
            "shocks need at least 10 periods, got {}",
            returns.periods()
        )));
    }
    let mut rng = rng_from_seed(seed);
    let shocks = draw_shocks(returns.assets(), returns.periods(), cfg, &mut rng);
    let mut columns: Vec<Vec<f64>> = (0..returns.assets()).map(|a| returns.series(a).to_vec()).collect();
    let maxima: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    for s in &shocks {
        apply_shock(&mut columns[s.asset], s, maxima[s.asset], &mut rng);
    }
    ReturnMatrix::from_columns(&columns, returns.labels().to_vec())
}

/// ARFIMA trace, then correlation mixing, then shocks, each from its own stream.
pub fn gen_arfima_with_shocks(
    arfima: &ArfimaConfig,
    shocks: &ShockConfig,
    length: usize,
    seed: u64,
) -> Result<GeneratedTrace> {
    shocks.validate(arfima.num_columns())?;
    let base = gen_arfima(arfima, length, stream_seed(seed, 0))?;
    let assets = base.returns.assets();
    let mut rng = rng_from_seed(stream_seed(seed, 1));
    let pairs = draw_mixing_pairs(assets, length, shocks.mixed_pairs(assets), &mut rng);
    let mixed = apply_correlation_mixing(&base.returns, &pairs, shocks.mixing_beta)?;
    let shocked = apply_shocks(&mixed, shocks, stream_seed(seed, 2))?;
    Ok(GeneratedTrace {
        returns: shocked,
        parents: base.parents,
    })
}
