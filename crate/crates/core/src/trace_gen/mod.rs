//! Synthetic return-trace generators.
//!
//! Every generator is a pure function of `(config, length, seed)`: the same
//! triple always yields a bitwise-identical [`GeneratedTrace`].

mod arfima;
mod garch;
mod gaussian;
mod gbm;
pub mod seed;
mod shocks;

pub use arfima::{arfima_kernel_weight, arfima_pair, gen_arfima, ArfimaConfig};
pub use garch::{gen_garch, garch_path, GarchConfig, GarchPath, GARCH_BURN_IN};
pub use gaussian::{gen_gaussian, GaussianConfig};
pub use gbm::{gen_gbm, GbmConfig};
pub use shocks::{
    apply_correlation_mixing, apply_shock, apply_shocks, draw_mixing_pairs, draw_shocks,
    gen_arfima_with_shocks, MixingInterval, Shock, ShockConfig,
};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::returns::{default_labels, ReturnMatrix};

/// A generated trace together with the provenance of its dependent columns.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTrace {
    pub returns: ReturnMatrix,
    /// `parents[i]` is the independent column that dependent column `i` copies.
    pub parents: Vec<Option<usize>>,
}

impl GeneratedTrace {
    pub(crate) fn from_columns(columns: Vec<Vec<f64>>, parents: Vec<Option<usize>>) -> Result<Self> {
        let labels = default_labels(columns.len());
        Ok(Self {
            returns: ReturnMatrix::from_columns(&columns, labels)?,
            parents,
        })
    }
}

/// One of the five trace models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorConfig {
    Gaussian(GaussianConfig),
    Gbm(GbmConfig),
    Garch(GarchConfig),
    Arfima(ArfimaConfig),
    ArfimaShocks {
        #[serde(default)]
        arfima: ArfimaConfig,
        #[serde(default)]
        shocks: ShockConfig,
    },
}

impl GeneratorConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            GeneratorConfig::Gaussian(_) => "gaussian",
            GeneratorConfig::Gbm(_) => "gbm",
            GeneratorConfig::Garch(_) => "garch",
            GeneratorConfig::Arfima(_) => "arfima",
            GeneratorConfig::ArfimaShocks { .. } => "arfima_shocks",
        }
    }

    /// Total number of columns the generator produces.
    pub fn num_assets(&self) -> usize {
        match self {
            GeneratorConfig::Gaussian(c) => c.num_independent + c.num_dependent,
            GeneratorConfig::Gbm(c) => c.num_independent + c.num_dependent,
            GeneratorConfig::Garch(c) => c.num_independent + c.num_dependent,
            GeneratorConfig::Arfima(c) => c.num_columns(),
            GeneratorConfig::ArfimaShocks { arfima, .. } => arfima.num_columns(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GeneratorConfig::Gaussian(c) => c.validate(),
            GeneratorConfig::Gbm(c) => c.validate(),
            GeneratorConfig::Garch(c) => c.validate(),
            GeneratorConfig::Arfima(c) => c.validate(),
            GeneratorConfig::ArfimaShocks { arfima, shocks } => {
                arfima.validate()?;
                shocks.validate(arfima.num_columns())
            }
        }
    }

    pub fn generate(&self, length: usize, seed: u64) -> Result<GeneratedTrace> {
        match self {
            GeneratorConfig::Gaussian(c) => gen_gaussian(c, length, seed),
            GeneratorConfig::Gbm(c) => gen_gbm(c, length, seed),
            GeneratorConfig::Garch(c) => gen_garch(c, length, seed),
            GeneratorConfig::Arfima(c) => gen_arfima(c, length, seed),
            GeneratorConfig::ArfimaShocks { arfima, shocks } => {
                gen_arfima_with_shocks(arfima, shocks, length, seed)
            }
        }
    }
}

pub(crate) fn check_length(length: usize) -> Result<()> {
    if length < 2 {
        return Err(LabError::config("length", format!("must be >= 2, got {length}")));
    }
    Ok(())
}

pub(crate) fn check_positive(field: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(LabError::config(field, format!("must be > 0, got {value}")));
    }
    Ok(())
}

/// Appends `count` dependent columns, each a uniformly chosen independent
/// column plus white noise of standard deviation `noise_std`.
pub(crate) fn append_dependents<R: Rng>(
    mut columns: Vec<Vec<f64>>,
    count: usize,
    noise_std: f64,
    rng: &mut R,
) -> Result<(Vec<Vec<f64>>, Vec<Option<usize>>)> {
    let independent = columns.len();
    let noise = Normal::new(0.0, noise_std)
        .map_err(|e| LabError::config("noise_std_ratio", e.to_string()))?;
    let mut parents = vec![None; independent];
    for _ in 0..count {
        let parent = rng.random_range(0..independent);
        let col: Vec<f64> = columns[parent]
            .iter()
            .map(|&v| v + noise.sample(rng))
            .collect();
        columns.push(col);
        parents.push(Some(parent));
    }
    Ok((columns, parents))
}

#[cfg(test)]
pub(crate) mod test_support {
    /// Sample Pearson correlation, written independently of the correlation module.
    pub fn sample_corr(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (a, b) in x.iter().zip(y) {
            sxy += (a - mx) * (b - my);
            sxx += (a - mx) * (a - mx);
            syy += (b - my) * (b - my);
        }
        sxy / (sxx * syy).sqrt()
    }

    pub fn mean_var(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }
}
