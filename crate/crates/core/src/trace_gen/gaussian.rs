use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::seed::rng_from_seed;
use super::{append_dependents, check_length, check_positive, GeneratedTrace};
use crate::error::{LabError, Result};

/// Independent normal columns plus noisy copies of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianConfig {
    pub num_independent: usize,
    pub num_dependent: usize,
    pub base_mean: f64,
    pub base_std: f64,
    /// Dependent-column noise std as a fraction of `base_std`.
    pub noise_std_ratio: f64,
}

impl Default for GaussianConfig {
    fn default() -> Self {
        Self {
            num_independent: 16,
            num_dependent: 16,
            base_mean: 0.0,
            base_std: 0.08,
            noise_std_ratio: 0.25,
        }
    }
}

impl GaussianConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_independent < 1 {
            return Err(LabError::config("num_independent", "must be >= 1"));
        }
        if !self.base_mean.is_finite() {
            return Err(LabError::config("base_mean", "must be finite"));
        }
        check_positive("base_std", self.base_std)?;
        check_positive("noise_std_ratio", self.noise_std_ratio)
    }
}

pub fn gen_gaussian(cfg: &GaussianConfig, length: usize, seed: u64) -> Result<GeneratedTrace> {
    cfg.validate()?;
    check_length(length)?;
    let mut rng = rng_from_seed(seed);
    let base = Normal::new(cfg.base_mean, cfg.base_std)
        .map_err(|e| LabError::config("base_std", e.to_string()))?;
    let columns: Vec<Vec<f64>> = (0..cfg.num_independent)
        .map(|_| (0..length).map(|_| base.sample(&mut rng)).collect())
        .collect();
    let (columns, parents) = append_dependents(
        columns,
        cfg.num_dependent,
        cfg.noise_std_ratio * cfg.base_std,
        &mut rng,
    )?;
    GeneratedTrace::from_columns(columns, parents)
}
