use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::seed::rng_from_seed;
use super::{append_dependents, check_length, check_positive, GeneratedTrace};
use crate::error::{LabError, Result};

/// Warm-up steps discarded before the recorded sample starts.
pub const GARCH_BURN_IN: usize = 200;

/// GARCH(1,1): `r_t = σ_t z_t`, `σ_t² = α0 + α1·r_{t−1}² + β1·σ_{t−1}²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GarchConfig {
    pub num_independent: usize,
    pub num_dependent: usize,
    pub alpha0: f64,
    pub alpha1: f64,
    pub beta1: f64,
    /// Dependent-column noise std as a fraction of the unconditional std.
    pub noise_std_ratio: f64,
}

impl Default for GarchConfig {
    fn default() -> Self {
        Self {
            num_independent: 16,
            num_dependent: 16,
            alpha0: 2e-5,
            alpha1: 0.1,
            beta1: 0.85,
            noise_std_ratio: 0.25,
        }
    }
}

impl GarchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_independent < 1 {
            return Err(LabError::config("num_independent", "must be >= 1"));
        }
        check_positive("alpha0", self.alpha0)?;
        if !(self.alpha1.is_finite() && self.alpha1 >= 0.0) {
            return Err(LabError::config("alpha1", "must be >= 0"));
        }
        if !(self.beta1.is_finite() && self.beta1 >= 0.0) {
            return Err(LabError::config("beta1", "must be >= 0"));
        }
        if self.alpha1 + self.beta1 >= 1.0 {
            return Err(LabError::config(
                "alpha1",
                format!(
                    "unstable model: alpha1 + beta1 = {} must be < 1",
                    self.alpha1 + self.beta1
                ),
            ));
        }
        check_positive("noise_std_ratio", self.noise_std_ratio)
    }

    pub fn unconditional_variance(&self) -> f64 {
        self.alpha0 / (1.0 - self.alpha1 - self.beta1)
    }
}

/// A single GARCH path with its conditional variances.
#[derive(Debug, Clone)]
pub struct GarchPath {
    pub returns: Vec<f64>,
    pub variances: Vec<f64>,
}

/// Simulates one raw GARCH(1,1) path of `length` steps after the burn-in.
///
/// Unlike [`gen_garch`] the output is not packaged as simple returns, so
/// large-variance parameterizations can be studied without the `> -1` bound.
pub fn garch_path<R: Rng>(cfg: &GarchConfig, length: usize, rng: &mut R) -> GarchPath {
    let mut variance = cfg.unconditional_variance();
    let mut shock: f64 = variance.sqrt() * rng.sample::<f64, _>(StandardNormal);
    let mut returns = Vec::with_capacity(length);
    let mut variances = Vec::with_capacity(length);
    for step in 0..GARCH_BURN_IN + length {
        variance = cfg.alpha0 + cfg.alpha1 * shock * shock + cfg.beta1 * variance;
        let z: f64 = StandardNormal.sample(rng);
        shock = variance.sqrt() * z;
        if step >= GARCH_BURN_IN {
            returns.push(shock);
            variances.push(variance);
        }
    }
    GarchPath { returns, variances }
}

pub fn gen_garch(cfg: &GarchConfig, length: usize, seed: u64) -> Result<GeneratedTrace> {
    cfg.validate()?;
    check_length(length)?;
    let mut rng = rng_from_seed(seed);
    let columns: Vec<Vec<f64>> = (0..cfg.num_independent)
        .map(|_| garch_path(cfg, length, &mut rng).returns)
        .collect();
    let noise = cfg.noise_std_ratio * cfg.unconditional_variance().sqrt();
    let (columns, parents) = append_dependents(columns, cfg.num_dependent, noise, &mut rng)?;
    GeneratedTrace::from_columns(columns, parents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace_gen::test_support::mean_var;

    fn cfg(alpha0: f64, alpha1: f64, beta1: f64) -> GarchConfig {
        GarchConfig {
            num_independent: 2,
            num_dependent: 0,
            alpha0,
            alpha1,
            beta1,
            noise_std_ratio: 0.25,
        }
    }

    #[test]
    fn iid_limit_variance() {
        let c = cfg(0.04, 0.0, 0.0);
        let p = garch_path(&c, 50_000, &mut rng_from_seed(5));
        let (_, v) = mean_var(&p.returns);
        assert!((v - 0.04).abs() < 0.004, "variance {v}");
        let t = gen_garch(&c, 1000, 5).unwrap();
        assert_eq!(t.returns.values().shape(), (1000, 2));
    }

    #[test]
    fn persistent_variance_matches_unconditional() {
        let c = cfg(0.1, 0.05, 0.9);
        let p = garch_path(&c, 100_000, &mut rng_from_seed(21));
        let (_, v) = mean_var(&p.returns);
        assert!((v - 2.0).abs() < 0.3, "variance {v}");
    }

    #[test]
    fn conditional_variance_stays_positive() {
        let c = cfg(1e-6, 0.3, 0.69);
        let p = garch_path(&c, 20_000, &mut rng_from_seed(2));
        assert!(p.variances.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn unstable_parameters_rejected() {
        let err = gen_garch(&cfg(0.1, 0.5, 0.5), 100, 0).unwrap_err();
        assert!(err.to_string().contains("unstable"));
        assert!(gen_garch(&cfg(0.0, 0.1, 0.1), 100, 0).is_err());
    }
}
