use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::seed::rng_from_seed;
use super::{append_dependents, check_length, check_positive, GeneratedTrace};
use crate::error::{LabError, Result};

/// Geometric Brownian motion sampled from its exact solution
/// `r_t = r0 · exp((μ − σ²/2)·t + σ·W_t)` on the grid `t = k·dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbmConfig {
    pub num_independent: usize,
    pub num_dependent: usize,
    pub drift: f64,
    pub volatility: f64,
    pub initial_value: f64,
    pub dt: f64,
    /// Dependent-column noise std as a fraction of the per-step volatility `σ·√dt`.
    pub noise_std_ratio: f64,
}

impl Default for GbmConfig {
    fn default() -> Self {
        Self {
            num_independent: 16,
            num_dependent: 16,
            drift: 0.0,
            volatility: 0.1,
            initial_value: 1e-4,
            dt: 1.0,
            noise_std_ratio: 0.25,
        }
    }
}

impl GbmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_independent < 1 {
            return Err(LabError::config("num_independent", "must be >= 1"));
        }
        if !self.drift.is_finite() {
            return Err(LabError::config("drift", "must be finite"));
        }
        if !(self.volatility.is_finite() && self.volatility >= 0.0) {
            return Err(LabError::config("volatility", "must be >= 0"));
        }
        check_positive("dt", self.dt)?;
        if !self.initial_value.is_finite() || self.initial_value == 0.0 {
            return Err(LabError::config("initial_value", "must be finite and non-zero"));
        }
        if !(self.noise_std_ratio.is_finite() && self.noise_std_ratio >= 0.0) {
            return Err(LabError::config("noise_std_ratio", "must be >= 0"));
        }
        Ok(())
    }

    fn dependent_noise_std(&self) -> f64 {
        self.noise_std_ratio * self.volatility * self.dt.sqrt()
    }
}

pub fn gen_gbm(cfg: &GbmConfig, length: usize, seed: u64) -> Result<GeneratedTrace> {
    cfg.validate()?;
    check_length(length)?;
    let mut rng = rng_from_seed(seed);
    let increment = Normal::new(0.0, cfg.dt.sqrt()).map_err(|e| LabError::config("dt", e.to_string()))?;
    let log_drift = cfg.drift - 0.5 * cfg.volatility * cfg.volatility;
    let columns: Vec<Vec<f64>> = (0..cfg.num_independent)
        .map(|_| {
            let mut wiener = 0.0;
            (0..length)
                .map(|k| {
                    if k > 0 {
                        wiener += increment.sample(&mut rng);
                    }
                    let t = k as f64 * cfg.dt;
                    cfg.initial_value * (log_drift * t + cfg.volatility * wiener).exp()
                })
                .collect()
        })
        .collect();
    let (columns, parents) =
        append_dependents(columns, cfg.num_dependent, cfg.dependent_noise_std(), &mut rng)?;
    GeneratedTrace::from_columns(columns, parents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace_gen::test_support::mean_var;

    #[test]
    fn zero_volatility_is_deterministic_exponential() {
        let cfg = GbmConfig {
            num_independent: 2,
            num_dependent: 0,
            drift: 0.1,
            volatility: 0.0,
            initial_value: 1.0,
            dt: 1.0,
            noise_std_ratio: 0.25,
        };
        let t = gen_gbm(&cfg, 20, 3).unwrap();
        for a in 0..2 {
            for (k, &v) in t.returns.series(a).iter().enumerate() {
                assert_eq!(v, (0.1 * k as f64).exp());
            }
        }
    }

    #[test]
    fn log_increments_have_ito_drift() {
        let cfg = GbmConfig {
            num_independent: 2,
            num_dependent: 0,
            drift: 0.05,
            volatility: 0.2,
            initial_value: 1.0,
            dt: 1.0,
            noise_std_ratio: 0.0,
        };
        // Keep the path inside f64 range: a 50000-step path is split into 50 chunks.
        let mut incs = Vec::new();
        for chunk in 0..50 {
            let t = gen_gbm(&cfg, 1001, 1000 + chunk).unwrap();
            let s = t.returns.series(0);
            incs.extend(s.windows(2).map(|w| (w[1] / w[0]).ln()));
        }
        let (m, v) = mean_var(&incs);
        let se = (v / incs.len() as f64).sqrt();
        assert!((m - 0.03).abs() < 3.0 * se, "mean {m} se {se}");
    }

    #[test]
    fn same_seed_same_matrix() {
        let cfg = GbmConfig::default();
        assert_eq!(gen_gbm(&cfg, 100, 9).unwrap(), gen_gbm(&cfg, 100, 9).unwrap());
        assert_ne!(gen_gbm(&cfg, 100, 9).unwrap(), gen_gbm(&cfg, 100, 10).unwrap());
    }

    #[test]
    fn rejects_zero_initial_value() {
        let cfg = GbmConfig { initial_value: 0.0, ..GbmConfig::default() };
        assert!(matches!(gen_gbm(&cfg, 10, 0), Err(LabError::Config { .. })));
    }
}
