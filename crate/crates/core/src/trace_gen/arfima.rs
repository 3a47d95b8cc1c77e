//! Cross-coupled fractionally integrated pairs with power-law memory.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::seed::rng_from_seed;
use super::{append_dependents, check_length, check_positive, GeneratedTrace};
use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArfimaConfig {
    pub num_pairs: usize,
    pub num_dependent: usize,
    /// Own-history weight `W`; the other series of the pair gets `1 − W`.
    pub coupling_weight: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub kernel_truncation: usize,
    /// Standard deviation of the white-noise innovations.
    pub innovation_std: f64,
    /// Dependent-column noise std as a fraction of `innovation_std`.
    pub noise_std_ratio: f64,
}

impl Default for ArfimaConfig {
    fn default() -> Self {
        Self {
            num_pairs: 8,
            num_dependent: 16,
            coupling_weight: 0.75,
            rho1: 0.3,
            rho2: 0.4,
            kernel_truncation: 100,
            innovation_std: 0.01,
            noise_std_ratio: 0.25,
        }
    }
}

impl ArfimaConfig {
    pub fn num_columns(&self) -> usize {
        2 * self.num_pairs + self.num_dependent
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_pairs < 1 {
            return Err(LabError::config("num_pairs", "must be >= 1"));
        }
        if !(0.5..=1.0).contains(&self.coupling_weight) {
            return Err(LabError::config(
                "coupling_weight",
                format!("must lie in [0.5, 1], got {}", self.coupling_weight),
            ));
        }
        for (field, rho) in [("rho1", self.rho1), ("rho2", self.rho2)] {
            if !(rho.is_finite() && rho.abs() <= 0.5) {
                return Err(LabError::config(field, format!("must lie in [-0.5, 0.5], got {rho}")));
            }
            if rho == 0.0 {
                return Err(LabError::config(field, "Gamma(-rho) is singular at rho = 0"));
            }
        }
        if self.kernel_truncation < 1 {
            return Err(LabError::config("kernel_truncation", "must be >= 1"));
        }
        check_positive("innovation_std", self.innovation_std)?;
        check_positive("noise_std_ratio", self.noise_std_ratio)
    }
}

/// `ln|Γ(x)|` and the sign of `Γ(x)`.
fn ln_abs_gamma(x: f64) -> Result<(f64, f64)> {
    if x > 0.0 {
        return Ok((ln_gamma(x), 1.0));
    }
    if x == x.floor() {
        return Err(LabError::config("rho", format!("Gamma is singular at {x}")));
    }
    // Reflection: Γ(x) = π / (sin(πx) Γ(1 − x)) with Γ(1 − x) > 0.
    let s = (std::f64::consts::PI * x).sin();
    Ok((std::f64::consts::PI.ln() - s.abs().ln() - ln_gamma(1.0 - x), s.signum()))
}

/// Kernel weight `a_n(ρ) = Γ(n − ρ) / (Γ(−ρ) Γ(1 + n))`, evaluated in log space.
pub fn arfima_kernel_weight(n: usize, rho: f64) -> Result<f64> {
    if n == 0 {
        return Err(LabError::config("n", "kernel lags start at 1"));
    }
    let n = n as f64;
    let (ln_num, sign_num) = ln_abs_gamma(n - rho)?;
    let (ln_den, sign_den) = ln_abs_gamma(-rho)?;
    Ok(sign_num * sign_den * (ln_num - ln_den - ln_gamma(1.0 + n)).exp())
}

fn lag_coefficients(rho: f64, truncation: usize) -> Result<Vec<f64>> {
    // a_n(ρ) is the n-th coefficient of (1 − B)^ρ; moving it to the right-hand
    // side gives the long-memory autoregression x_i = Σ −a_n(ρ) x_{i−n} + ε_i.
    (1..=truncation)
        .map(|n| arfima_kernel_weight(n, rho).map(|a| -a))
        .collect()
}

/// Runs the coupled pair recursion on given innovations.
///
/// Sums are truncated at `min(i, kernel_truncation)` lags.
pub fn arfima_pair(cfg: &ArfimaConfig, eps1: &[f64], eps2: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if eps1.len() != eps2.len() {
        return Err(LabError::DimensionMismatch {
            expected: eps1.len(),
            found: eps2.len(),
        });
    }
    let c1 = lag_coefficients(cfg.rho1, cfg.kernel_truncation)?;
    let c2 = lag_coefficients(cfg.rho2, cfg.kernel_truncation)?;
    let w = cfg.coupling_weight;
    let len = eps1.len();
    let mut x = Vec::with_capacity(len);
    let mut y = Vec::with_capacity(len);
    for i in 0..len {
        let lags = i.min(cfg.kernel_truncation);
        let (mut own1, mut own2) = (0.0, 0.0);
        for n in 1..=lags {
            own1 += c1[n - 1] * x[i - n];
            own2 += c2[n - 1] * y[i - n];
        }
        x.push(w * own1 + (1.0 - w) * own2 + eps1[i]);
        y.push((1.0 - w) * own1 + w * own2 + eps2[i]);
    }
    Ok((x, y))
}

pub fn gen_arfima(cfg: &ArfimaConfig, length: usize, seed: u64) -> Result<GeneratedTrace> {
    cfg.validate()?;
    check_length(length)?;
    if cfg.kernel_truncation > length {
        return Err(LabError::config(
            "kernel_truncation",
            format!("{} exceeds the trace length {length}", cfg.kernel_truncation),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let noise = Normal::new(0.0, cfg.innovation_std)
        .map_err(|e| LabError::config("innovation_std", e.to_string()))?;
    let mut columns = Vec::with_capacity(cfg.num_columns());
    for _ in 0..cfg.num_pairs {
        let eps1: Vec<f64> = (0..length).map(|_| noise.sample(&mut rng)).collect();
        let eps2: Vec<f64> = (0..length).map(|_| noise.sample(&mut rng)).collect();
        let (x, y) = arfima_pair(cfg, &eps1, &eps2)?;
        columns.push(x);
        columns.push(y);
    }
    let (columns, parents) = append_dependents(
        columns,
        cfg.num_dependent,
        cfg.noise_std_ratio * cfg.innovation_std,
        &mut rng,
    )?;
    GeneratedTrace::from_columns(columns, parents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Γ via the Lanczos approximation on the real line, independent of statrs.
    fn gamma_oracle(x: f64) -> f64 {
        if x < 0.5 {
            std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_oracle(1.0 - x))
        } else {
            const G: f64 = 7.0;
            const C: [f64; 9] = [
                0.999_999_999_999_809_9,
                676.520_368_121_885_1,
                -1_259.139_216_722_402_8,
                771.323_428_777_653_1,
                -176.615_029_162_140_6,
                12.507_343_278_686_905,
                -0.138_571_095_265_720_12,
                9.984_369_578_019_572e-6,
                1.505_632_735_149_311_6e-7,
            ];
            let x = x - 1.0;
            let mut a = C[0];
            let t = x + G + 0.5;
            for (i, c) in C.iter().enumerate().skip(1) {
                a += c / (x + i as f64);
            }
            (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
        }
    }

    #[test]
    fn first_kernel_weight_is_minus_rho() {
        let a1 = arfima_kernel_weight(1, 0.4).unwrap();
        let oracle = gamma_oracle(0.6) / (gamma_oracle(-0.4) * gamma_oracle(2.0));
        assert!((a1 + 0.4).abs() < 1e-12, "a1 = {a1}");
        assert!((a1 - oracle).abs() < 1e-10);
    }

    #[test]
    fn kernel_matches_gamma_oracle() {
        for &rho in &[-0.45, -0.2, 0.1, 0.33, 0.5] {
            for n in 1..30 {
                let oracle = gamma_oracle(n as f64 - rho) / (gamma_oracle(-rho) * gamma_oracle(1.0 + n as f64));
                let got = arfima_kernel_weight(n, rho).unwrap();
                assert!((got - oracle).abs() <= 1e-9 * oracle.abs().max(1e-12), "n={n} rho={rho}");
            }
        }
    }

    #[test]
    fn zero_rho_is_singular() {
        assert!(arfima_kernel_weight(3, 0.0).is_err());
        let cfg = ArfimaConfig { rho2: 0.0, ..ArfimaConfig::default() };
        assert!(matches!(gen_arfima(&cfg, 200, 1), Err(LabError::Config { .. })));
    }

    #[test]
    fn full_coupling_weight_ignores_partner() {
        let cfg = ArfimaConfig { coupling_weight: 1.0, ..ArfimaConfig::default() };
        let eps1: Vec<f64> = (0..300).map(|i| ((i * 37 % 11) as f64 - 5.0) * 1e-3).collect();
        let eps2a: Vec<f64> = (0..300).map(|i| ((i * 13 % 7) as f64 - 3.0) * 1e-3).collect();
        let eps2b: Vec<f64> = eps2a.iter().map(|e| -3.0 * e).collect();
        let (xa, _) = arfima_pair(&cfg, &eps1, &eps2a).unwrap();
        let (xb, _) = arfima_pair(&cfg, &eps1, &eps2b).unwrap();
        assert_eq!(xa, xb);
    }

    #[test]
    fn shape_and_determinism() {
        let cfg = ArfimaConfig::default();
        let a = gen_arfima(&cfg, 520, 77).unwrap();
        assert_eq!(a.returns.values().shape(), (520, 32));
        assert_eq!(a, gen_arfima(&cfg, 520, 77).unwrap());
        let short = ArfimaConfig { kernel_truncation: 600, ..cfg };
        assert!(gen_arfima(&short, 520, 77).is_err());
    }

    proptest! {
        #[test]
        fn kernel_magnitude_decreases(rho in -0.5f64..0.5, n in 2usize..400) {
            prop_assume!(rho.abs() > 1e-6);
            let a = arfima_kernel_weight(n, rho).unwrap().abs();
            let b = arfima_kernel_weight(n + 1, rho).unwrap().abs();
            prop_assert!(b < a);
        }
    }
}
