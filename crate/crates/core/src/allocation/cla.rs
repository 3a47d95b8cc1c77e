//! Critical line algorithm for long-only mean-variance optimisation under
//! box constraints.
//!
//! Along the critical line the free weights solve
//!
//! ```text
//! Σ_FF w_F − γ 1 = λ μ_F − Σ_FB w_B,    1ᵀ w_F = 1 − 1ᵀ w_B
//! ```
//!
//! so `w_F(λ) = a + λ b` and `γ(λ) = c + λ d`. Turning points are the values
//! of λ where a free weight reaches a bound or a bounded weight's multiplier
//! changes sign. The trace starts at the maximum-return portfolio (λ = ∞)
//! and ends at the minimum-variance portfolio (λ = 0).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{SchemeKind, Weights};
use crate::correlation::{CovarianceMatrix, MetricKind};
use crate::error::{LabError, Result};

const MAX_KKT_CONDITION: f64 = 1e14;
const BOUND_TOL: f64 = 1e-12;
const MULTIPLIER_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaConfig {
    pub lower_bounds: Vec<f64>,
    pub upper_bounds: Vec<f64>,
    /// Portfolio return to hit on the frontier; `None` selects the
    /// minimum-variance turning point.
    pub target_return: Option<f64>,
}

impl ClaConfig {
    pub fn long_only(n: usize) -> Self {
        Self::uniform(n, 0.0, 1.0, None)
    }

    pub fn uniform(n: usize, lower: f64, upper: f64, target_return: Option<f64>) -> Self {
        Self {
            lower_bounds: vec![lower; n],
            upper_bounds: vec![upper; n],
            target_return,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for (name, b) in [("lower_bounds", &self.lower_bounds), ("upper_bounds", &self.upper_bounds)] {
            if b.len() != n {
                return Err(LabError::DimensionMismatch {
                    expected: n,
                    found: b.len(),
                });
            }
            if let Some(v) = b.iter().find(|v| !v.is_finite()) {
                return Err(LabError::config(name, format!("bound {v} is not finite")));
            }
        }
        for i in 0..n {
            let (l, u) = (self.lower_bounds[i], self.upper_bounds[i]);
            if !(0.0..=1.0).contains(&l) || !(0.0..=1.0).contains(&u) || l > u {
                return Err(LabError::Infeasible(format!(
                    "bounds [{l}, {u}] for asset {i} must satisfy 0 <= l <= u <= 1"
                )));
            }
        }
        let lo: f64 = self.lower_bounds.iter().sum();
        let hi: f64 = self.upper_bounds.iter().sum();
        if lo > 1.0 + BOUND_TOL || hi < 1.0 - BOUND_TOL {
            return Err(LabError::Infeasible(format!(
                "bounds admit no fully invested portfolio (sum of lower {lo}, sum of upper {hi})"
            )));
        }
        if let Some(t) = self.target_return {
            if !t.is_finite() {
                return Err(LabError::config("target_return", "must be finite"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurningPoint {
    pub weights: Vec<f64>,
    /// Risk-tolerance multiplier; infinite for the maximum-return corner.
    pub lambda: f64,
}

/// Turning points of the efficient frontier ordered by decreasing λ. The
/// last point is the minimum-variance portfolio.
pub fn cla_turning_points(
    cov: &CovarianceMatrix,
    mean: &[f64],
    cfg: &ClaConfig,
) -> Result<Vec<TurningPoint>> {
    let n = cov.dim();
    if mean.len() != n {
        return Err(LabError::DimensionMismatch {
            expected: n,
            found: mean.len(),
        });
    }
    if let Some(m) = mean.iter().find(|m| !m.is_finite()) {
        return Err(LabError::Domain(format!("mean return {m} is not finite")));
    }
    cfg.validate(n)?;
    let problem = Problem::new(cov, mean, cfg)?;
    problem.trace()
}

/// CLA weights: the minimum-variance turning point, or the frontier point
/// interpolated between turning points at `target_return`.
pub fn cla_weights(cov: &CovarianceMatrix, mean: &[f64], cfg: &ClaConfig) -> Result<Weights> {
    let points = cla_turning_points(cov, mean, cfg)?;
    let values = match cfg.target_return {
        None => points.last().expect("trace is never empty").weights.clone(),
        Some(target) => interpolate_target(&points, mean, target)?,
    };
    let values = clean(values, &cfg.lower_bounds, &cfg.upper_bounds);
    Weights::new(values, SchemeKind::Cla, MetricKind::Pearson)
}

fn interpolate_target(points: &[TurningPoint], mean: &[f64], target: f64) -> Result<Vec<f64>> {
    let ret = |w: &[f64]| w.iter().zip(mean).map(|(a, b)| a * b).sum::<f64>();
    let returns: Vec<f64> = points.iter().map(|p| ret(&p.weights)).collect();
    let hi = returns[0];
    let lo = *returns.last().unwrap();
    let tol = 1e-12 * hi.abs().max(lo.abs()).max(1.0);
    if target > hi + tol || target < lo - tol {
        return Err(LabError::Infeasible(format!(
            "target return {target} lies outside the frontier range [{lo}, {hi}]"
        )));
    }
    // Returns decrease (weakly) along the trace.
    for k in 0..points.len().saturating_sub(1) {
        let (r0, r1) = (returns[k], returns[k + 1]);
        if target <= r0 + tol && target >= r1 - tol {
            if (r0 - r1).abs() <= tol {
                return Ok(points[k + 1].weights.clone());
            }
            let t = ((r0 - target) / (r0 - r1)).clamp(0.0, 1.0);
            return Ok(points[k]
                .weights
                .iter()
                .zip(&points[k + 1].weights)
                .map(|(a, b)| a + t * (b - a))
                .collect());
        }
    }
    Ok(points[0].weights.clone())
}

/// Clamp rounding noise back into the box and restore the budget.
fn clean(mut w: Vec<f64>, lower: &[f64], upper: &[f64]) -> Vec<f64> {
    for (i, v) in w.iter_mut().enumerate() {
        *v = v.clamp(lower[i], upper[i]);
    }
    let excess = w.iter().sum::<f64>() - 1.0;
    if excess != 0.0 {
        // Spread the residual over the weights with room to absorb it.
        let room: Vec<f64> = (0..w.len())
            .map(|i| if excess > 0.0 { w[i] - lower[i] } else { upper[i] - w[i] })
            .collect();
        let total: f64 = room.iter().sum();
        if total > 0.0 {
            for i in 0..w.len() {
                w[i] -= excess * room[i] / total;
            }
        }
    }
    w
}

struct Problem {
    /// Covariance divided by its mean diagonal, so tolerances are unitless.
    sigma: DMatrix<f64>,
    scale: f64,
    mean: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

struct Line {
    a: Vec<f64>,
    b: Vec<f64>,
    c: f64,
    d: f64,
}

enum Event {
    ToBound { asset: usize, value: f64 },
    Release { asset: usize },
}

impl Problem {
    fn new(cov: &CovarianceMatrix, mean: &[f64], cfg: &ClaConfig) -> Result<Self> {
        let n = cov.dim();
        let scale = cov.values().diagonal().sum() / n as f64;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(LabError::Singular("covariance matrix has no variance".into()));
        }
        Ok(Self {
            sigma: cov.values() / scale,
            scale,
            mean: mean.to_vec(),
            lower: cfg.lower_bounds.clone(),
            upper: cfg.upper_bounds.clone(),
        })
    }

    fn n(&self) -> usize {
        self.mean.len()
    }

    /// Solve the equality-constrained system for the free set, with the
    /// bounded weights held at their current values.
    fn line(&self, free: &[usize], w: &[f64]) -> Result<Line> {
        let k = free.len();
        let bounded: Vec<usize> = (0..self.n()).filter(|i| !free.contains(i)).collect();
        let mut kkt = DMatrix::zeros(k + 1, k + 1);
        let mut rhs = DMatrix::zeros(k + 1, 2);
        for (r, &i) in free.iter().enumerate() {
            for (c, &j) in free.iter().enumerate() {
                kkt[(r, c)] = self.sigma[(i, j)];
            }
            kkt[(r, k)] = -1.0;
            kkt[(k, r)] = 1.0;
            rhs[(r, 0)] = -bounded.iter().map(|&j| self.sigma[(i, j)] * w[j]).sum::<f64>();
            rhs[(r, 1)] = self.mean[i];
        }
        rhs[(k, 0)] = 1.0 - bounded.iter().map(|&j| w[j]).sum::<f64>();

        let sv = kkt.singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if !(smin > 0.0) || smax / smin > MAX_KKT_CONDITION {
            return Err(LabError::Singular(format!(
                "critical-line system for {k} free assets is singular (condition {:.3e})",
                smax / smin
            )));
        }
        let sol = kkt
            .lu()
            .solve(&rhs)
            .ok_or_else(|| LabError::Singular("critical-line system is not invertible".into()))?;
        Ok(Line {
            a: (0..k).map(|r| sol[(r, 0)]).collect(),
            b: (0..k).map(|r| sol[(r, 1)]).collect(),
            c: sol[(k, 0)],
            d: sol[(k, 1)],
        })
    }

    /// Multiplier of bounded asset `i` as `p + λ q`; the gradient of
    /// `½wᵀΣw − λμᵀw − γ(1ᵀw − 1)` in coordinate `i`.
    fn multiplier(&self, i: usize, free: &[usize], w: &[f64], line: &Line) -> (f64, f64) {
        let mut p = -line.c;
        let mut q = -self.mean[i] - line.d;
        for (r, &j) in free.iter().enumerate() {
            p += self.sigma[(i, j)] * line.a[r];
            q += self.sigma[(i, j)] * line.b[r];
        }
        for j in (0..self.n()).filter(|j| !free.contains(j)) {
            p += self.sigma[(i, j)] * w[j];
        }
        (p, q)
    }

    fn at_lower(&self, i: usize, w: &[f64]) -> bool {
        (w[i] - self.lower[i]).abs() <= (w[i] - self.upper[i]).abs()
    }

    /// Greedy maximum-return corner: fill assets by descending mean.
    fn start(&self) -> (Vec<f64>, Vec<usize>) {
        let n = self.n();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.mean[b].total_cmp(&self.mean[a]).then(a.cmp(&b)));
        let mut w = self.lower.clone();
        let mut room = 1.0 - w.iter().sum::<f64>();
        let mut free = None;
        for &i in &order {
            let span = self.upper[i] - self.lower[i];
            if span >= room {
                w[i] += room;
                free = Some(i);
                break;
            }
            w[i] = self.upper[i];
            room -= span;
        }
        let free = free.unwrap_or(*order.last().unwrap());
        (w, vec![free])
    }

    fn trace(&self) -> Result<Vec<TurningPoint>> {
        let (mut w, mut free) = self.start();
        let mut points = vec![TurningPoint {
            weights: w.clone(),
            lambda: f64::INFINITY,
        }];
        let mut lambda_cur = f64::INFINITY;
        let mut last_changed: Option<usize> = None;
        let max_steps = 10 * self.n() + 10;

        for _ in 0..max_steps {
            let line = self.line(&free, &w)?;
            let ceiling = if lambda_cur.is_finite() {
                lambda_cur * (1.0 + 1e-9) + 1e-12
            } else {
                f64::INFINITY
            };
            let mut best: Option<(f64, Event)> = None;
            let mut consider = |lam: f64, ev: Event, asset: usize| {
                if lam.is_finite()
                    && lam > 0.0
                    && lam <= ceiling
                    && !(Some(asset) == last_changed && lam >= lambda_cur * (1.0 - 1e-9))
                    && best.as_ref().is_none_or(|(b, _)| lam > *b)
                {
                    best = Some((lam, ev));
                }
            };

            if free.len() > 1 {
                for (r, &i) in free.iter().enumerate() {
                    let (a, b) = (line.a[r], line.b[r]);
                    // Lowering λ moves w_i by −b per unit.
                    if b > 0.0 {
                        consider((self.lower[i] - a) / b, Event::ToBound { asset: i, value: self.lower[i] }, i);
                    } else if b < 0.0 {
                        consider((self.upper[i] - a) / b, Event::ToBound { asset: i, value: self.upper[i] }, i);
                    }
                }
            }
            for i in (0..self.n()).filter(|i| !free.contains(i)) {
                let (p, q) = self.multiplier(i, &free, &w, &line);
                // At the lower bound the multiplier must stay ≥ 0, at the
                // upper bound ≤ 0. Lowering λ changes it by −q per unit.
                let crosses = if self.at_lower(i, &w) { q > 0.0 } else { q < 0.0 };
                if crosses {
                    consider(-p / q, Event::Release { asset: i }, i);
                }
            }

            let Some((lam, event)) = best else {
                break;
            };
            let lam = lam.min(lambda_cur);
            for (r, &i) in free.iter().enumerate() {
                w[i] = (line.a[r] + lam * line.b[r]).clamp(self.lower[i], self.upper[i]);
            }
            match event {
                Event::ToBound { asset, value } => {
                    w[asset] = value;
                    free.retain(|&i| i != asset);
                    last_changed = Some(asset);
                }
                Event::Release { asset } => {
                    free.push(asset);
                    free.sort_unstable();
                    last_changed = Some(asset);
                }
            }
            lambda_cur = lam;
            points.push(TurningPoint {
                weights: w.clone(),
                lambda: lam * self.scale,
            });
        }

        let (w_min, _) = self.refine(0.0, w, free)?;
        points.push(TurningPoint {
            weights: w_min,
            lambda: 0.0,
        });
        Ok(points)
    }

    /// Primal active-set solve of the KKT conditions at fixed λ, warm
    /// started from a feasible `w`. This settles the λ = 0 endpoint and any
    /// ties the parametric trace could not resolve.
    fn refine(&self, lambda: f64, mut w: Vec<f64>, mut free: Vec<usize>) -> Result<(Vec<f64>, Vec<usize>)> {
        let max_iter = 50 * self.n() + 50;
        for _ in 0..max_iter {
            let line = self.line(&free, &w)?;
            let target: Vec<f64> = (0..free.len()).map(|r| line.a[r] + lambda * line.b[r]).collect();

            let mut step = 1.0;
            let mut blocking = None;
            for (r, &i) in free.iter().enumerate() {
                let delta = target[r] - w[i];
                let (t, bound) = if target[r] < self.lower[i] - BOUND_TOL && delta < 0.0 {
                    ((self.lower[i] - w[i]) / delta, self.lower[i])
                } else if target[r] > self.upper[i] + BOUND_TOL && delta > 0.0 {
                    ((self.upper[i] - w[i]) / delta, self.upper[i])
                } else {
                    continue;
                };
                if t < step {
                    step = t.max(0.0);
                    blocking = Some((i, bound));
                }
            }

            for (r, &i) in free.iter().enumerate() {
                w[i] = (w[i] + step * (target[r] - w[i])).clamp(self.lower[i], self.upper[i]);
            }
            if let Some((i, bound)) = blocking {
                w[i] = bound;
                free.retain(|&f| f != i);
                continue;
            }

            let mut worst: Option<(usize, f64)> = None;
            for i in (0..self.n()).filter(|i| !free.contains(i)) {
                let (p, q) = self.multiplier(i, &free, &w, &line);
                let g = p + lambda * q;
                let violation = if self.at_lower(i, &w) { -g } else { g };
                if violation > MULTIPLIER_TOL && worst.is_none_or(|(_, v)| violation > v) {
                    worst = Some((i, violation));
                }
            }
            match worst {
                None => return Ok((w, free)),
                Some((i, _)) => {
                    free.push(i);
                    free.sort_unstable();
                }
            }
        }
        Err(LabError::Singular(format!(
            "active-set iteration did not converge within {max_iter} steps"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace_gen::seed::rng_from_seed;
    use rand::Rng;

    fn cov(n: usize, data: &[f64]) -> CovarianceMatrix {
        CovarianceMatrix::from_matrix(DMatrix::from_row_slice(n, n, data)).unwrap()
    }

    fn variance(c: &CovarianceMatrix, w: &[f64]) -> f64 {
        let v = nalgebra::DVector::from_column_slice(w);
        (v.transpose() * c.values() * &v)[(0, 0)]
    }

    #[test]
    fn identity_equal_means_is_uniform() {
        for n in [2, 3, 7] {
            let c = CovarianceMatrix::from_matrix(DMatrix::identity(n, n)).unwrap();
            let w = cla_weights(&c, &vec![0.01; n], &ClaConfig::long_only(n)).unwrap();
            for v in w.values() {
                assert!((v - 1.0 / n as f64).abs() < 1e-12, "{:?}", w.values());
            }
        }
    }

    #[test]
    fn two_asset_closed_form() {
        // Unconstrained minimum variance: w1 = (s2 − c) / (s1 + s2 − 2c).
        let (s1, s2, c12) = (0.04, 0.09, 0.01);
        let c = cov(2, &[s1, c12, c12, s2]);
        let w = cla_weights(&c, &[0.1, 0.05], &ClaConfig::long_only(2)).unwrap();
        let w1 = (s2 - c12) / (s1 + s2 - 2.0 * c12);
        assert!((w.values()[0] - w1).abs() < 1e-12);
    }

    #[test]
    fn upper_bounds_bind() {
        let c = cov(3, &[0.01, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let cfg = ClaConfig::uniform(3, 0.0, 0.5, None);
        let w = cla_weights(&c, &[0.0, 0.0, 0.0], &cfg).unwrap();
        assert!((w.values()[0] - 0.5).abs() < 1e-12);
        assert!((w.values()[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn turning_points_trace_frontier() {
        let c = cov(3, &[0.04, 0.006, 0.002, 0.006, 0.09, 0.009, 0.002, 0.009, 0.16]);
        let mean = [0.05, 0.08, 0.12];
        let pts = cla_turning_points(&c, &mean, &ClaConfig::long_only(3)).unwrap();
        assert_eq!(pts[0].weights, vec![0.0, 0.0, 1.0]);
        assert!(pts[0].lambda.is_infinite());
        let rets: Vec<f64> = pts
            .iter()
            .map(|p| p.weights.iter().zip(&mean).map(|(a, b)| a * b).sum())
            .collect();
        let vars: Vec<f64> = pts.iter().map(|p| variance(&c, &p.weights)).collect();
        for k in 1..pts.len() {
            assert!(rets[k] <= rets[k - 1] + 1e-12);
            assert!(vars[k] <= vars[k - 1] + 1e-12);
            assert!(pts[k].lambda <= pts[k - 1].lambda);
        }
        for p in &pts {
            assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.weights.iter().all(|&v| v >= -1e-12));
        }
    }

    #[test]
    fn target_return_interpolates() {
        let c = cov(3, &[0.04, 0.006, 0.002, 0.006, 0.09, 0.009, 0.002, 0.009, 0.16]);
        let mean = [0.05, 0.08, 0.12];
        let mut cfg = ClaConfig::long_only(3);
        cfg.target_return = Some(0.1);
        let w = cla_weights(&c, &mean, &cfg).unwrap();
        let r: f64 = w.values().iter().zip(&mean).map(|(a, b)| a * b).sum();
        assert!((r - 0.1).abs() < 1e-10);
        cfg.target_return = Some(0.2);
        assert!(matches!(cla_weights(&c, &mean, &cfg), Err(LabError::Infeasible(_))));
    }

    #[test]
    fn infeasible_and_singular_inputs() {
        let c = CovarianceMatrix::from_matrix(DMatrix::identity(3, 3)).unwrap();
        let cfg = ClaConfig::uniform(3, 0.0, 0.2, None);
        assert!(matches!(cla_weights(&c, &[0.0; 3], &cfg), Err(LabError::Infeasible(_))));
        let cfg = ClaConfig::uniform(3, 0.5, 1.0, None);
        assert!(matches!(cla_weights(&c, &[0.0; 3], &cfg), Err(LabError::Infeasible(_))));
        // Both assets free on a rank-one covariance: the KKT system is singular.
        let ones = cov(2, &[1.0, 1.0, 1.0, 1.0]);
        let problem = Problem::new(&ones, &[0.1, 0.2], &ClaConfig::long_only(2)).unwrap();
        assert!(matches!(problem.line(&[0, 1], &[0.5, 0.5]), Err(LabError::Singular(_))));
    }

    /// Brute-force minimum over the simplex grid for three assets.
    fn grid_min_variance(c: &CovarianceMatrix, step: f64) -> Vec<f64> {
        let m = (1.0 / step).round() as usize;
        let mut best = (f64::INFINITY, vec![]);
        for i in 0..=m {
            for j in 0..=m - i {
                let w = [i as f64 * step, j as f64 * step, (m - i - j) as f64 * step];
                let v = variance(c, &w);
                if v < best.0 {
                    best = (v, w.to_vec());
                }
            }
        }
        best.1
    }

    #[test]
    fn matches_grid_on_random_instances() {
        let mut rng = rng_from_seed(11);
        for _ in 0..20 {
            let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
            let sigma = &a * a.transpose() + DMatrix::identity(3, 3) * 0.05;
            let c = CovarianceMatrix::from_matrix(sigma).unwrap();
            let mean: Vec<f64> = (0..3).map(|_| rng.random_range(-0.1..0.1)).collect();
            let w = cla_weights(&c, &mean, &ClaConfig::long_only(3)).unwrap();
            let g = grid_min_variance(&c, 2e-3);
            assert!(variance(&c, w.values()) <= variance(&c, &g) + 1e-12);
            for (x, y) in w.values().iter().zip(&g) {
                assert!((x - y).abs() < 1e-2, "{:?} vs {:?}", w.values(), g);
            }
        }
    }
}
