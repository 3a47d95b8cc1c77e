use nalgebra::DMatrix;
use serde::Serialize;

use super::{SchemeKind, Weights};
use crate::correlation::{CorrelationMatrix, CovarianceMatrix};
use crate::error::{LabError, Result};
use crate::returns::VARIANCE_FLOOR;

/// One agglomeration step. Leaves are `0..N`, the cluster created by merge
/// `k` has id `N + k`. `left` is the child holding the smaller leaf index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkageTree {
    pub leaves: usize,
    pub merges: Vec<Merge>,
}

/// `d_ij = √(½(1 − ρ_ij))`.
pub fn hrp_distance(corr: &CorrelationMatrix) -> DMatrix<f64> {
    corr.values()
        .map(|rho| (0.5 * (1.0 - rho)).max(0.0).sqrt())
}

/// Single-linkage agglomerative clustering.
///
/// Ties on distance go to the lexicographically smallest pair of clusters,
/// each cluster being identified by its smallest leaf.
pub fn single_linkage(distances: &DMatrix<f64>) -> Result<LinkageTree> {
    let n = distances.nrows();
    if n != distances.ncols() {
        return Err(LabError::DimensionMismatch {
            expected: n,
            found: distances.ncols(),
        });
    }
    if n < 2 {
        return Err(LabError::InsufficientData("linkage needs at least two assets".into()));
    }
    for i in 0..n {
        for j in 0..n {
            let d = distances[(i, j)];
            if !(d.is_finite() && d >= 0.0) {
                return Err(LabError::Domain(format!("distance ({i}, {j}) = {d}")));
            }
            if (d - distances[(j, i)]).abs() > 1e-12 {
                return Err(LabError::Domain(format!("distance matrix is not symmetric at ({i}, {j})")));
            }
        }
    }

    // Slot `s` holds the cluster whose smallest leaf is `s`.
    let mut dist = distances.clone();
    let mut active = vec![true; n];
    let mut cluster_id: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..n {
            if !active[a] {
                continue;
            }
            for b in a + 1..n {
                if active[b] && best.is_none_or(|(_, _, d)| dist[(a, b)] < d) {
                    best = Some((a, b, dist[(a, b)]));
                }
            }
        }
        let (a, b, d) = best.expect("at least two active clusters");
        merges.push(Merge {
            left: cluster_id[a],
            right: cluster_id[b],
            distance: d,
            size: size[a] + size[b],
        });
        for k in 0..n {
            let m = dist[(a, k)].min(dist[(b, k)]);
            dist[(a, k)] = m;
            dist[(k, a)] = m;
        }
        active[b] = false;
        cluster_id[a] = n + step;
        size[a] += size[b];
    }
    Ok(LinkageTree { leaves: n, merges })
}

/// Leaf order from a depth-first walk of the tree, left child first.
pub fn quasi_diagonalize(tree: &LinkageTree) -> Vec<usize> {
    let n = tree.leaves;
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![2 * n - 2];
    while let Some(id) = stack.pop() {
        if id < n {
            order.push(id);
        } else {
            let m = &tree.merges[id - n];
            stack.push(m.right);
            stack.push(m.left);
        }
    }
    order
}

/// Top-down bisection of `order` into halves of sizes `⌈k/2⌉` and `⌊k/2⌋`,
/// splitting weight by the inverse-variance portfolio variance of each half.
pub fn recursive_bisection(cov: &CovarianceMatrix, order: &[usize]) -> Result<Weights> {
    let n = cov.dim();
    let mut seen = vec![false; n];
    if order.len() != n || order.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
        return Err(LabError::Domain(format!(
            "order {order:?} is not a permutation of 0..{n}"
        )));
    }
    let sigma = cov.values();
    if let Some(i) = (0..n).find(|&i| !(sigma[(i, i)] > VARIANCE_FLOOR)) {
        return Err(LabError::degenerate(i.to_string(), "variance below floor"));
    }

    let mut w = vec![1.0; n];
    let mut pending = vec![order.to_vec()];
    while let Some(cluster) = pending.pop() {
        if cluster.len() < 2 {
            continue;
        }
        let split = cluster.len().div_ceil(2);
        let (left, right) = cluster.split_at(split);
        let vl = cluster_variance(sigma, left);
        let vr = cluster_variance(sigma, right);
        let alpha = 1.0 - vl / (vl + vr);
        left.iter().for_each(|&i| w[i] *= alpha);
        right.iter().for_each(|&i| w[i] *= 1.0 - alpha);
        pending.push(right.to_vec());
        pending.push(left.to_vec());
    }
    Weights::new(w, SchemeKind::Hrp, crate::correlation::MetricKind::Pearson)
}

fn cluster_variance(sigma: &DMatrix<f64>, members: &[usize]) -> f64 {
    let inv: Vec<f64> = members.iter().map(|&i| 1.0 / sigma[(i, i)]).collect();
    let total: f64 = inv.iter().sum();
    let mut v = 0.0;
    for (a, &i) in members.iter().enumerate() {
        for (b, &j) in members.iter().enumerate() {
            v += inv[a] * inv[b] * sigma[(i, j)];
        }
    }
    v / (total * total)
}

/// HRP: cluster on `corr`, then bisect using variances from `cov`.
pub fn hrp_weights(cov: &CovarianceMatrix, corr: &CorrelationMatrix) -> Result<Weights> {
    if cov.dim() != corr.dim() {
        return Err(LabError::DimensionMismatch {
            expected: cov.dim(),
            found: corr.dim(),
        });
    }
    let tree = single_linkage(&hrp_distance(corr))?;
    let order = quasi_diagonalize(&tree);
    Ok(recursive_bisection(cov, &order)?.with_metric(corr.kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::ivp_weights;
    use crate::correlation::MetricKind;
    use proptest::prelude::*;

    fn diag_cov(vars: &[f64]) -> CovarianceMatrix {
        CovarianceMatrix::from_matrix(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(
            vars.to_vec(),
        )))
        .unwrap()
    }

    #[test]
    fn distance_examples() {
        let c = CorrelationMatrix::from_rows(2, &[1.0, 0.0, 0.0, 1.0], MetricKind::Pearson).unwrap();
        assert!((hrp_distance(&c)[(0, 1)] - 0.5f64.sqrt()).abs() < 1e-15);
        let c = CorrelationMatrix::from_rows(2, &[1.0, -1.0, -1.0, 1.0], MetricKind::Pearson).unwrap();
        assert_eq!(hrp_distance(&c)[(0, 1)], 1.0);
        assert_eq!(hrp_distance(&c)[(0, 0)], 0.0);
    }

    #[test]
    fn three_point_order() {
        let d = DMatrix::from_row_slice(3, 3, &[0.0, 0.1, 0.9, 0.1, 0.0, 0.8, 0.9, 0.8, 0.0]);
        let tree = single_linkage(&d).unwrap();
        assert_eq!(tree.merges[0].left, 0);
        assert_eq!(tree.merges[0].right, 1);
        assert_eq!(tree.merges[1].distance, 0.8);
        assert_eq!(tree.merges[1].size, 3);
        assert_eq!(quasi_diagonalize(&tree), vec![0, 1, 2]);
    }

    #[test]
    fn ties_break_lexicographically() {
        // All distances equal: merges chain onto cluster 0 in index order.
        let d = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 0.5 });
        let tree = single_linkage(&d).unwrap();
        let pairs: Vec<(usize, usize)> = tree.merges.iter().map(|m| (m.left, m.right)).collect();
        assert_eq!(pairs, vec![(0, 1), (4, 2), (5, 3)]);
        assert_eq!(quasi_diagonalize(&tree), vec![0, 1, 2, 3]);
    }

    #[test]
    fn bisection_two_assets_is_inverse_variance() {
        let w = recursive_bisection(&diag_cov(&[1.0, 4.0]), &[0, 1]).unwrap();
        assert!((w.values()[0] - 0.8).abs() < 1e-15);
        assert!((w.values()[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn identity_gives_equal_weights() {
        for n in [4, 8, 16] {
            let cov = diag_cov(&vec![1.0; n]);
            let corr = CorrelationMatrix::identity(n, MetricKind::Pearson);
            let w = hrp_weights(&cov, &corr).unwrap();
            assert!(w.values().iter().all(|v| (v - 1.0 / n as f64).abs() < 1e-12));
        }
    }

    #[test]
    fn odd_split_sizes() {
        // Diagonal covariance: a cluster's inverse-variance portfolio variance
        // is 1 / Σ 1/v. The split is 3|2, then 2|1.
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        let iv = |s: &[f64]| 1.0 / s.iter().map(|x| 1.0 / x).sum::<f64>();
        let top = 1.0 - iv(&v[..3]) / (iv(&v[..3]) + iv(&v[3..]));
        let mid = 1.0 - iv(&v[..2]) / (iv(&v[..2]) + iv(&v[2..3]));
        let pair = |a: f64, b: f64| 1.0 - a / (a + b);
        let expect = [
            top * mid * pair(1.0, 2.0),
            top * mid * (1.0 - pair(1.0, 2.0)),
            top * (1.0 - mid),
            (1.0 - top) * pair(4.0, 5.0),
            (1.0 - top) * (1.0 - pair(4.0, 5.0)),
        ];
        let w = recursive_bisection(&diag_cov(&v), &[0, 1, 2, 3, 4]).unwrap();
        for (g, e) in w.values().iter().zip(expect) {
            assert!((g - e).abs() < 1e-15, "{:?}", w.values());
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(recursive_bisection(&diag_cov(&[1.0, 1.0]), &[0, 0]).is_err());
        assert!(recursive_bisection(&diag_cov(&[1.0, 1.0]), &[0]).is_err());
        let zero = CovarianceMatrix::from_matrix(DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(
            recursive_bisection(&zero, &[0, 1]),
            Err(LabError::DegenerateAsset { .. })
        ));
        assert!(single_linkage(&DMatrix::zeros(1, 1)).is_err());
    }

    proptest! {
        #[test]
        fn two_assets_match_ivp_on_variances(v1 in 1e-4f64..10.0, v2 in 1e-4f64..10.0, rho in -0.9f64..0.9) {
            let c12 = rho * (v1 * v2).sqrt();
            let cov = CovarianceMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[v1, c12, c12, v2])).unwrap();
            let corr = CorrelationMatrix::from_rows(2, &[1.0, rho, rho, 1.0], MetricKind::Pearson).unwrap();
            let w = hrp_weights(&cov, &corr).unwrap();
            // Inverse-variance, i.e. IVP fed the variances in place of the volatilities.
            let ivp = ivp_weights(&[v1, v2]).unwrap();
            for (a, b) in w.values().iter().zip(ivp.values()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn order_is_permutation(vals in proptest::collection::vec(0.0f64..1.0, 45)) {
            let n = 10;
            let mut d = DMatrix::zeros(n, n);
            let mut it = vals.iter();
            for i in 0..n {
                for j in i + 1..n {
                    let v = *it.next().unwrap();
                    d[(i, j)] = v;
                    d[(j, i)] = v;
                }
            }
            let tree = single_linkage(&d).unwrap();
            let mut order = quasi_diagonalize(&tree);
            order.sort_unstable();
            prop_assert_eq!(order, (0..n).collect::<Vec<_>>());
            let dists: Vec<f64> = tree.merges.iter().map(|m| m.distance).collect();
            prop_assert!(dists.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
