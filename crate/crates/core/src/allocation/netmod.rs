use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::Serialize;

use super::{SchemeKind, Weights};
use crate::correlation::CorrelationMatrix;
use crate::error::{LabError, Result};
use crate::trace_gen::seed::rng_from_seed;

/// Smallest modularity gain that still counts as an improvement.
const GAIN_THRESHOLD: f64 = 1e-9;
const MAX_PASSES: usize = 1000;

/// Undirected weighted graph over assets, stored as a dense symmetric
/// adjacency matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetGraph {
    adjacency: DMatrix<f64>,
    pub threshold: f64,
}

impl AssetGraph {
    pub fn from_adjacency(adjacency: DMatrix<f64>, threshold: f64) -> Result<Self> {
        let n = adjacency.nrows();
        if n != adjacency.ncols() {
            return Err(LabError::DimensionMismatch {
                expected: n,
                found: adjacency.ncols(),
            });
        }
        for i in 0..n {
            for j in 0..n {
                let a = adjacency[(i, j)];
                if !(a.is_finite() && a >= 0.0) || a != adjacency[(j, i)] || (i == j && a != 0.0) {
                    return Err(LabError::Domain(format!(
                        "adjacency entry ({i}, {j}) = {a} is not a valid undirected link weight"
                    )));
                }
            }
        }
        Ok(Self {
            adjacency,
            threshold,
        })
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    /// Links `(i, j, weight)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.num_nodes();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let a = self.adjacency[(i, j)];
                if a > 0.0 {
                    out.push((i, j, a));
                }
            }
        }
        out
    }

    /// Total link weight `m`, each undirected link counted once.
    pub fn total_weight(&self) -> f64 {
        self.adjacency.sum() / 2.0
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.adjacency.row(i).sum()
    }
}

/// Link every pair with correlation strictly above `alpha`, weighted by
/// the correlation.
pub fn build_threshold_graph(corr: &CorrelationMatrix, alpha: f64) -> AssetGraph {
    let n = corr.dim();
    let adjacency = DMatrix::from_fn(n, n, |i, j| {
        let rho = corr.get(i, j);
        if i != j && rho > alpha {
            rho
        } else {
            0.0
        }
    });
    AssetGraph {
        adjacency,
        threshold: alpha,
    }
}

/// Disjoint communities covering every node, numbered `0..k` in order of
/// their smallest member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Partition {
    pub community_of: Vec<usize>,
    pub communities: Vec<Vec<usize>>,
}

impl Partition {
    /// Build from arbitrary labels, renumbering them contiguously.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let mut communities: Vec<Vec<usize>> = Vec::new();
        let community_of = labels
            .iter()
            .enumerate()
            .map(|(node, l)| {
                let c = *map.entry(*l).or_insert_with(|| {
                    communities.push(Vec::new());
                    communities.len() - 1
                });
                communities[c].push(node);
                c
            })
            .collect();
        Self {
            community_of,
            communities,
        }
    }

    pub fn singletons(n: usize) -> Self {
        Self::from_labels(&(0..n).collect::<Vec<_>>())
    }

    pub fn num_communities(&self) -> usize {
        self.communities.len()
    }
}

/// Newman modularity `Q = (1/2m) Σ_ij (A_ij − k_i k_j / 2m) δ(c_i, c_j)`,
/// evaluated per community as `Σ_c [in_c/2m − (tot_c/2m)²]`.
pub fn modularity(graph: &AssetGraph, partition: &Partition) -> Result<f64> {
    if partition.community_of.len() != graph.num_nodes() {
        return Err(LabError::DimensionMismatch {
            expected: graph.num_nodes(),
            found: partition.community_of.len(),
        });
    }
    let two_m = 2.0 * graph.total_weight();
    if !(two_m > 0.0) {
        return Err(LabError::UndefinedModularity);
    }
    let a = graph.adjacency();
    let mut q = 0.0;
    for members in &partition.communities {
        let mut inner = 0.0;
        let mut tot = 0.0;
        for &i in members {
            tot += graph.degree(i);
            for &j in members {
                inner += a[(i, j)];
            }
        }
        q += inner / two_m - (tot / two_m).powi(2);
    }
    Ok(q)
}

/// Louvain community detection. Node visiting order in each pass is a
/// shuffle drawn from `seed`, so the result is reproducible.
pub fn louvain_communities(graph: &AssetGraph, seed: u64) -> Partition {
    let n = graph.num_nodes();
    if !(graph.total_weight() > 0.0) {
        return Partition::singletons(n);
    }
    let mut rng = rng_from_seed(seed);
    let mut labels: Vec<usize> = (0..n).collect();
    let mut adj = graph.adjacency().clone();
    loop {
        let (comm, moved) = one_level(&adj, &mut rng);
        if !moved {
            break;
        }
        let k = comm.iter().max().map_or(0, |m| m + 1);
        for l in labels.iter_mut() {
            *l = comm[*l];
        }
        adj = aggregate(&adj, &comm, k);
    }
    Partition::from_labels(&labels)
}

/// Local moving phase on a graph that may carry self-loops. Entries are
/// ordered-pair weights, so `2m` is the sum of the matrix.
fn one_level(adj: &DMatrix<f64>, rng: &mut impl rand::Rng) -> (Vec<usize>, bool) {
    let n = adj.nrows();
    let two_m = adj.sum();
    let degree: Vec<f64> = (0..n).map(|i| adj.row(i).sum()).collect();
    let mut comm: Vec<usize> = (0..n).collect();
    let mut tot = degree.clone();
    let mut moved_any = false;
    let mut links = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::with_capacity(n);
    let mut order: Vec<usize> = (0..n).collect();

    for _ in 0..MAX_PASSES {
        order.shuffle(rng);
        let mut moved = false;
        for &i in &order {
            let home = comm[i];
            tot[home] -= degree[i];
            touched.clear();
            touched.push(home);
            for j in 0..n {
                let a = adj[(i, j)];
                if j != i && a > 0.0 {
                    let c = comm[j];
                    if links[c] == 0.0 && !touched.contains(&c) {
                        touched.push(c);
                    }
                    links[c] += a;
                }
            }
            touched.sort_unstable();
            // Gain of inserting i into c, up to the factor 1/m.
            let gain = |c: usize| links[c] - tot[c] * degree[i] / two_m;
            let mut best = home;
            let mut best_gain = gain(home);
            for &c in &touched {
                let g = gain(c);
                if g - best_gain > GAIN_THRESHOLD * two_m / 2.0 {
                    best = c;
                    best_gain = g;
                }
            }
            for &c in &touched {
                links[c] = 0.0;
            }
            tot[best] += degree[i];
            if best != home {
                comm[i] = best;
                moved = true;
            }
        }
        if !moved {
            break;
        }
        moved_any = true;
    }

    let relabel = Partition::from_labels(&comm);
    (relabel.community_of, moved_any)
}

fn aggregate(adj: &DMatrix<f64>, comm: &[usize], k: usize) -> DMatrix<f64> {
    let n = adj.nrows();
    let mut out = DMatrix::zeros(k, k);
    for i in 0..n {
        for j in 0..n {
            out[(comm[i], comm[j])] += adj[(i, j)];
        }
    }
    out
}

/// Threshold graph plus Louvain partition for a correlation matrix.
pub fn netmod_partition(corr: &CorrelationMatrix, alpha: f64, seed: u64) -> (AssetGraph, Partition) {
    let graph = build_threshold_graph(corr, alpha);
    let partition = louvain_communities(&graph, seed);
    (graph, partition)
}

/// Equal budget per community, split equally inside each community:
/// `w_i = 1 / (#communities · |community(i)|)`.
pub fn netmod_weights(corr: &CorrelationMatrix, alpha: f64, seed: u64) -> Result<Weights> {
    if !(-1.0..=1.0).contains(&alpha) {
        return Err(LabError::config("netmod_alpha", format!("{alpha} is outside [-1, 1]")));
    }
    let (_, partition) = netmod_partition(corr, alpha, seed);
    let k = partition.num_communities() as f64;
    let values = partition
        .community_of
        .iter()
        .map(|&c| 1.0 / (k * partition.communities[c].len() as f64))
        .collect();
    Weights::new(values, SchemeKind::Netmod, corr.kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::MetricKind;
    use rand::Rng;

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> AssetGraph {
        let mut a = DMatrix::zeros(n, n);
        for &(i, j, w) in edges {
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
        AssetGraph::from_adjacency(a, 0.0).unwrap()
    }

    /// Literal ordered-pair sum.
    fn modularity_oracle(g: &AssetGraph, labels: &[usize]) -> f64 {
        let n = g.num_nodes();
        let a = g.adjacency();
        let two_m: f64 = a.sum();
        let k: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                if labels[i] == labels[j] {
                    q += a[(i, j)] - k[i] * k[j] / two_m;
                }
            }
        }
        q / two_m
    }

    fn two_triangles() -> AssetGraph {
        graph(6, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0), (3, 5, 1.0)])
    }

    #[test]
    fn two_triangles_found() {
        let g = two_triangles();
        let p = louvain_communities(&g, 7);
        assert_eq!(p.communities, vec![vec![0, 1, 2], vec![3, 4, 5]]);
        assert_eq!(modularity(&g, &p).unwrap(), 0.5);
    }

    #[test]
    fn modularity_matches_ordered_sum() {
        let g = graph(5, &[(0, 1, 0.4), (1, 2, 0.9), (2, 3, 0.5), (3, 4, 0.7), (0, 4, 0.35)]);
        for labels in [[0, 0, 1, 1, 2], [0, 1, 2, 3, 4], [0, 0, 0, 0, 0], [1, 0, 1, 0, 1]] {
            let q = modularity(&g, &Partition::from_labels(&labels)).unwrap();
            assert!((q - modularity_oracle(&g, &labels)).abs() < 1e-14);
        }
        assert!(modularity(&g, &Partition::from_labels(&[0; 5])).unwrap().abs() < 1e-15);
    }

    #[test]
    fn empty_graph() {
        let g = graph(4, &[]);
        assert!(matches!(
            modularity(&g, &Partition::singletons(4)),
            Err(LabError::UndefinedModularity)
        ));
        let corr = CorrelationMatrix::identity(4, MetricKind::Pearson);
        let w = netmod_weights(&corr, 0.3, 1).unwrap();
        assert_eq!(w.values(), &[0.25; 4]);
    }

    #[test]
    fn threshold_is_strict() {
        let corr = CorrelationMatrix::from_rows(
            3,
            &[1.0, 0.3, 0.31, 0.3, 1.0, 0.0, 0.31, 0.0, 1.0],
            MetricKind::Pearson,
        )
        .unwrap();
        let g = build_threshold_graph(&corr, 0.3);
        assert_eq!(g.edges(), vec![(0, 2, 0.31)]);
        assert_eq!(g.degree(0), 0.31);
    }

    #[test]
    fn netmod_weight_formula() {
        // Blocks {0,1,2} and {3}: each block gets 1/2.
        let mut c = DMatrix::identity(4, 4);
        for (i, j) in [(0, 1), (1, 2), (0, 2)] {
            c[(i, j)] = 0.8;
            c[(j, i)] = 0.8;
        }
        let corr = CorrelationMatrix::new(c, MetricKind::Dcca, Some(10)).unwrap();
        let w = netmod_weights(&corr, 0.3, 3).unwrap();
        let third = 1.0 / 6.0;
        assert_eq!(w.metric, MetricKind::Dcca);
        for (g, e) in w.values().iter().zip([third, third, third, 0.5]) {
            assert!((g - e).abs() < 1e-15);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let mut rng = rng_from_seed(5);
        let mut edges = Vec::new();
        for i in 0..30 {
            for j in i + 1..30 {
                if rng.random::<f64>() < 0.2 {
                    edges.push((i, j, rng.random_range(0.3..1.0)));
                }
            }
        }
        let g = graph(30, &edges);
        assert_eq!(louvain_communities(&g, 42), louvain_communities(&g, 42));
    }

    fn all_partitions(n: usize) -> Vec<Vec<usize>> {
        // Restricted growth strings.
        let mut out = Vec::new();
        let mut cur = vec![0usize; n];
        fn rec(pos: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if pos == cur.len() {
                out.push(cur.clone());
                return;
            }
            for v in 0..=max + 1 {
                cur[pos] = v;
                rec(pos + 1, max.max(v), cur, out);
            }
        }
        if n > 0 {
            rec(1, 0, &mut cur, &mut out);
        }
        out
    }

    #[test]
    fn close_to_exhaustive_optimum() {
        assert_eq!(all_partitions(4).len(), 15);
        let mut rng = rng_from_seed(99);
        let mut tested = 0;
        while tested < 20 {
            let n = rng.random_range(3..=6);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.random::<f64>() < 0.5 {
                        edges.push((i, j, rng.random_range(0.1..1.0)));
                    }
                }
            }
            if edges.is_empty() {
                continue;
            }
            let g = graph(n, &edges);
            let best = all_partitions(n)
                .iter()
                .map(|l| modularity_oracle(&g, l))
                .fold(f64::NEG_INFINITY, f64::max);
            let q = modularity(&g, &louvain_communities(&g, tested as u64)).unwrap();
            assert!(q >= 0.95 * best - 1e-12, "q {q} best {best}");
            tested += 1;
        }
    }
}
