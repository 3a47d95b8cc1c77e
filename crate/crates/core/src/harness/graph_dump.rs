use serde::Serialize;

use super::{divide_intervals, lookback_rows};
use crate::allocation::{build_threshold_graph, louvain_communities, modularity, SchemeKind};
use crate::config::EvaluationConfig;
use crate::correlation::{covariance, dcca_matrix, dpcca_from_dcca, pearson_corr, CorrelationMatrix, MetricKind};
use crate::error::Result;
use crate::returns::ReturnMatrix;
use crate::trace_gen::seed::stream_seed;

/// NetMod graph and communities for one window, metric and threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphWindow {
    pub window_index: usize,
    pub alloc_time: usize,
    pub metric: MetricKind,
    pub alpha: f64,
    pub edges: Vec<(usize, usize, f64)>,
    pub communities: Vec<usize>,
    pub modularity: Option<f64>,
    /// Set when the correlation estimate failed for this window.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphDump {
    pub labels: Vec<String>,
    pub windows: Vec<GraphWindow>,
}

/// Rebuild the NetMod graph at every allocation time for each metric used
/// by a NetMod method (all three when none is configured) and each
/// threshold in `alphas`.
pub fn graph_dump(returns: &ReturnMatrix, eval: &EvaluationConfig, seed: u64, alphas: &[f64]) -> Result<GraphDump> {
    eval.validate()?;
    let windows = divide_intervals(returns.periods(), eval.delta_t)?;
    let mut metrics: Vec<MetricKind> = MetricKind::ALL
        .into_iter()
        .filter(|k| eval.methods.iter().any(|m| m.scheme == SchemeKind::Netmod && m.metric == *k))
        .collect();
    if metrics.is_empty() {
        metrics = MetricKind::ALL.to_vec();
    }
    let alphas = if alphas.is_empty() { vec![eval.netmod_alpha] } else { alphas.to_vec() };

    let mut out = Vec::new();
    for (k, w) in windows.iter().enumerate() {
        let louvain_seed = stream_seed(seed, k as u64);
        for &metric in &metrics {
            let corr = estimate(returns, w.alloc_time, eval, metric);
            for &alpha in &alphas {
                let mut gw = GraphWindow {
                    window_index: k,
                    alloc_time: w.alloc_time,
                    metric,
                    alpha,
                    edges: Vec::new(),
                    communities: Vec::new(),
                    modularity: None,
                    error: None,
                };
                match &corr {
                    Ok(c) => {
                        let g = build_threshold_graph(c, alpha);
                        let p = louvain_communities(&g, louvain_seed);
                        gw.modularity = modularity(&g, &p).ok();
                        gw.edges = g.edges();
                        gw.communities = p.community_of;
                    }
                    Err(e) => gw.error = Some(e.to_string()),
                }
                out.push(gw);
            }
        }
    }
    Ok(GraphDump {
        labels: returns.labels().to_vec(),
        windows: out,
    })
}

fn estimate(returns: &ReturnMatrix, t: usize, eval: &EvaluationConfig, metric: MetricKind) -> Result<CorrelationMatrix> {
    match metric {
        MetricKind::Pearson => {
            let w = returns.slice_rows(lookback_rows(t, eval.delta_t, eval.covariance_lookback))?;
            pearson_corr(&covariance(&w)?)
        }
        MetricKind::Dcca | MetricKind::Dpcca => {
            let w = returns.slice_rows(lookback_rows(t, eval.delta_t, eval.detrended_lookback))?;
            let d = dcca_matrix(&w, eval.box_length)?;
            if metric == MetricKind::Dcca {
                Ok(d)
            } else {
                dpcca_from_dcca(&d, eval.dpcca_ridge)
            }
        }
    }
}
