//! Monte-Carlo engine: rolling out-of-sample rebalancing over generated or
//! historical traces, and aggregation across runs.

mod corpus;
mod graph_dump;
mod output;

pub use corpus::{aggregate, run_corpus, CorpusReport, FailedRun, MethodSummary, RankStat, RunSummary, Stat};
pub use graph_dump::{graph_dump, GraphDump, GraphWindow};
pub use output::{write_graph_dump, write_report_set};

use log::warn;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::allocation::{cla_weights, hrp_weights, ivp_weights, netmod_weights, Method, SchemeKind, Weights};
use crate::config::{ClaSettings, EvaluationConfig, Lookback, ScenarioConfig};
use crate::correlation::{
    covariance, dcca_matrix, dpcca_from_dcca, pearson_corr_labeled, CorrelationMatrix, CovarianceMatrix,
    MetricKind,
};
use crate::error::{LabError, Result};
use crate::metrics::{
    compound_log_return, cvar_historical, diversification_ratio, mean, nhhi, portfolio_variance,
    risk_contribution, sample_std, sharpe_ratio, var_historical, MetricRecord,
};
use crate::returns::ReturnMatrix;
use crate::trace_gen::seed::{run_seed, stream_seed};

/// One rebalance: weights fixed at `alloc_time` earn returns on `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Window {
    pub alloc_time: usize,
    pub start: usize,
    pub end: usize,
}

/// Allocation times `k·Δ` for `k = 1..⌊(T−1)/Δ⌋`, each evaluated up to the
/// next allocation time or the end of the trace.
pub fn divide_intervals(periods: usize, delta_t: usize) -> Result<Vec<Window>> {
    if delta_t < 1 || periods < 2 * delta_t {
        return Err(LabError::InsufficientData(format!(
            "{periods} periods cannot hold two rebalance intervals of {delta_t}"
        )));
    }
    Ok((1..=(periods - 1) / delta_t)
        .map(|k| {
            let t = k * delta_t;
            Window {
                alloc_time: t,
                start: t,
                end: (t + delta_t).min(periods),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRecord {
    #[serde(flatten)]
    pub window: Window,
    pub weights: Vec<f64>,
    /// Out-of-sample portfolio returns `wᵀr_t` over the window.
    pub returns: Vec<f64>,
    pub nhhi: f64,
    /// Realized-window statistics; absent when the window has fewer than
    /// two rows or zero portfolio variance.
    pub pv: Option<f64>,
    pub dr: Option<f64>,
    pub rc: Option<Vec<f64>>,
    /// Why the allocation failed, when the previous weights were carried.
    pub fallback: Option<String>,
}

/// Everything one method produced on one trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub method: Method,
    pub run_index: usize,
    pub seed: u64,
    pub windows: Vec<WindowRecord>,
    pub metrics: MetricRecord,
}

impl RunReport {
    pub fn returns(&self) -> impl Iterator<Item = f64> + '_ {
        self.windows.iter().flat_map(|w| w.returns.iter().copied())
    }

    pub fn fallbacks(&self) -> usize {
        self.windows.iter().filter(|w| w.fallback.is_some()).count()
    }
}

/// All methods on one generated trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub run_index: usize,
    pub seed: u64,
    /// Parent of each dependent column; empty for historical data.
    pub parents: Vec<Option<usize>>,
    pub reports: Vec<RunReport>,
}

/// Generate the trace for `run_index` and evaluate every configured method.
pub fn run_single(cfg: &ScenarioConfig, run_index: usize) -> Result<RunResult> {
    let seed = run_seed(cfg.simulation.master_seed, run_index as u64);
    let trace = cfg.generator.generate(cfg.simulation.sim_length, seed)?;
    let mut result = run_single_on_returns(cfg, run_index, &trace.returns)?;
    result.parents = trace.parents;
    Ok(result)
}

/// Evaluate every configured method on a given return matrix, seeded as
/// run `run_index` would be. Backtests go through here too.
pub fn run_single_on_returns(cfg: &ScenarioConfig, run_index: usize, returns: &ReturnMatrix) -> Result<RunResult> {
    let seed = run_seed(cfg.simulation.master_seed, run_index as u64);
    let reports = evaluate_returns(&cfg.evaluation, &cfg.cla, run_index, seed, returns)?;
    Ok(RunResult {
        run_index,
        seed,
        parents: Vec::new(),
        reports,
    })
}

/// The allocation and evaluation pipeline shared by simulations and
/// backtests.
pub fn evaluate_returns(
    eval: &EvaluationConfig,
    cla: &ClaSettings,
    run_index: usize,
    seed: u64,
    returns: &ReturnMatrix,
) -> Result<Vec<RunReport>> {
    eval.validate()?;
    let n = returns.assets();
    let windows = divide_intervals(returns.periods(), eval.delta_t)?;
    let cla_cfg = cla.for_assets(n);
    let metrics_needed: Vec<MetricKind> = MetricKind::ALL
        .into_iter()
        .filter(|k| eval.methods.iter().any(|m| m.metric == *k))
        .collect();

    let mut records: Vec<Vec<WindowRecord>> = vec![Vec::with_capacity(windows.len()); eval.methods.len()];
    let mut previous: Vec<Option<Vec<f64>>> = vec![None; eval.methods.len()];

    for (k, window) in windows.iter().enumerate() {
        let inputs = WindowInputs::compute(returns, window.alloc_time, eval, &metrics_needed);
        let realized = if window.end - window.start >= 2 {
            covariance(&returns.slice_rows(window.start..window.end)?).ok()
        } else {
            None
        };
        let louvain_seed = stream_seed(seed, k as u64);

        for (m, method) in eval.methods.iter().enumerate() {
            let (weights, fallback) = match inputs.allocate(*method, eval, &cla_cfg, louvain_seed) {
                Ok(w) => (w.into_values(), None),
                Err(e) => {
                    let carried = previous[m].clone().unwrap_or_else(|| vec![1.0 / n as f64; n]);
                    warn!(
                        "run {run_index} window {k} (t = {}) {method}: {e}; {}",
                        window.alloc_time,
                        if previous[m].is_some() {
                            "carrying previous weights"
                        } else {
                            "using equal weights"
                        }
                    );
                    (carried, Some(e.to_string()))
                }
            };
            let port: Vec<f64> = (window.start..window.end)
                .map(|t| weights.iter().enumerate().map(|(i, w)| w * returns.get(t, i)).sum())
                .collect();
            let (pv, dr, rc) = match &realized {
                Some(c) => (
                    portfolio_variance(&weights, c).ok(),
                    diversification_ratio(&weights, c).ok(),
                    risk_contribution(&weights, c).ok(),
                ),
                None => (None, None, None),
            };
            records[m].push(WindowRecord {
                window: *window,
                nhhi: nhhi(&weights)?,
                weights: weights.clone(),
                returns: port,
                pv,
                dr,
                rc,
                fallback,
            });
            previous[m] = Some(weights);
        }
    }

    eval.methods
        .iter()
        .zip(records)
        .map(|(method, windows)| {
            let metrics = summarize(&windows, eval)?;
            Ok(RunReport {
                method: *method,
                run_index,
                seed,
                windows,
                metrics,
            })
        })
        .collect()
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| mean(&v))
}

/// Per-window statistics averaged over windows; return statistics over the
/// concatenated out-of-sample series.
fn summarize(windows: &[WindowRecord], eval: &EvaluationConfig) -> Result<MetricRecord> {
    let series: Vec<f64> = windows.iter().flat_map(|w| w.returns.iter().copied()).collect();
    let rcs: Vec<&Vec<f64>> = windows.iter().filter_map(|w| w.rc.as_ref()).collect();
    let rc = (!rcs.is_empty()).then(|| {
        let n = rcs[0].len();
        (0..n)
            .map(|i| rcs.iter().map(|r| r[i]).sum::<f64>() / rcs.len() as f64)
            .collect()
    });
    Ok(MetricRecord {
        daily_return_mean: mean(&series),
        daily_return_std: sample_std(&series),
        clr: compound_log_return(&series)?,
        nhhi: mean(&windows.iter().map(|w| w.nhhi).collect::<Vec<_>>()),
        pv: mean_defined(windows.iter().map(|w| w.pv)).unwrap_or(0.0),
        dr: mean_defined(windows.iter().map(|w| w.dr)),
        sr: sharpe_ratio(&series, eval.risk_free).ok(),
        var: var_historical(&series, eval.var_alpha)?,
        cvar: cvar_historical(&series, eval.var_alpha)?,
        rc,
    })
}

/// Estimates available at one allocation time. Each estimate is kept as a
/// `Result` so a failure only affects the methods that need it.
struct WindowInputs {
    cov: Result<CovarianceMatrix>,
    mean: Vec<f64>,
    corr: Vec<(MetricKind, Result<CorrelationMatrix>)>,
}

fn lookback_rows(alloc_time: usize, delta_t: usize, policy: Lookback) -> std::ops::Range<usize> {
    match policy {
        Lookback::Window => alloc_time.saturating_sub(delta_t)..alloc_time,
        Lookback::Full => 0..alloc_time,
    }
}

impl WindowInputs {
    fn compute(returns: &ReturnMatrix, t: usize, eval: &EvaluationConfig, metrics: &[MetricKind]) -> Self {
        let cov_rows = lookback_rows(t, eval.delta_t, eval.covariance_lookback);
        let cov_window = returns.slice_rows(cov_rows);
        let mean = match &cov_window {
            Ok(w) => (0..w.assets()).map(|a| crate::metrics::mean(w.series(a))).collect(),
            Err(_) => vec![0.0; returns.assets()],
        };
        let cov = cov_window.and_then(|w| covariance(&w));

        let detrended = returns.slice_rows(lookback_rows(t, eval.delta_t, eval.detrended_lookback));
        let mut dcca: Option<Result<CorrelationMatrix>> = None;
        let mut dcca_once = || -> Result<CorrelationMatrix> {
            match dcca.get_or_insert_with(|| {
                detrended
                    .as_ref()
                    .map_err(clone_err)
                    .and_then(|w| dcca_matrix(w, eval.box_length))
            }) {
                Ok(c) => Ok(c.clone()),
                Err(e) => Err(clone_err(e)),
            }
        };

        let corr = metrics
            .iter()
            .map(|&kind| {
                let c = match kind {
                    MetricKind::Pearson => match &cov {
                        Ok(c) => pearson_corr_labeled(c, Some(returns.labels())),
                        Err(e) => Err(clone_err(e)),
                    },
                    MetricKind::Dcca => dcca_once(),
                    MetricKind::Dpcca => dcca_once().and_then(|d| dpcca_from_dcca(&d, eval.dpcca_ridge)),
                };
                (kind, c)
            })
            .collect();
        Self { cov, mean, corr }
    }

    fn corr(&self, kind: MetricKind) -> Result<&CorrelationMatrix> {
        match self.corr.iter().find(|(k, _)| *k == kind) {
            Some((_, Ok(c))) => Ok(c),
            Some((_, Err(e))) => Err(clone_err(e)),
            None => Err(LabError::Domain(format!("metric {kind} was not computed"))),
        }
    }

    fn allocate(
        &self,
        method: Method,
        eval: &EvaluationConfig,
        cla: &crate::allocation::ClaConfig,
        louvain_seed: u64,
    ) -> Result<Weights> {
        let cov = self.cov.as_ref().map_err(clone_err)?;
        let w = match method.scheme {
            SchemeKind::Ivp => {
                let vols = variant_covariance(cov, self.corr(method.metric)?)?.volatilities();
                ivp_weights(&vols)?
            }
            SchemeKind::Hrp => {
                let corr = self.corr(method.metric)?;
                hrp_weights(&variant_covariance(cov, corr)?, corr)?
            }
            SchemeKind::Cla => cla_weights(cov, &self.mean, cla)?,
            SchemeKind::Netmod => netmod_weights(self.corr(method.metric)?, eval.netmod_alpha, louvain_seed)?,
        };
        Ok(w.with_metric(method.metric))
    }
}

/// `Σ_v = diag(σ) ρ_v diag(σ)`: the covariance implied by a correlation
/// variant and the sample volatilities. Identity for Pearson.
fn variant_covariance(cov: &CovarianceMatrix, corr: &CorrelationMatrix) -> Result<CovarianceMatrix> {
    if corr.kind == MetricKind::Pearson {
        return Ok(cov.clone());
    }
    let s = cov.volatilities();
    let n = s.len();
    CovarianceMatrix::from_matrix(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            cov.values()[(i, i)]
        } else {
            s[i] * corr.get(i, j) * s[j]
        }
    }))
}

/// Errors are not `Clone` (they may wrap I/O errors); cached estimator
/// failures are re-raised by message.
fn clone_err(e: &LabError) -> LabError {
    match e {
        LabError::Config { field, reason } => LabError::Config {
            field: field.clone(),
            reason: reason.clone(),
        },
        LabError::UnknownMethod(s) => LabError::UnknownMethod(s.clone()),
        LabError::InsufficientData(s) => LabError::InsufficientData(s.clone()),
        LabError::DegenerateAsset { asset, reason } => LabError::DegenerateAsset {
            asset: asset.clone(),
            reason: reason.clone(),
        },
        LabError::DegenerateSeries(s) => LabError::DegenerateSeries(s.clone()),
        LabError::Singular(s) => LabError::Singular(s.clone()),
        LabError::Infeasible(s) => LabError::Infeasible(s.clone()),
        LabError::DimensionMismatch { expected, found } => LabError::DimensionMismatch {
            expected: *expected,
            found: *found,
        },
        LabError::UndefinedModularity => LabError::UndefinedModularity,
        LabError::UndefinedImprovement => LabError::UndefinedImprovement,
        other => LabError::Domain(other.to_string()),
    }
}
