use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use super::{run_single, RunReport, RunResult};
use crate::allocation::Method;
use crate::config::{EvaluationConfig, ScenarioConfig};
use crate::error::{LabError, Result};
use crate::metrics::{improvement, mean, sample_std, MetricRecord};

/// Mean and sample standard deviation of a statistic across runs; `count`
/// is the number of runs where it was defined.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stat {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub count: usize,
}

impl Stat {
    fn of(values: impl Iterator<Item = Option<f64>>) -> Self {
        let v: Vec<f64> = values.flatten().collect();
        if v.is_empty() {
            return Stat {
                mean: None,
                std: None,
                count: 0,
            };
        }
        Stat {
            mean: Some(mean(&v)),
            std: Some(sample_std(&v)),
            count: v.len(),
        }
    }
}

/// Distribution of the `rank`-th largest value (0 = largest) across every
/// allocation in the corpus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankStat {
    pub asset_rank: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

fn rank_distribution<'a>(vectors: impl Iterator<Item = &'a [f64]>) -> Vec<RankStat> {
    let mut sorted: Vec<Vec<f64>> = vectors
        .map(|v| {
            let mut s = v.to_vec();
            s.sort_by(|a, b| b.total_cmp(a));
            s
        })
        .collect();
    let Some(n) = sorted.first().map(Vec::len) else {
        return Vec::new();
    };
    sorted.retain(|s| s.len() == n);
    (0..n)
        .map(|r| {
            let col: Vec<f64> = sorted.iter().map(|s| s[r]).collect();
            RankStat {
                asset_rank: r,
                mean: mean(&col),
                std: sample_std(&col),
                min: col.iter().copied().fold(f64::INFINITY, f64::min),
                max: col.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub name: String,
    pub runs: usize,
    pub daily_return_mean: Stat,
    pub daily_return_std: Stat,
    /// Relative improvement of the mean daily return over the baseline method.
    pub improvement: Option<f64>,
    pub clr: Stat,
    pub nhhi: Stat,
    pub pv: Stat,
    pub dr: Stat,
    pub sr: Stat,
    pub var: Stat,
    pub cvar: Stat,
    /// Windows where the allocation failed and weights were carried over.
    pub fallbacks: usize,
    pub weight_dist: Vec<RankStat>,
    pub rc_dist: Vec<RankStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedRun {
    pub run_index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub run_index: usize,
    pub seed: u64,
    pub parents: Vec<Option<usize>>,
    pub metrics: Vec<(Method, MetricRecord)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusReport {
    pub num_runs: usize,
    pub excluded_runs: Vec<FailedRun>,
    pub baseline: Option<Method>,
    pub methods: Vec<MethodSummary>,
    pub runs: Vec<RunSummary>,
    /// Full per-run reports, kept for the per-run return export.
    #[serde(skip)]
    pub details: Vec<RunResult>,
}

impl CorpusReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// Every method's report for every successful run, in run order.
    pub fn reports(&self, method: Method) -> impl Iterator<Item = &RunReport> {
        self.details
            .iter()
            .flat_map(move |r| r.reports.iter().filter(move |p| p.method == method))
    }
}

/// Run `num_iters` independent simulations on a pool of `workers` threads.
/// Results are reduced in run-index order, so they do not depend on the
/// worker count. `progress` is called once per finished run.
pub fn run_corpus(
    cfg: &ScenarioConfig,
    workers: usize,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<CorpusReport> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| LabError::config("workers", e.to_string()))?;
    let total = cfg.simulation.num_iters;
    let done = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<Result<RunResult>> = pool.install(|| {
        (0..total)
            .into_par_iter()
            .map(|i| {
                let r = run_single(cfg, i);
                let k = done.fetch_add(1, std::sync::atomic::Ordering::SeqCst) + 1;
                if let Some(p) = progress {
                    p(k, total);
                }
                r
            })
            .collect()
    });

    let mut details = Vec::with_capacity(total);
    let mut excluded = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(run) => details.push(run),
            Err(e) => {
                warn!("run {i} failed and is excluded: {e}");
                excluded.push(FailedRun {
                    run_index: i,
                    error: e.to_string(),
                });
            }
        }
    }
    info!("{} of {total} runs completed", details.len());
    Ok(aggregate(&cfg.evaluation, total, details, excluded))
}

/// Reduce per-run results (already in run order) into a corpus report.
pub fn aggregate(
    eval: &EvaluationConfig,
    num_runs: usize,
    details: Vec<RunResult>,
    excluded: Vec<FailedRun>,
) -> CorpusReport {
    let methods = &eval.methods;
    let mut summaries: Vec<MethodSummary> = methods
        .iter()
        .map(|&method| {
            let reports: Vec<&RunReport> = details
                .iter()
                .filter_map(|r| r.reports.iter().find(|p| p.method == method))
                .collect();
            let stat = |f: &dyn Fn(&MetricRecord) -> Option<f64>| Stat::of(reports.iter().map(|r| f(&r.metrics)));
            MethodSummary {
                method,
                name: method.display_name(),
                runs: reports.len(),
                daily_return_mean: stat(&|m| Some(m.daily_return_mean)),
                daily_return_std: stat(&|m| Some(m.daily_return_std)),
                improvement: None,
                clr: stat(&|m| Some(m.clr)),
                nhhi: stat(&|m| Some(m.nhhi)),
                pv: stat(&|m| Some(m.pv)),
                dr: stat(&|m| m.dr),
                sr: stat(&|m| m.sr),
                var: stat(&|m| Some(m.var)),
                cvar: stat(&|m| Some(m.cvar)),
                fallbacks: reports.iter().map(|r| r.fallbacks()).sum(),
                weight_dist: rank_distribution(
                    reports.iter().flat_map(|r| r.windows.iter().map(|w| w.weights.as_slice())),
                ),
                rc_dist: rank_distribution(
                    reports
                        .iter()
                        .flat_map(|r| r.windows.iter().filter_map(|w| w.rc.as_deref())),
                ),
            }
        })
        .collect();

    let baseline = eval.baseline.filter(|b| methods.contains(b));
    if let Some(base) = baseline {
        let base_mean = summaries
            .iter()
            .find(|s| s.method == base)
            .and_then(|s| s.daily_return_mean.mean);
        for s in &mut summaries {
            s.improvement = match (s.daily_return_mean.mean, base_mean) {
                (Some(x), Some(b)) => improvement(x, b).ok(),
                _ => None,
            };
        }
    }

    let runs = details
        .iter()
        .map(|r| RunSummary {
            run_index: r.run_index,
            seed: r.seed,
            parents: r.parents.clone(),
            metrics: r.reports.iter().map(|p| (p.method, p.metrics.clone())).collect(),
        })
        .collect();

    CorpusReport {
        num_runs,
        excluded_runs: excluded,
        baseline,
        methods: summaries,
        runs,
        details,
    }
}
