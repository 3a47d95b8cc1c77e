use std::fs;
use std::path::Path;

use super::{CorpusReport, GraphDump, RankStat};
use crate::error::Result;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write the standard report set into `dir`:
/// `config.resolved.toml`, `report.json`, `table.csv`,
/// `returns_per_run.csv`, `weights_dist.csv` and `rc_dist.csv`.
pub fn write_report_set(dir: &Path, resolved_config: &str, report: &CorpusReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.resolved.toml"), resolved_config)?;
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    fs::write(dir.join("report.json"), json)?;

    let mut table = csv::Writer::from_path(dir.join("table.csv"))?;
    table.write_record([
        "method",
        "daily_ret_mean",
        "daily_ret_std",
        "impr",
        "clr",
        "nhhi",
        "pv",
        "dr",
        "sr",
        "var",
        "cvar",
    ])?;
    for s in &report.methods {
        table.write_record([
            s.name.clone(),
            opt(s.daily_return_mean.mean),
            opt(s.daily_return_std.mean),
            opt(s.improvement),
            opt(s.clr.mean),
            opt(s.nhhi.mean),
            opt(s.pv.mean),
            opt(s.dr.mean),
            opt(s.sr.mean),
            opt(s.var.mean),
            opt(s.cvar.mean),
        ])?;
    }
    table.flush()?;

    let mut returns = csv::Writer::from_path(dir.join("returns_per_run.csv"))?;
    returns.write_record(["method", "run", "period", "return"])?;
    for run in &report.details {
        for rep in &run.reports {
            for w in &rep.windows {
                for (k, r) in w.returns.iter().enumerate() {
                    returns.write_record([
                        rep.method.id(),
                        run.run_index.to_string(),
                        (w.window.start + k).to_string(),
                        r.to_string(),
                    ])?;
                }
            }
        }
    }
    returns.flush()?;

    write_dist(&dir.join("weights_dist.csv"), report, |s| &s.weight_dist)?;
    write_dist(&dir.join("rc_dist.csv"), report, |s| &s.rc_dist)?;
    Ok(())
}

fn write_dist(
    path: &Path,
    report: &CorpusReport,
    pick: impl Fn(&super::MethodSummary) -> &Vec<RankStat>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "asset_rank", "mean", "std", "min", "max"])?;
    for s in &report.methods {
        for r in pick(s) {
            w.write_record([
                s.method.id(),
                r.asset_rank.to_string(),
                r.mean.to_string(),
                r.std.to_string(),
                r.min.to_string(),
                r.max.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write `graph_edges.csv` and `graph_communities.csv`.
pub fn write_graph_dump(dir: &Path, dump: &GraphDump) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut edges = csv::Writer::from_path(dir.join("graph_edges.csv"))?;
    edges.write_record(["metric", "alpha", "window", "alloc_time", "source", "target", "weight"])?;
    let mut comms = csv::Writer::from_path(dir.join("graph_communities.csv"))?;
    comms.write_record(["metric", "alpha", "window", "alloc_time", "asset", "community", "modularity", "error"])?;
    for g in &dump.windows {
        let head = [
            g.metric.label().to_string(),
            g.alpha.to_string(),
            g.window_index.to_string(),
            g.alloc_time.to_string(),
        ];
        for &(i, j, w) in &g.edges {
            let mut row = head.to_vec();
            row.extend([dump.labels[i].clone(), dump.labels[j].clone(), w.to_string()]);
            edges.write_record(&row)?;
        }
        if let Some(err) = &g.error {
            let mut row = head.to_vec();
            row.extend([String::new(), String::new(), String::new(), err.clone()]);
            comms.write_record(&row)?;
        }
        for (a, c) in g.communities.iter().enumerate() {
            let mut row = head.to_vec();
            row.extend([dump.labels[a].clone(), c.to_string(), opt(g.modularity), String::new()]);
            comms.write_record(&row)?;
        }
    }
    edges.flush()?;
    comms.flush()?;
    Ok(())
}
