//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::allocation::Method;
use crate::config::ScenarioConfig;
use crate::data_io::{load_prices_csv, prices_to_returns, run_backtest};
use crate::error::{LabError, Result};
use crate::harness::{aggregate, graph_dump, run_corpus, write_graph_dump, write_report_set, CorpusReport};
use crate::trace_gen::seed::run_seed;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "portfolio-lab", version, about = "Correlation-driven portfolio allocation laboratory")]
pub struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the Monte-Carlo corpus for every configured method.
    Simulate(RunArgs),
    /// Run the pipeline once over a CSV of historical prices.
    Backtest {
        #[command(flatten)]
        run: RunArgs,
        /// Price file: `Date` column then one column per ticker.
        #[arg(long)]
        prices: PathBuf,
    },
    /// Write NetMod graphs and communities for every rebalance window.
    DumpGraph {
        #[command(flatten)]
        run: RunArgs,
        /// Use historical prices instead of a generated trace.
        #[arg(long)]
        prices: Option<PathBuf>,
        /// Which simulated run to dump.
        #[arg(long, default_value_t = 0)]
        run_index: usize,
        /// Thresholds to sweep; defaults to `evaluation.netmod_alpha`.
        #[arg(long = "alpha", value_delimiter = ',')]
        alphas: Vec<f64>,
    },
    /// Print the method identifiers.
    ListSchemes,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML scenario file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for the run pool.
    #[arg(long, env = "PORTFOLIO_LAB_WORKERS")]
    pub workers: Option<usize>,
    /// Override `simulation.master_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override a config key, e.g. `--set evaluation.delta_t=30`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Suppress the per-run progress counter.
    #[arg(long)]
    pub quiet: bool,
}

impl RunArgs {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("simulation.master_seed={seed}"));
        }
        ScenarioConfig::load(self.config.as_deref(), &overrides)
    }

    fn workers(&self) -> usize {
        self.workers
            .filter(|&w| w > 0)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

pub fn exit_code(err: &LabError) -> i32 {
    match err {
        LabError::UnknownMethod(_) => EXIT_USAGE,
        LabError::Config { .. }
        | LabError::Parse { .. }
        | LabError::Ordering { .. }
        | LabError::InsufficientData(_)
        | LabError::DimensionMismatch { .. }
        | LabError::Domain(_)
        | LabError::Csv(_) => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn error_kind(err: &LabError) -> &'static str {
    match exit_code(err) {
        EXIT_USAGE => "usage",
        EXIT_VALIDATION => "validation",
        _ => "runtime",
    }
}

fn report_error(err: &LabError) -> i32 {
    let code = exit_code(err);
    let mut obj = json!({
        "error": error_kind(err),
        "exit_code": code,
        "message": err.to_string(),
    });
    if let LabError::Config { field, .. } = err {
        obj["key"] = json!(field);
    }
    eprintln!("{obj}");
    code
}

/// Parse `argv`, run the command and return the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let msg = e.render().to_string();
            let obj = json!({"error": "usage", "exit_code": EXIT_USAGE, "message": msg.trim()});
            eprintln!("{obj}");
            return EXIT_USAGE;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();

    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => report_error(&e),
    }
}

fn progress(quiet: bool) -> impl Fn(usize, usize) + Sync {
    move |done, total| {
        if !quiet {
            let mut err = std::io::stderr().lock();
            let _ = writeln!(err, "run {done}/{total}");
        }
    }
}

fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::ListSchemes => {
            for m in Method::sweep() {
                println!("{}", m.id());
            }
            Ok(())
        }
        Command::Simulate(args) => {
            let cfg = args.load()?;
            cfg.validate()?;
            let echo = cfg.to_toml();
            let report = run_corpus(&cfg, args.workers(), Some(&progress(args.quiet)))?;
            write_report_set(&args.out, &echo, &report)?;
            print_table(&report);
            println!("wrote {}", args.out.display());
            Ok(())
        }
        Command::Backtest { run, prices } => {
            let cfg = run.load()?;
            cfg.evaluation.validate()?;
            let table = load_prices_csv(prices)?;
            let result = run_backtest(&table, &cfg)?;
            let report = aggregate(&cfg.evaluation, 1, vec![result], Vec::new());
            write_report_set(&run.out, &cfg.to_toml(), &report)?;
            let returns = prices_to_returns(&table)?;
            let dump = graph_dump(&returns, &cfg.evaluation, run_seed(cfg.simulation.master_seed, 0), &[])?;
            write_graph_dump(&run.out, &dump)?;
            print_table(&report);
            println!("wrote {}", run.out.display());
            Ok(())
        }
        Command::DumpGraph {
            run,
            prices,
            run_index,
            alphas,
        } => {
            let cfg = run.load()?;
            let seed = run_seed(cfg.simulation.master_seed, *run_index as u64);
            let returns = match prices {
                Some(p) => {
                    cfg.evaluation.validate()?;
                    prices_to_returns(&load_prices_csv(p)?)?
                }
                None => {
                    cfg.validate()?;
                    cfg.generator.generate(cfg.simulation.sim_length, seed)?.returns
                }
            };
            if let Some(a) = alphas.iter().find(|a| !(-1.0..=1.0).contains(*a)) {
                return Err(LabError::config("alpha", format!("{a} is outside [-1, 1]")));
            }
            let dump = graph_dump(&returns, &cfg.evaluation, seed, alphas)?;
            write_graph_dump(&run.out, &dump)?;
            write_correlations(&run.out, &dump, &returns, &cfg)?;
            println!("wrote {}", run.out.display());
            Ok(())
        }
    }
}

/// Correlation matrices at the last allocation time, one CSV per metric.
fn write_correlations(
    dir: &Path,
    dump: &crate::harness::GraphDump,
    returns: &crate::returns::ReturnMatrix,
    cfg: &ScenarioConfig,
) -> Result<()> {
    use crate::correlation::{covariance, dcca_matrix, dpcca_from_dcca, pearson_corr, MetricKind};
    let Some(last) = dump.windows.last() else {
        return Ok(());
    };
    let t = last.alloc_time;
    let eval = &cfg.evaluation;
    let recent = returns.slice_rows(t.saturating_sub(eval.delta_t)..t)?;
    let history = returns.slice_rows(0..t)?;
    let labels = returns.labels();
    if let Ok(c) = covariance(&recent).and_then(|c| pearson_corr(&c)) {
        c.write_csv(labels, std::fs::File::create(dir.join(format!("corr_{}.csv", MetricKind::Pearson.label())))?)?;
    }
    if let Ok(d) = dcca_matrix(&history, eval.box_length) {
        d.write_csv(labels, std::fs::File::create(dir.join("corr_dcca.csv"))?)?;
        if let Ok(p) = dpcca_from_dcca(&d, eval.dpcca_ridge) {
            p.write_csv(labels, std::fs::File::create(dir.join("corr_dpcca.csv"))?)?;
        }
    }
    Ok(())
}

fn print_table(report: &CorpusReport) {
    let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    println!(
        "{:<14} {:>10} {:>9} {:>8} {:>9} {:>7} {:>9} {:>7} {:>8} {:>7} {:>7}",
        "method", "ret", "std", "impr", "clr", "nhhi", "pv", "dr", "sr", "var", "cvar"
    );
    for s in &report.methods {
        println!(
            "{:<14} {:>10} {:>9} {:>8} {:>9} {:>7} {:>9} {:>7} {:>8} {:>7} {:>7}",
            s.name,
            f(s.daily_return_mean.mean),
            f(s.daily_return_std.mean),
            f(s.improvement),
            f(s.clr.mean),
            f(s.nhhi.mean),
            s.pv.mean.map_or_else(|| "-".into(), |x| format!("{x:.2e}")),
            f(s.dr.mean),
            f(s.sr.mean),
            f(s.var.mean),
            f(s.cvar.mean),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(run_cli(["portfolio-lab", "list-schemes"]), EXIT_OK);
        assert_eq!(run_cli(["portfolio-lab", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run_cli(["portfolio-lab", "simulate", "--bogus"]), EXIT_USAGE);
        assert_eq!(exit_code(&LabError::UnknownMethod("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&LabError::config("a", "b")), EXIT_VALIDATION);
        assert_eq!(exit_code(&LabError::Singular("x".into())), EXIT_RUNTIME);
    }
}
