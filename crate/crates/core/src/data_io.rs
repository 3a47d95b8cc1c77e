//! Historical price tables and the backtest entry point.

use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;

use crate::config::ScenarioConfig;
use crate::error::{LabError, Result};
use crate::harness::{run_single_on_returns, RunResult};
use crate::returns::ReturnMatrix;

/// Daily prices: strictly increasing dates, positive prices, no gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    dates: Vec<NaiveDate>,
    prices: DMatrix<f64>,
    labels: Vec<String>,
}

impl PriceTable {
    pub fn new(dates: Vec<NaiveDate>, prices: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if prices.nrows() != dates.len() {
            return Err(LabError::DimensionMismatch {
                expected: dates.len(),
                found: prices.nrows(),
            });
        }
        if prices.ncols() != labels.len() {
            return Err(LabError::DimensionMismatch {
                expected: labels.len(),
                found: prices.ncols(),
            });
        }
        // File line of date k is k + 2 (the header is line 1).
        for (k, pair) in dates.windows(2).enumerate() {
            if pair[1] <= pair[0] {
                return Err(LabError::Ordering {
                    row: k + 3,
                    reason: format!("{} does not come after {}", pair[1], pair[0]),
                });
            }
        }
        for ((t, a), &p) in (0..prices.ncols())
            .flat_map(|a| (0..prices.nrows()).map(move |t| (t, a)))
            .zip(prices.iter())
        {
            if !(p.is_finite() && p > 0.0) {
                return Err(LabError::Domain(format!(
                    "price {p} for `{}` on {} is not positive",
                    labels[a], dates[t]
                )));
            }
        }
        Ok(Self { dates, prices, labels })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn rows(&self) -> usize {
        self.dates.len()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["Date".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (t, d) in self.dates.iter().enumerate() {
            let mut row = vec![d.format("%Y-%m-%d").to_string()];
            row.extend((0..self.labels.len()).map(|a| self.prices[(t, a)].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn load_prices_csv(path: &Path) -> Result<PriceTable> {
    read_prices_csv(std::fs::File::open(path)?)
}

/// Parse `Date,TICKER,...` with ISO-8601 dates. Rows are numbered from 1
/// for the header, matching a text editor's line numbers.
pub fn read_prices_csv<R: Read>(input: R) -> Result<PriceTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let header = rdr.headers()?.clone();
    let cols: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    if cols.first().is_none_or(|c| !c.eq_ignore_ascii_case("date")) {
        return Err(LabError::Parse {
            row: 1,
            column: cols.first().cloned().unwrap_or_default(),
            reason: "first column must be `Date`".into(),
        });
    }
    let labels = cols[1..].to_vec();
    if labels.is_empty() {
        return Err(LabError::Parse {
            row: 1,
            column: String::new(),
            reason: "no ticker columns".into(),
        });
    }

    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let cell = |k: usize| rec.get(k).map(str::trim).unwrap_or("");
        let date_text = cell(0);
        let date = NaiveDate::parse_from_str(date_text, "%Y-%m-%d").map_err(|e| LabError::Parse {
            row,
            column: cols[0].clone(),
            reason: format!("`{date_text}` is not an ISO date ({e})"),
        })?;
        if rec.len() > cols.len() {
            return Err(LabError::Parse {
                row,
                column: String::new(),
                reason: format!("{} cells for {} columns", rec.len(), cols.len()),
            });
        }
        for (a, label) in labels.iter().enumerate() {
            let text = cell(a + 1);
            if text.is_empty() {
                return Err(LabError::Parse {
                    row,
                    column: label.clone(),
                    reason: "missing value".into(),
                });
            }
            let v: f64 = text.parse().map_err(|_| LabError::Parse {
                row,
                column: label.clone(),
                reason: format!("`{text}` is not a number"),
            })?;
            values.push(v);
        }
        dates.push(date);
    }
    let prices = DMatrix::from_row_slice(dates.len(), labels.len(), &values);
    PriceTable::new(dates, prices, labels)
}

/// Simple returns `(p_t − p_{t−1}) / p_{t−1}`.
pub fn prices_to_returns(table: &PriceTable) -> Result<ReturnMatrix> {
    let t = table.rows();
    if t < 3 {
        return Err(LabError::InsufficientData(format!("{t} price rows give fewer than two returns")));
    }
    let p = &table.prices;
    let values = DMatrix::from_fn(t - 1, p.ncols(), |r, a| (p[(r + 1, a)] - p[(r, a)]) / p[(r, a)]);
    ReturnMatrix::new(values, table.labels.clone())
}

/// Compound returns from `initial` prices on consecutive days from `start`.
pub fn returns_to_prices(returns: &ReturnMatrix, initial: &[f64], start: NaiveDate) -> Result<PriceTable> {
    if initial.len() != returns.assets() {
        return Err(LabError::DimensionMismatch {
            expected: returns.assets(),
            found: initial.len(),
        });
    }
    let t = returns.periods() + 1;
    let mut prices = DMatrix::zeros(t, returns.assets());
    for a in 0..returns.assets() {
        prices[(0, a)] = initial[a];
        for r in 1..t {
            prices[(r, a)] = prices[(r - 1, a)] * (1.0 + returns.get(r - 1, a));
        }
    }
    let dates = start.iter_days().take(t).collect();
    PriceTable::new(dates, prices, returns.labels().to_vec())
}

/// The simulation pipeline run once on historical returns.
pub fn run_backtest(table: &PriceTable, cfg: &ScenarioConfig) -> Result<RunResult> {
    let returns = prices_to_returns(table)?;
    cfg.evaluation.validate()?;
    cfg.validate_cla(returns.assets())?;
    run_single_on_returns(cfg, 0, &returns)
}
