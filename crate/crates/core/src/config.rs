//! Scenario configuration: a sectioned TOML file, dotted-key overrides and
//! validation that reports the offending key path.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::allocation::{ClaConfig, Method};
use crate::error::{LabError, Result};
use crate::trace_gen::{GaussianConfig, GeneratorConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub num_iters: usize,
    pub sim_length: usize,
    pub num_assets: usize,
    pub master_seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            num_iters: 100,
            sim_length: 520,
            num_assets: 32,
            master_seed: 42,
        }
    }
}

/// Which rows before an allocation time feed the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lookback {
    /// The most recent `delta_t` rows.
    Window,
    /// Every row before the allocation time.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub delta_t: usize,
    pub box_length: usize,
    pub netmod_alpha: f64,
    pub var_alpha: f64,
    pub risk_free: f64,
    pub covariance_lookback: Lookback,
    pub detrended_lookback: Lookback,
    pub dpcca_ridge: bool,
    pub methods: Vec<Method>,
    /// Method whose mean daily return is the reference for the improvement column.
    pub baseline: Option<Method>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            delta_t: 60,
            box_length: 60,
            netmod_alpha: 0.3,
            var_alpha: 0.05,
            risk_free: 0.0,
            covariance_lookback: Lookback::Window,
            detrended_lookback: Lookback::Full,
            dpcca_ridge: false,
            methods: Method::sweep(),
            baseline: Some(Method::sweep()[0]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClaSettings {
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub target_return: Option<f64>,
}

impl Default for ClaSettings {
    fn default() -> Self {
        Self {
            lower_bound: 0.0,
            upper_bound: 1.0,
            target_return: None,
        }
    }
}

impl ClaSettings {
    pub fn for_assets(&self, n: usize) -> ClaConfig {
        ClaConfig::uniform(n, self.lower_bound, self.upper_bound, self.target_return)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub cla: ClaSettings,
    #[serde(default = "default_generator")]
    pub generator: GeneratorConfig,
}

fn default_generator() -> GeneratorConfig {
    GeneratorConfig::Gaussian(GaussianConfig::default())
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            simulation: SimulationConfig::default(),
            evaluation: EvaluationConfig::default(),
            cla: ClaSettings::default(),
            generator: default_generator(),
        }
    }
}

fn prefixed(section: &str, err: LabError) -> LabError {
    match err {
        LabError::Config { field, reason } => LabError::Config {
            field: format!("{section}.{field}"),
            reason,
        },
        other => LabError::Config {
            field: section.to_string(),
            reason: other.to_string(),
        },
    }
}

impl EvaluationConfig {
    /// Checks that do not depend on the number of rows or assets.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| Err(LabError::config(format!("evaluation.{key}"), reason));
        if self.delta_t < 2 {
            return bad("delta_t", format!("must be >= 2, got {}", self.delta_t));
        }
        if self.box_length < 2 {
            return bad("box_length", format!("must be >= 2, got {}", self.box_length));
        }
        if !(-1.0..=1.0).contains(&self.netmod_alpha) {
            return bad("netmod_alpha", format!("must lie in [-1, 1], got {}", self.netmod_alpha));
        }
        if !(self.var_alpha > 0.0 && self.var_alpha < 1.0) {
            return bad("var_alpha", format!("must lie in (0, 1), got {}", self.var_alpha));
        }
        if !self.risk_free.is_finite() {
            return bad("risk_free", "must be finite".into());
        }
        if self.methods.is_empty() {
            return bad("methods", "at least one method is required".into());
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return bad("methods", format!("`{m}` is listed twice"));
            }
        }
        Ok(())
    }
}

impl ScenarioConfig {
    /// Every invariant, reported with the key path of the first violation.
    pub fn validate(&self) -> Result<()> {
        let sim = &self.simulation;
        self.evaluation.validate()?;
        if sim.num_iters < 1 {
            return Err(LabError::config("simulation.num_iters", "must be >= 1"));
        }
        let delta = self.evaluation.delta_t;
        if sim.sim_length < 2 * delta {
            return Err(LabError::config(
                "simulation.sim_length",
                format!(
                    "must satisfy sim_length >= 2 * delta_t ({} < 2 * {delta})",
                    sim.sim_length
                ),
            ));
        }
        if sim.num_assets < 2 {
            return Err(LabError::config("simulation.num_assets", "must be >= 2"));
        }
        self.generator.validate().map_err(|e| prefixed("generator", e))?;
        let produced = self.generator.num_assets();
        if produced != sim.num_assets {
            return Err(LabError::config(
                "simulation.num_assets",
                format!("is {} but the generator produces {produced} columns", sim.num_assets),
            ));
        }
        self.validate_cla(sim.num_assets)
    }

    /// CLA box feasibility for `n` assets.
    pub fn validate_cla(&self, n: usize) -> Result<()> {
        self.cla.for_assets(n).validate(n).map_err(|e| match e {
            LabError::Config { .. } => prefixed("cla", e),
            other => LabError::config("cla", other.to_string()),
        })
    }

    /// Load from a TOML file, applying `key=value` overrides first.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| LabError::config("config", e.message().to_string()))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        fill_generator_counts(&mut table);
        check_methods(&table)?;
        let cfg: ScenarioConfig = Table::try_into(table)
            .map_err(|e: toml::de::Error| LabError::config("config", e.message().to_string()))?;
        Ok(cfg)
    }

    /// Fully resolved configuration, suitable for re-running.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config always serializes")
    }
}

/// Report an unrecognized method name as such rather than as a generic
/// deserialization failure.
fn check_methods(table: &Table) -> Result<()> {
    let Some(eval) = table.get("evaluation").and_then(Value::as_table) else {
        return Ok(());
    };
    let mut names: Vec<&Value> = Vec::new();
    if let Some(Value::Array(ms)) = eval.get("methods") {
        names.extend(ms.iter());
    }
    names.extend(eval.get("baseline"));
    for v in names {
        if let Some(s) = v.as_str() {
            s.parse::<Method>()?;
        }
    }
    Ok(())
}

/// Set a dotted key such as `evaluation.delta_t=30`. The value is read as
/// a TOML literal and falls back to a bare string.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| LabError::config(spec, "override must look like section.key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(LabError::config(key, "empty key segment"));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| LabError::config(key, format!("`{part}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Generator column counts default to a split of `simulation.num_assets`:
/// half independent and half dependent, or for ARFIMA a quarter of the
/// assets as coupled pairs and the rest dependent.
fn fill_generator_counts(table: &mut Table) {
    let n = table
        .get("simulation")
        .and_then(|s| s.get("num_assets"))
        .and_then(Value::as_integer)
        .unwrap_or(SimulationConfig::default().num_assets as i64);
    let gen = table
        .entry("generator")
        .or_insert_with(|| Value::Table(Table::new()));
    let Some(gen) = gen.as_table_mut() else {
        return;
    };
    let kind = gen
        .get("kind")
        .and_then(Value::as_str)
        .unwrap_or("gaussian")
        .to_string();
    gen.entry("kind").or_insert_with(|| Value::String(kind.clone()));
    let fill = |t: &mut Table, key: &str, v: i64| {
        t.entry(key.to_string()).or_insert(Value::Integer(v));
    };
    match kind.as_str() {
        "gaussian" | "gbm" | "garch" => {
            let indep = (n + 1) / 2;
            fill(gen, "num_independent", indep);
            let indep = gen.get("num_independent").and_then(Value::as_integer).unwrap_or(indep);
            fill(gen, "num_dependent", (n - indep).max(0));
        }
        "arfima" | "arfima_shocks" => {
            let target = if kind == "arfima" {
                Some(gen)
            } else {
                gen.entry("arfima")
                    .or_insert_with(|| Value::Table(Table::new()))
                    .as_table_mut()
            };
            if let Some(t) = target {
                fill(t, "num_pairs", (n / 4).max(1));
                let pairs = t.get("num_pairs").and_then(Value::as_integer).unwrap_or(1);
                fill(t, "num_dependent", (n - 2 * pairs).max(0));
            }
        }
        _ => {}
    }
}
