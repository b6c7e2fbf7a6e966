//! Run configuration with flat dotted keys.
//!
//! A configuration file is TOML; nested tables are flattened to dotted keys
//! (`[forward] R = 64` and `"forward.R" = 64` are equivalent). Overrides of
//! the form `key=value` are applied on top, with `value` parsed as a TOML
//! value and falling back to a bare string.
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `problem.id` | catalog id | `trig` |
//! | `problem.<id>.<param>` | catalog parameter override | catalog value |
//! | `forward.scheme`, `backward.scheme` | one-step kernel (must agree) | `euler` |
//! | `forward.R` | fine sub-steps per step | 64 |
//! | `forward.L` | reference states kept per step | 4 |
//! | `forward.seed` | base seed | 20070101 |
//! | `solve.N` | step count for single solves | 32 |
//! | `experiments.ladder` | step counts, powers of two | `[8, 16, 32, 64, 128]` |
//! | `experiments.paths` | Monte Carlo paths `M` | 20000 |
//! | `experiments.metrics` | metrics to report | all |
//! | `numerics.quad_order` | Gauss-Hermite order | 20 |
//! | `numerics.dx_cap`, `numerics.dx_coeff` | `dx = min(cap, coeff N^{-3/4})` | 0.02, 1 |
//! | `numerics.domain_width_sigmas` | working-domain half width in `sigma sqrt(T)` | 6 |
//! | `output.dir` | output directory | unset |
//! | `run.threads` | worker threads, 0 for all cores | 0 |
//! | `thresholds.<metric>.min`, `.max` | slope band | per problem |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use toml::Value;

use crate::error::{Error, Result};
use crate::experiments::{default_thresholds, validate_ladder, Band, Metric, SuiteConfig};
use crate::forward::{ForwardConfig, SchemeKind};
use crate::model::{builtin_with, Problem, ProblemParams, CATALOG};
use crate::numerics::{GridRule, MAX_ORDER};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: String,
    /// Parameter overrides per catalog id.
    pub params: BTreeMap<String, ProblemParams>,
    pub scheme: SchemeKind,
    pub steps: usize,
    pub ladder: Vec<usize>,
    pub paths: usize,
    pub forward: ForwardConfig,
    pub quad_order: usize,
    pub grid: GridRule,
    pub output: Option<PathBuf>,
    pub threads: usize,
    pub metrics: Option<Vec<Metric>>,
    /// Bands replacing the per-problem defaults, metric by metric.
    pub thresholds: BTreeMap<Metric, Band>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: "trig".into(),
            params: BTreeMap::new(),
            scheme: SchemeKind::Euler,
            steps: 32,
            ladder: vec![8, 16, 32, 64, 128],
            paths: 20_000,
            forward: ForwardConfig::default(),
            quad_order: 20,
            grid: GridRule::default(),
            output: None,
            threads: 0,
            metrics: None,
            thresholds: BTreeMap::new(),
        }
    }
}

/// Flattens nested tables into dotted keys.
pub fn flatten(table: &toml::Table) -> BTreeMap<String, Value> {
    fn walk(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
        for (k, v) in table {
            let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            match v {
                Value::Table(t) => walk(&key, t, out),
                other => {
                    out.insert(key, other.clone());
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    walk("", table, &mut out);
    out
}

/// Parses a `key=value` override.
pub fn parse_override(item: &str) -> Result<(String, Value)> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("override `{item}` has an empty key")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        Value::String(s) => s
            .parse()
            .map_err(|_| Error::Config(format!("`{key}` expects a number, got `{s}`"))),
        other => Err(Error::Config(format!("`{key}` expects a number, got {other}"))),
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    let n = match v {
        Value::Integer(i) => *i,
        Value::String(s) => s
            .parse()
            .map_err(|_| Error::Config(format!("`{key}` expects an integer, got `{s}`")))?,
        other => return Err(Error::Config(format!("`{key}` expects an integer, got {other}"))),
    };
    usize::try_from(n).map_err(|_| Error::Config(format!("`{key}` must be non-negative, got {n}")))
}

fn as_positive(key: &str, v: &Value) -> Result<usize> {
    match as_usize(key, v)? {
        0 => Err(Error::Config(format!("`{key}` must be positive"))),
        n => Ok(n),
    }
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| Error::Config(format!("`{key}` expects a string, got {v}")))
}

/// A list given as an array or as a comma-separated string.
fn as_list(key: &str, v: &Value) -> Result<Vec<Value>> {
    match v {
        Value::Array(a) => Ok(a.clone()),
        Value::String(s) => Ok(s
            .split(',')
            .map(|p| p.trim())
            .filter(|p| !p.is_empty())
            .map(|p| Value::String(p.to_string()))
            .collect()),
        Value::Integer(_) => Ok(vec![v.clone()]),
        other => Err(Error::Config(format!("`{key}` expects a list, got {other}"))),
    }
}

impl RunConfig {
    /// Reads a configuration file and applies `overrides` on top.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut keys = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                let table: toml::Table = text
                    .parse()
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                flatten(&table)
            }
            None => BTreeMap::new(),
        };
        for item in overrides {
            let (k, v) = parse_override(item)?;
            keys.insert(k, v);
        }
        Self::from_keys(&keys)
    }

    pub fn from_keys(keys: &BTreeMap<String, Value>) -> Result<Self> {
        let mut c = RunConfig::default();
        let mut schemes: Vec<(&str, SchemeKind)> = Vec::new();
        for (key, v) in keys {
            let parts: Vec<&str> = key.split('.').collect();
            match parts.as_slice() {
                ["problem", "id"] => c.problem = as_str(key, v)?.to_string(),
                ["problem", id, param] => {
                    let entry = CATALOG
                        .iter()
                        .find(|e| e.id == *id)
                        .ok_or_else(|| Error::Config(format!("`{key}` names an unknown problem `{id}`")))?;
                    if !entry.params.iter().any(|(p, _)| p == param) {
                        return Err(Error::Config(format!("problem `{id}` has no parameter `{param}`")));
                    }
                    c.params
                        .entry(id.to_string())
                        .or_default()
                        .insert(param.to_string(), as_f64(key, v)?);
                }
                ["forward" | "backward", "scheme"] => schemes.push((key.as_str(), as_str(key, v)?.parse()?)),
                ["forward", "R"] => c.forward.refinement = as_positive(key, v)?,
                ["forward", "L"] => c.forward.interior = as_positive(key, v)?,
                ["forward", "seed"] => {
                    c.forward.seed = match v {
                        Value::Integer(i) if *i >= 0 => *i as u64,
                        Value::String(s) => s
                            .parse()
                            .map_err(|_| Error::Config(format!("`{key}` expects an unsigned integer")))?,
                        _ => return Err(Error::Config(format!("`{key}` expects an unsigned integer"))),
                    }
                }
                ["solve", "N"] => c.steps = as_positive(key, v)?,
                ["experiments", "ladder"] => {
                    c.ladder = as_list(key, v)?
                        .iter()
                        .map(|n| as_positive(key, n))
                        .collect::<Result<_>>()?
                }
                ["experiments", "paths"] => c.paths = as_positive(key, v)?,
                ["experiments", "metrics"] => {
                    c.metrics = Some(
                        as_list(key, v)?
                            .iter()
                            .map(|m| as_str(key, m)?.parse())
                            .collect::<Result<_>>()?,
                    )
                }
                ["numerics", "quad_order"] => c.quad_order = as_positive(key, v)?,
                ["numerics", "dx_cap"] => c.grid.dx_cap = as_f64(key, v)?,
                ["numerics", "dx_coeff"] => c.grid.dx_coeff = as_f64(key, v)?,
                ["numerics", "domain_width_sigmas"] => c.grid.domain_width_sigmas = as_f64(key, v)?,
                ["output", "dir"] => c.output = Some(PathBuf::from(as_str(key, v)?)),
                ["run", "threads"] => c.threads = as_usize(key, v)?,
                ["thresholds", metric, bound @ ("min" | "max")] => {
                    let m: Metric = metric.parse()?;
                    let band = c.thresholds.entry(m).or_insert(Band { min: None, max: None });
                    let value = Some(as_f64(key, v)?);
                    if *bound == "min" {
                        band.min = value;
                    } else {
                        band.max = value;
                    }
                }
                _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
            }
        }
        if let Some(&(_, first)) = schemes.first() {
            if let Some((k, other)) = schemes.iter().find(|(_, s)| *s != first) {
                return Err(Error::Config(format!(
                    "`{k}` = {other} disagrees with the other scheme key ({first})"
                )));
            }
            c.scheme = first;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !CATALOG.iter().any(|e| e.id == self.problem) {
            return Err(Error::Config(format!(
                "unknown problem `{}` (valid: {})",
                self.problem,
                CATALOG.iter().map(|e| e.id).collect::<Vec<_>>().join(", ")
            )));
        }
        self.forward.validate()?;
        validate_ladder(&self.ladder, 1)?;
        if self.quad_order > MAX_ORDER {
            return Err(Error::Config(format!(
                "numerics.quad_order must be at most {MAX_ORDER}, got {}",
                self.quad_order
            )));
        }
        for (name, v) in [
            ("numerics.dx_cap", self.grid.dx_cap),
            ("numerics.dx_coeff", self.grid.dx_coeff),
            ("numerics.domain_width_sigmas", self.grid.domain_width_sigmas),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("`{name}` must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// The configured problem with its parameter overrides.
    pub fn build_problem(&self) -> Result<Problem> {
        let empty = ProblemParams::new();
        builtin_with(&self.problem, self.params.get(&self.problem).unwrap_or(&empty))
    }

    /// Suite settings; rate commands need a ladder of at least three entries.
    pub fn suite(&self) -> Result<SuiteConfig> {
        validate_ladder(&self.ladder, 3)?;
        let problem = self.build_problem()?;
        let mut suite = SuiteConfig::new(problem, self.scheme);
        suite.ladder = self.ladder.clone();
        suite.paths = self.paths;
        suite.forward = self.forward;
        suite.quad_order = self.quad_order;
        suite.grid = self.grid;
        suite.threads = self.threads;
        if let Some(m) = &self.metrics {
            suite.metrics = m.clone();
            suite.check_dominance &= m.contains(&Metric::E1) && m.contains(&Metric::E2);
        }
        let mut thresholds = default_thresholds(&self.problem, self.scheme);
        thresholds.extend(self.thresholds.iter().map(|(m, b)| (*m, *b)));
        suite.thresholds = thresholds;
        suite.validate()?;
        Ok(suite)
    }
}
