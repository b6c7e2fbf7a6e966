//! Convergence suites over a ladder of step counts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::errors::{estimate_errors, ErrorReport, Metric};
use super::fit::{fit_rate, RateFit};
use crate::backward::dp_solve;
use crate::error::{Error, Result};
use crate::forward::{ForwardConfig, OneStepScheme, SchemeKind, TimeGrid};
use crate::model::Problem;
use crate::numerics::{build_grid, gauss_hermite, GridRule};
use crate::rng::derive_seed;

/// Values below this are treated as zero and left out of rate fits.
pub const EXACT_FLOOR: f64 = 1e-9;

/// Admissible range for a fitted slope.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl Band {
    pub fn between(min: f64, max: f64) -> Self {
        Band {
            min: Some(min),
            max: Some(max),
        }
    }

    pub fn at_most(max: f64) -> Self {
        Band { min: None, max: Some(max) }
    }

    pub fn at_least(min: f64) -> Self {
        Band { min: Some(min), max: None }
    }

    pub fn contains(&self, slope: f64) -> bool {
        self.min.is_none_or(|m| slope >= m) && self.max.is_none_or(|m| slope <= m)
    }
}

impl std::fmt::Display for Band {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| v.to_string());
        write!(f, "[{}, {}]", show(self.min), show(self.max))
    }
}

/// Slope bands checked by default for a problem and kernel.
pub fn default_thresholds(problem_id: &str, scheme: SchemeKind) -> BTreeMap<Metric, Band> {
    let mut t = BTreeMap::new();
    match (problem_id, scheme) {
        ("trig", SchemeKind::Euler) => {
            t.insert(Metric::E2, Band::between(-0.65, -0.35));
            t.insert(Metric::YResid, Band::between(-1.25, -0.80));
            t.insert(Metric::YErr2, Band::at_least(-0.70));
            t.insert(Metric::ZResid, Band::between(-1.25, -0.75));
            t.insert(Metric::Y0Err, Band::between(-1.3, -0.8));
            t.insert(Metric::Z0Err, Band::between(-1.3, -0.8));
            t.insert(Metric::UnGap, Band::between(-1.3, -0.8));
        }
        ("gbm", SchemeKind::Euler) => {
            t.insert(Metric::EulerStrong, Band::between(-0.65, -0.40));
        }
        ("gbm", SchemeKind::ExactGbm | SchemeKind::Milstein) => {
            t.insert(Metric::YErr1, Band::at_most(-0.8));
        }
        ("const-sigma", SchemeKind::Euler) => {
            t.insert(Metric::YErr2, Band::at_most(-0.8));
        }
        ("discount", _) => {
            t.insert(Metric::Y0Err, Band::between(-1.2, -0.8));
        }
        _ => {}
    }
    t
}

#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub problem: Problem,
    pub scheme: SchemeKind,
    pub ladder: Vec<usize>,
    pub paths: usize,
    pub forward: ForwardConfig,
    pub quad_order: usize,
    pub grid: GridRule,
    /// Metrics written and fitted.
    pub metrics: Vec<Metric>,
    pub thresholds: BTreeMap<Metric, Band>,
    /// Require `e_1 <= e_2` at every step count.
    pub check_dominance: bool,
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
}

impl SuiteConfig {
    /// Default settings for `problem` under `scheme`.
    pub fn new(problem: Problem, scheme: SchemeKind) -> Self {
        let thresholds = default_thresholds(&problem.id, scheme);
        let check_dominance = problem.id == "trig" && scheme == SchemeKind::Euler;
        SuiteConfig {
            problem,
            scheme,
            ladder: vec![8, 16, 32, 64, 128],
            paths: 20_000,
            forward: ForwardConfig::default(),
            quad_order: 20,
            grid: GridRule::default(),
            metrics: Metric::ALL.to_vec(),
            thresholds,
            check_dominance,
            threads: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_ladder(&self.ladder, 3)?;
        self.forward.validate()?;
        if self.paths < super::errors::MIN_PATHS {
            return Err(Error::Config(format!(
                "experiments.paths must be at least {}, got {}",
                super::errors::MIN_PATHS,
                self.paths
            )));
        }
        if self.quad_order == 0 || self.quad_order > crate::numerics::MAX_ORDER {
            return Err(Error::Config(format!("numerics.quad_order out of range: {}", self.quad_order)));
        }
        if self.metrics.is_empty() {
            return Err(Error::Config("no metrics selected".into()));
        }
        OneStepScheme::new(self.scheme).check(&self.problem)
    }
}

/// Checks that `ladder` is strictly ascending powers of two with at least
/// `min_len` entries.
pub fn validate_ladder(ladder: &[usize], min_len: usize) -> Result<()> {
    if ladder.len() < min_len {
        return Err(Error::Config(format!(
            "the step ladder needs at least {min_len} entries, got {}",
            ladder.len()
        )));
    }
    if let Some(n) = ladder.iter().find(|n| !n.is_power_of_two()) {
        return Err(Error::Config(format!("ladder entry {n} is not a power of two")));
    }
    if ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("ladder {ladder:?} is not strictly ascending")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum FitStatus {
    Fitted(RateFit),
    /// Every value fell below the floor.
    Exact,
    /// Too few usable points.
    Insufficient { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricOutcome {
    pub metric: Metric,
    pub status: FitStatus,
    pub band: Option<Band>,
    /// `None` when the metric carries no threshold.
    pub passed: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepFailure {
    pub steps: usize,
    pub message: String,
    pub numerical: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominanceCheck {
    pub steps: usize,
    pub e_1: f64,
    pub e_2: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub problem: String,
    pub scheme: SchemeKind,
    pub ladder: Vec<usize>,
    pub paths: usize,
    pub forward: ForwardConfig,
    pub quad_order: usize,
    pub grid: GridRule,
    pub metrics: Vec<Metric>,
    pub reports: Vec<ErrorReport>,
    pub failures: Vec<StepFailure>,
    pub outcomes: Vec<MetricOutcome>,
    pub dominance: Vec<DominanceCheck>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
            && self.outcomes.iter().all(|o| o.passed != Some(false))
            && self.dominance.iter().all(|d| d.passed)
    }

    pub fn outcome(&self, metric: Metric) -> Option<&MetricOutcome> {
        self.outcomes.iter().find(|o| o.metric == metric)
    }

    /// Fitted slope of `metric`, if it was fitted.
    pub fn slope(&self, metric: Metric) -> Option<f64> {
        match &self.outcome(metric)?.status {
            FitStatus::Fitted(f) => Some(f.slope),
            _ => None,
        }
    }

    /// Writes one CSV per metric plus `summary.txt` and `summary.json`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for &metric in &self.metrics {
            let mut csv = String::from("N,value,std_error,M\n");
            for r in &self.reports {
                if let Some(e) = r.get(metric) {
                    writeln!(csv, "{},{},{},{}", r.steps, e.value, e.std_error, r.paths).unwrap();
                }
            }
            fs::write(dir.join(format!("{metric}.csv")), csv)?;
        }
        fs::write(dir.join("summary.txt"), self.summary_text())?;
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        fs::write(dir.join("summary.json"), json + "\n")?;
        Ok(())
    }

    /// `key = value` summary with one section per metric.
    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let ladder: Vec<String> = self.ladder.iter().map(|n| n.to_string()).collect();
        writeln!(s, "problem = {}", self.problem).unwrap();
        writeln!(s, "scheme = {}", self.scheme).unwrap();
        writeln!(s, "ladder = {}", ladder.join(",")).unwrap();
        writeln!(s, "paths = {}", self.paths).unwrap();
        writeln!(s, "forward.R = {}", self.forward.refinement).unwrap();
        writeln!(s, "forward.L = {}", self.forward.interior).unwrap();
        writeln!(s, "forward.seed = {}", self.forward.seed).unwrap();
        writeln!(s, "numerics.quad_order = {}", self.quad_order).unwrap();
        writeln!(s, "numerics.dx_cap = {}", self.grid.dx_cap).unwrap();
        writeln!(s, "numerics.dx_coeff = {}", self.grid.dx_coeff).unwrap();
        writeln!(s, "numerics.domain_width_sigmas = {}", self.grid.domain_width_sigmas).unwrap();
        writeln!(s, "verdict = {}", if self.passed() { "pass" } else { "fail" }).unwrap();
        for o in &self.outcomes {
            writeln!(s, "\n[{}]", o.metric).unwrap();
            match &o.status {
                FitStatus::Fitted(f) => {
                    writeln!(s, "status = fitted").unwrap();
                    writeln!(s, "slope = {}", f.slope).unwrap();
                    writeln!(s, "intercept = {}", f.intercept).unwrap();
                    writeln!(s, "r_squared = {}", f.r_squared).unwrap();
                }
                FitStatus::Exact => writeln!(s, "status = exact").unwrap(),
                FitStatus::Insufficient { reason } => {
                    writeln!(s, "status = insufficient").unwrap();
                    writeln!(s, "reason = {reason}").unwrap();
                }
            }
            if let Some(band) = o.band {
                writeln!(s, "band = {band}").unwrap();
            }
            let verdict = match o.passed {
                Some(true) => "pass",
                Some(false) => "fail",
                None => "none",
            };
            writeln!(s, "verdict = {verdict}").unwrap();
        }
        if !self.dominance.is_empty() {
            writeln!(s, "\n[e_1 <= e_2]").unwrap();
            for d in &self.dominance {
                writeln!(
                    s,
                    "N{} = {} {} {}",
                    d.steps,
                    d.e_1,
                    if d.passed { "<=" } else { ">" },
                    d.e_2
                )
                .unwrap();
            }
        }
        writeln!(s, "\n[diagnostics]").unwrap();
        for r in &self.reports {
            writeln!(s, "N{}.extrapolated_fraction = {}", r.steps, r.extrapolated_fraction).unwrap();
        }
        for f in &self.failures {
            writeln!(s, "N{}.failure = {}", f.steps, f.message).unwrap();
        }
        s
    }
}

/// Runs `work` on a dedicated pool of `threads` workers (0 uses the rayon
/// default).
pub fn with_threads<T: Send>(threads: usize, work: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(work))
}

/// Solves and measures one step count.
pub fn run_step(config: &SuiteConfig, steps: usize) -> Result<ErrorReport> {
    let problem = &config.problem;
    let scheme = OneStepScheme::new(config.scheme);
    let rule = gauss_hermite(config.quad_order)?;
    let spatial = build_grid(problem, &config.grid, steps, &scheme, &rule)?;
    let grid = TimeGrid::new(problem.horizon(), steps)?;
    let sol = dp_solve(problem, &grid, &scheme, &rule, &spatial)?;
    let forward = ForwardConfig {
        seed: derive_seed(config.forward.seed, steps as u64),
        ..config.forward
    };
    estimate_errors(problem, &sol, &forward, config.paths)
}

/// Runs every step count of the ladder, fits rates and applies the
/// configured thresholds. Failures at individual step counts are recorded
/// rather than returned; only an invalid configuration is an error.
pub fn run_suite(config: &SuiteConfig) -> Result<SuiteReport> {
    config.validate()?;
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for &n in &config.ladder {
        match with_threads(config.threads, || run_step(config, n))? {
            Ok(r) => reports.push(r),
            Err(e) => failures.push(StepFailure {
                steps: n,
                message: e.to_string(),
                numerical: e.is_numerical(),
            }),
        }
    }

    let outcomes = config
        .metrics
        .iter()
        .map(|&metric| {
            let pts: Vec<(usize, f64)> = reports.iter().map(|r| (r.steps, r.value(metric))).collect();
            let status = fit_status(metric, &pts);
            let band = config.thresholds.get(&metric).copied();
            let passed = band.map(|b| match &status {
                FitStatus::Fitted(f) => b.contains(f.slope),
                FitStatus::Exact => b.min.is_none(),
                FitStatus::Insufficient { .. } => false,
            });
            MetricOutcome {
                metric,
                status,
                band,
                passed,
            }
        })
        .collect();

    let dominance = if config.check_dominance {
        reports
            .iter()
            .map(|r| {
                let (e_1, e_2) = (r.value(Metric::E1), r.value(Metric::E2));
                DominanceCheck {
                    steps: r.steps,
                    e_1,
                    e_2,
                    passed: e_1 <= e_2,
                }
            })
            .collect()
    } else {
        Vec::new()
    };

    Ok(SuiteReport {
        problem: config.problem.id.clone(),
        scheme: config.scheme,
        ladder: config.ladder.clone(),
        paths: config.paths,
        forward: config.forward,
        quad_order: config.quad_order,
        grid: config.grid,
        metrics: config.metrics.clone(),
        reports,
        failures,
        outcomes,
        dominance,
    })
}

fn fit_status(metric: Metric, pts: &[(usize, f64)]) -> FitStatus {
    let usable: Vec<(usize, f64)> = pts.iter().copied().filter(|&(_, v)| v >= EXACT_FLOOR).collect();
    if !pts.is_empty() && usable.is_empty() {
        return FitStatus::Exact;
    }
    match fit_rate(metric.name(), &usable) {
        Ok(f) => FitStatus::Fitted(f),
        Err(e) => FitStatus::Insufficient { reason: e.to_string() },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin;

    fn small(id: &str, ladder: Vec<usize>) -> SuiteConfig {
        let mut c = SuiteConfig::new(builtin(id).unwrap(), SchemeKind::Euler);
        c.ladder = ladder;
        c.paths = 100;
        c.forward.refinement = 4;
        c
    }

    #[test]
    fn discount_first_order() {
        let r = run_suite(&small("discount", vec![4, 8, 16])).unwrap();
        let slope = r.slope(Metric::Y0Err).unwrap();
        assert!((-1.2..=-0.8).contains(&slope), "{slope}");
        assert!(r.passed());
        assert!(matches!(r.outcome(Metric::EulerStrong).unwrap().status, FitStatus::Exact));
    }

    #[test]
    fn abm_linear_is_exact_everywhere() {
        let r = run_suite(&small("abm-linear", vec![4, 8, 16])).unwrap();
        for o in &r.outcomes {
            assert!(matches!(o.status, FitStatus::Exact), "{:?}", o);
        }
        assert!(r.passed());
    }

    #[test]
    fn ladder_validation() {
        assert!(validate_ladder(&[8, 16], 3).is_err());
        assert!(validate_ladder(&[8, 12, 16], 3).is_err());
        assert!(validate_ladder(&[16, 8, 32], 3).is_err());
        assert!(validate_ladder(&[4, 8, 16], 3).is_ok());
        assert!(run_suite(&small("discount", vec![4, 8])).is_err());
    }

    #[test]
    fn bands() {
        assert!(Band::between(-1.0, -0.5).contains(-0.7));
        assert!(!Band::at_most(-0.8).contains(-0.5));
        assert!(Band::at_least(-0.7).contains(-0.5));
        assert_eq!(Band::at_most(-0.8).to_string(), "[-, -0.8]");
    }

    #[test]
    fn report_files_are_reproducible() {
        let mut c = small("trig", vec![4, 8, 16]);
        c.quad_order = 8;
        c.grid.dx_cap = 0.05;
        let a = run_suite(&c).unwrap();
        c.threads = 1;
        let b = run_suite(&c).unwrap();
        assert_eq!(a, b);
        let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        a.write_to(da.path()).unwrap();
        b.write_to(db.path()).unwrap();
        for name in ["summary.txt", "summary.json", "e_2.csv", "y_resid.csv"] {
            let x = fs::read(da.path().join(name)).unwrap();
            assert_eq!(x, fs::read(db.path().join(name)).unwrap(), "{name}");
        }
        let csv = fs::read_to_string(da.path().join("e_2.csv")).unwrap();
        assert!(csv.starts_with("N,value,std_error,M\n4,"));
        assert_eq!(csv.lines().count(), 4);
    }
}
