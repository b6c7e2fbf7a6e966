//! `fbsde-lab`: catalog listing, single solves, rate suites and self-checks.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 verdict failure.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fbsde_core::backward::dp_solve;
use fbsde_core::config::RunConfig;
use fbsde_core::experiments::{moment_check, run_suite, with_threads, FitStatus, Metric, SuiteReport};
use fbsde_core::forward::{OneStepScheme, TimeGrid};
use fbsde_core::model::CATALOG;
use fbsde_core::numerics::{build_grid, gauss_hermite};
use fbsde_core::selfcheck::selfcheck;
use fbsde_core::Error;

/// Default output directory when neither `--out` nor `output.dir` is given.
const OUT_ENV: &str = "FBSDE_LAB_OUT";

#[derive(Parser)]
#[command(name = "fbsde-lab", version, about = "Numerics laboratory for decoupled forward-backward SDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in problems.
    Problems {
        /// Print the catalog as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Solve the backward scheme for one step count and export the tables.
    Solve(RunArgs),
    /// Run a convergence suite over the step ladder.
    Rates(RunArgs),
    /// Rate suite restricted to the expansion residuals.
    Expansion(RunArgs),
    /// Increment moments of (X, Y) over half a step.
    Moments(RunArgs),
    /// Fast deterministic consistency checks.
    Selfcheck,
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file with dotted keys.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set forward.R=32`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    problem: Option<String>,
    /// euler, milstein, exact-abm or exact-gbm.
    #[arg(long)]
    scheme: Option<String>,
    /// Step count for `solve`.
    #[arg(short = 'N', long = "steps")]
    steps: Option<usize>,
    /// Comma-separated step counts.
    #[arg(long)]
    ladder: Option<String>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (default: $FBSDE_LAB_OUT, else ./fbsde-out).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut overrides = self.set.clone();
        if let Some(p) = &self.problem {
            overrides.push(format!("problem.id=\"{p}\""));
        }
        if let Some(s) = &self.scheme {
            overrides.push(format!("forward.scheme=\"{s}\""));
            overrides.push(format!("backward.scheme=\"{s}\""));
        }
        if let Some(n) = self.steps {
            overrides.push(format!("solve.N={n}"));
        }
        if let Some(l) = &self.ladder {
            overrides.push(format!("experiments.ladder=\"{l}\""));
        }
        if let Some(m) = self.paths {
            overrides.push(format!("experiments.paths={m}"));
        }
        if let Some(s) = self.seed {
            overrides.push(format!("forward.seed={s}"));
        }
        if let Some(t) = self.threads {
            overrides.push(format!("run.threads={t}"));
        }
        let mut config = RunConfig::load(self.config.as_deref(), &overrides)?;
        if let Some(o) = &self.out {
            config.output = Some(o.clone());
        }
        Ok(config)
    }
}

fn output_dir(config: &RunConfig) -> PathBuf {
    config
        .output
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("fbsde-out"))
}

/// `v` with six significant digits.
fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        format!("{:.*}", (5 - mag) as usize, v)
    } else {
        format!("{v:.5e}")
    }
}

enum Outcome {
    Ok,
    VerdictFailed,
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        match e {
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}

fn cmd_problems(json: bool) -> Result<Outcome, Error> {
    if json {
        let list: Vec<serde_json::Value> = CATALOG
            .iter()
            .map(|e| {
                let params: serde_json::Map<String, serde_json::Value> =
                    e.params.iter().map(|(k, v)| (k.to_string(), (*v).into())).collect();
                serde_json::json!({
                    "id": e.id,
                    "description": e.summary,
                    "hypotheses": e.hypotheses,
                    "params": params,
                })
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&list).expect("catalog serializes"));
    } else {
        for e in CATALOG {
            println!("{:<12} {}", e.id, e.summary);
            println!("{:<12} hypotheses: {}", "", e.hypotheses);
        }
    }
    Ok(Outcome::Ok)
}

fn cmd_solve(config: &RunConfig) -> Result<Outcome, Error> {
    let problem = config.build_problem()?;
    let scheme = OneStepScheme::new(config.scheme);
    scheme.check(&problem)?;
    let rule = gauss_hermite(config.quad_order)?;
    let n = config.steps;
    let grid = TimeGrid::new(problem.horizon(), n)?;
    let spatial = build_grid(&problem, &config.grid, n, &scheme, &rule)?;
    let sol = with_threads(config.threads, || dp_solve(&problem, &grid, &scheme, &rule, &spatial))??;

    let dir = output_dir(config);
    fs::create_dir_all(&dir)?;
    let path = dir.join(format!("solution_{}_{}_N{n}.csv", problem.id, config.scheme));
    sol.write_table(&problem.id, BufWriter::new(fs::File::create(&path)?))?;

    let x0 = problem.x0();
    let (y, z) = sol.eval_solution(0, x0)?;
    println!("problem = {}", problem.id);
    println!("scheme = {}", config.scheme);
    println!("N = {n}");
    println!("x0 = {x0}");
    println!("u^N(0,x0) = {}", sig6(y));
    println!("z^N(0,x0) = {}", sig6(z));
    if problem.closed_form.is_some() {
        let truth = problem.true_solution(0.0, x0)?;
        println!("u(0,x0) = {}", sig6(truth.y));
        println!("gap = {:.12e}", (y - truth.y).abs());
    }
    println!(
        "extrapolated_fraction = {:e}",
        sol.diagnostics.core_extrapolated_fraction()
    );
    println!("table = {}", path.display());
    Ok(Outcome::Ok)
}

fn print_suite(report: &SuiteReport, dir: &Path) {
    println!("problem = {}  scheme = {}  paths = {}", report.problem, report.scheme, report.paths);
    for o in &report.outcomes {
        let slope = match &o.status {
            FitStatus::Fitted(f) => format!("{:+.3}", f.slope),
            FitStatus::Exact => "exact".to_string(),
            FitStatus::Insufficient { .. } => "n/a".to_string(),
        };
        let band = o.band.map(|b| b.to_string()).unwrap_or_default();
        let verdict = match o.passed {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "",
        };
        println!("{:<13} slope {:>8}  {:<16} {}", o.metric.name(), slope, band, verdict);
    }
    for d in &report.dominance {
        if !d.passed {
            println!("e_1 > e_2 at N = {}: {:.4e} > {:.4e}", d.steps, d.e_1, d.e_2);
        }
    }
    for f in &report.failures {
        println!("N = {} failed: {}", f.steps, f.message);
    }
    println!("verdict = {}", if report.passed() { "pass" } else { "fail" });
    println!("report = {}", dir.display());
}

fn cmd_rates(config: &RunConfig, residuals_only: bool) -> Result<Outcome, Error> {
    let mut config = config.clone();
    if residuals_only {
        config.metrics = Some(Metric::RESIDUALS.to_vec());
    }
    let suite = config.suite()?;
    let report = run_suite(&suite)?;
    let dir = output_dir(&config).join(format!(
        "{}_{}_{}",
        if residuals_only { "expansion" } else { "rates" },
        report.problem,
        report.scheme
    ));
    report.write_to(&dir)?;
    print_suite(&report, &dir);
    Ok(if report.passed() { Outcome::Ok } else { Outcome::VerdictFailed })
}

fn cmd_moments(config: &RunConfig) -> Result<Outcome, Error> {
    fbsde_core::experiments::validate_ladder(&config.ladder, 3)?;
    let problem = config.build_problem()?;
    let report = with_threads(config.threads, || {
        moment_check(&problem, &config.ladder, &config.forward, config.paths)
    })??;
    let dir = output_dir(config);
    fs::create_dir_all(&dir)?;
    let mut csv = String::from("N,h,x_moment_2,x_moment_4,y_moment_2,y_moment_4,M\n");
    for r in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.steps, r.h, r.x[0].value, r.x[1].value, r.y[0].value, r.y[1].value, report.paths
        ));
    }
    let path = dir.join(format!("moments_{}.csv", problem.id));
    fs::write(&path, csv)?;
    for f in &report.fits {
        println!(
            "{:<11} p = {}  slope vs h {:+.3}  (min {:.1})  {}",
            f.name,
            f.p,
            f.fit.slope,
            f.min_slope,
            if f.passed { "pass" } else { "FAIL" }
        );
    }
    println!("verdict = {}", if report.passed() { "pass" } else { "fail" });
    println!("table = {}", path.display());
    Ok(if report.passed() { Outcome::Ok } else { Outcome::VerdictFailed })
}

fn cmd_selfcheck() -> Result<Outcome, Error> {
    let report = selfcheck()?;
    for c in &report.checks {
        println!("{c}");
    }
    println!("verdict = {}", if report.passed() { "pass" } else { "fail" });
    Ok(if report.passed() { Outcome::Ok } else { Outcome::VerdictFailed })
}

fn run(cli: Cli) -> Result<Outcome, Error> {
    match cli.command {
        Command::Problems { json } => cmd_problems(json),
        Command::Solve(a) => cmd_solve(&a.load()?),
        Command::Rates(a) => cmd_rates(&a.load()?, false),
        Command::Expansion(a) => cmd_rates(&a.load()?, true),
        Command::Moments(a) => cmd_moments(&a.load()?),
        Command::Selfcheck => cmd_selfcheck(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::VerdictFailed) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
