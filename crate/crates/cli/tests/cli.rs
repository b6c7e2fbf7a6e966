use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbsde-lab"))
        .args(args)
        .env("FBSDE_LAB_OUT", out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no `{key}` in:\n{text}"))
        .to_string()
}

const SMALL: &[&str] = &["--paths", "200", "--set", "forward.R=4", "--set", "numerics.quad_order=8"];

#[test]
fn problems_lists_the_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["problems"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    for id in ["discount", "trig", "gbm", "abm-linear", "const-sigma"] {
        assert!(text.contains(id), "{id}");
    }
    let o = lab(&["problems", "--json"], dir.path());
    let list: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(list.as_array().unwrap().len(), 5);
    assert_eq!(list[4]["id"], "discount");
    assert_eq!(list[4]["params"]["r"], 0.1);
}

#[test]
fn unknown_subcommand_prints_usage() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["frobnicate"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn solve_discount_and_abm_linear() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["solve", "--problem", "discount", "-N", "4"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(field(&text, "u^N(0,x0)"), "0.903688");
    let table = fs::read_to_string(dir.path().join("solution_discount_euler_N4.csv")).unwrap();
    assert!(table.contains("# problem=discount\n# scheme=euler\n# N=4\n"));
    assert!(table.contains("k,x,y,z\n"));

    let o = lab(&["solve", "--problem", "abm-linear", "-N", "8"], dir.path());
    assert_eq!(field(&stdout(&o), "z^N(0,x0)"), "0.400000");
}

#[test]
fn solve_trig_matches_reference_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["solve", "--problem", "trig", "-N", "32"], dir.path());
    assert!(o.status.success());
    let gap: f64 = field(&stdout(&o), "gap").parse().unwrap();
    let reference = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/trig_euler_N32.txt")).unwrap();
    let expected: f64 = field(&reference, "gap").parse().unwrap();
    assert!((gap - expected).abs() < 1e-10, "{gap} vs {expected}");
}

#[test]
fn rates_on_discount() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["rates", "--problem", "discount", "--ladder", "4,8,16,32"];
    args.extend_from_slice(SMALL);
    let o = lab(&args, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let run = dir.path().join("rates_discount_euler");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    let y0 = summary["outcomes"]
        .as_array()
        .unwrap()
        .iter()
        .find(|o| o["metric"] == "y0_err")
        .unwrap();
    let slope = y0["status"]["slope"].as_f64().unwrap();
    assert!((-1.2..=-0.8).contains(&slope), "{slope}");
    let csv = fs::read_to_string(run.join("y0_err.csv")).unwrap();
    assert!(csv.starts_with("N,value,std_error,M\n4,"));
    assert!(fs::read_to_string(run.join("summary.txt")).unwrap().contains("[y0_err]\nstatus = fitted\n"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| lab(args, dir.path()).status.code();
    assert_eq!(code(&["rates", "--problem", "discount", "--ladder", "4,8"]), Some(2));
    assert_eq!(code(&["solve", "--problem", "nope"]), Some(2));
    assert_eq!(code(&["solve", "--set", "bogus.key=1"]), Some(2));
    assert_eq!(code(&["solve", "--problem", "trig", "--scheme", "exact-gbm"]), Some(2));
    let mut args = vec![
        "rates",
        "--problem",
        "discount",
        "--ladder",
        "4,8,16",
        "--set",
        "thresholds.y0_err.max=-2",
    ];
    args.extend_from_slice(SMALL);
    assert_eq!(code(&args), Some(4));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let out = dir.path().join("elsewhere");
    fs::write(
        &cfg,
        format!(
            "[problem]\nid = \"discount\"\n[experiments]\nladder = [4, 8, 16]\npaths = 300\n\
             [forward]\nR = 4\n[output]\ndir = \"{}\"\n",
            out.display()
        ),
    )
    .unwrap();
    let o = lab(&["rates", "--config", cfg.to_str().unwrap(), "--paths", "200"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("rates_discount_euler/summary.txt")).unwrap();
    assert_eq!(field(&summary, "paths"), "200");
    assert_eq!(field(&summary, "forward.R"), "4");
}

#[test]
fn rates_are_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, sub: &str| {
        let out = dir.path().join(sub);
        let mut args = vec!["rates", "--problem", "trig", "--ladder", "4,8,16", "--threads", threads];
        args.extend_from_slice(SMALL);
        args.extend_from_slice(&["--out", out.to_str().unwrap()]);
        lab(&args, dir.path());
        out.join("rates_trig_euler")
    };
    let a = run("1", "a");
    let b = run("3", "b");
    let c = run("1", "c");
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 15);
    for name in names {
        let x = fs::read(a.join(&name)).unwrap();
        assert_eq!(x, fs::read(b.join(&name)).unwrap(), "{name:?}");
        assert_eq!(x, fs::read(c.join(&name)).unwrap(), "{name:?}");
    }
}

#[test]
fn expansion_reports_only_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["expansion", "--problem", "discount", "--ladder", "4,8,16"];
    args.extend_from_slice(SMALL);
    let o = lab(&args, dir.path());
    assert!(o.status.success());
    let run = dir.path().join("expansion_discount_euler");
    assert!(run.join("y_resid.csv").exists());
    assert!(!run.join("e_2.csv").exists());
}

#[test]
fn moments_and_selfcheck() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(
        &["moments", "--problem", "abm-linear", "--ladder", "4,8,16", "--paths", "4000", "--set", "forward.R=4"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(dir.path().join("moments_abm-linear.csv").exists());

    let start = std::time::Instant::now();
    let o = lab(&["selfcheck"], dir.path());
    assert!(start.elapsed().as_secs_f64() < 10.0);
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 10);
    assert!(text.contains("tolerance"));
}
