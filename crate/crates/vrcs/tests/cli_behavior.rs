//! End-to-end checks of the `vrcs` binary: config handling, exit codes,
//! CSV outputs, and the self-check subcommand. The summary table is
//! cross-checked by re-reading the per-run trace CSVs with an independent
//! reader rather than trusting the library's own bookkeeping.

mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::median;

const EPS: f64 = 1e-5;

fn vrcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vrcs"))
        .args(args)
        .output()
        .expect("binary should launch")
}

fn write_config(dir: &Path, algorithms: &str) -> std::path::PathBuf {
    let out_dir = dir.join("out");
    let text = format!(
        r#"
[problem]
kind = "quadratic"
d = 6
m_f = 2
m_g = 2
ratio = 2.0
mu = 0.5
seed = 11

[run]
eps = {EPS}
max_rounds = 20000
seeds = [1, 2]
out_dir = "{}"

{algorithms}
"#,
        out_dir.display()
    );
    let path = dir.join("exp.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_writes_traces_and_summary_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[[algorithms]]\nname = \"sc_aeg\"\n\n[[algorithms]]\nname = \"vrcs\"",
    );
    let out = vrcs(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        stdout.lines().filter(|l| l.contains("converged")).count(),
        4,
        "stdout: {stdout}"
    );
    assert!(stdout.lines().any(|l| l.starts_with("summary: ")));

    let out_dir = dir.path().join("out");
    for name in ["sc_aeg_1.csv", "sc_aeg_2.csv", "vrcs_1.csv", "vrcs_2.csv", "summary.csv"] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }
}

/// Reads a trace CSV and returns (rounds_f, rounds_total) at the first row
/// whose grad_norm is at or below eps.
fn reread_to_eps(path: &Path, eps: f64) -> Option<(u64, u64)> {
    let mut reader = csv::ReaderBuilder::new().from_path(path).unwrap();
    for row in reader.records() {
        let row = row.unwrap();
        let grad: f64 = row[5].parse().unwrap();
        if grad <= eps {
            let rf: u64 = row[1].parse().unwrap();
            let rg: u64 = row[2].parse().unwrap();
            return Some((rf, rf + rg));
        }
    }
    None
}

#[test]
fn summary_matches_independent_reread_of_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[[algorithms]]\nname = \"acc_vrcs\"\n\n[[algorithms]]\nname = \"c_aeg\"",
    );
    let out = vrcs(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));

    let out_dir = dir.path().join("out");
    let mut reader = csv::ReaderBuilder::new()
        .from_path(out_dir.join("summary.csv"))
        .unwrap();
    let mut per_algo: std::collections::HashMap<String, Vec<f64>> = Default::default();
    let mut medians: Vec<(String, f64)> = Vec::new();
    let mut run_rows = 0;
    for row in reader.records() {
        let row = row.unwrap();
        match &row[0] {
            "run" => {
                run_rows += 1;
                let label = row[1].to_string();
                let seed = &row[2];
                let (rf, total) = reread_to_eps(&out_dir.join(format!("{label}_{seed}.csv")), EPS)
                    .expect("every run here reaches eps");
                assert_eq!(row[4].parse::<u64>().unwrap(), total, "row: {row:?}");
                assert_eq!(row[5].parse::<u64>().unwrap(), rf, "row: {row:?}");
                per_algo.entry(label).or_default().push(total as f64);
            }
            "median" => {
                medians.push((row[1].to_string(), row[4].parse::<f64>().unwrap()));
            }
            other => panic!("unexpected row kind {other}"),
        }
    }
    assert_eq!(run_rows, 4);
    assert_eq!(medians.len(), 2);
    for (label, reported) in medians {
        let expected = median(&per_algo[&label]);
        assert_eq!(reported, expected, "median for {label}");
    }
}

#[test]
fn repeated_invocations_are_byte_identical() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let algos = "[[algorithms]]\nname = \"vrcs\"";
    let cfg_a = write_config(dir_a.path(), algos);
    let cfg_b = write_config(dir_b.path(), algos);
    assert_eq!(vrcs(&["run", cfg_a.to_str().unwrap(), "--jobs", "2"]).status.code(), Some(0));
    assert_eq!(vrcs(&["run", cfg_b.to_str().unwrap(), "--jobs", "1"]).status.code(), Some(0));
    for name in ["vrcs_1.csv", "vrcs_2.csv", "summary.csv"] {
        let a = fs::read(dir_a.path().join("out").join(name)).unwrap();
        let b = fs::read(dir_b.path().join("out").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between invocations");
    }
}

#[test]
fn unknown_config_key_exits_one_and_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(
        &path,
        "[problem]\nkind = \"quadratic\"\nd = 6\nm_f = 2\nm_g = 2\nratio = 2.0\nmu = 0.5\nseed = 1\nbogus_knob = 3\n\n[run]\neps = 1e-5\nmax_rounds = 100\nseeds = [1]\nout_dir = \"o\"\n\n[[algorithms]]\nname = \"vrcs\"\n",
    )
    .unwrap();
    let out = vrcs(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("bogus_knob"), "stderr: {stderr}");
    assert!(stderr.contains("line 9"), "stderr: {stderr}");
}

#[test]
fn missing_config_file_exits_one() {
    let out = vrcs(&["run", "/definitely/not/here.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error:"));
}

#[test]
fn diverging_run_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // Oversized dual step with a tiny prox width: the divergence guard
    // trips within a few iterations.
    let cfg = write_config(
        dir.path(),
        "[[algorithms]]\nname = \"sc_aeg\"\ntheta = 1e-3\ntau = 0.5\neta = 1e4\nalpha = 10.0\np = 0.5",
    );
    let out = vrcs(&["run", cfg.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("diverged"), "stdout: {stdout}");
}

#[test]
fn seed_override_replaces_the_seed_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[[algorithms]]\nname = \"sc_aeg\"");
    let out = vrcs(&["run", cfg.to_str().unwrap(), "--seed-override", "99"]);
    assert_eq!(out.status.code(), Some(0));
    let out_dir = dir.path().join("out");
    assert!(out_dir.join("sc_aeg_99.csv").exists());
    assert!(!out_dir.join("sc_aeg_1.csv").exists());
}

#[test]
fn verify_subcommand_prints_one_line_per_check() {
    let out = vrcs(&["verify", "--seed", "5"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "stdout: {}",
        String::from_utf8_lossy(&out.stdout)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    let ok_lines = stdout.lines().filter(|l| l.starts_with("[ok]")).count();
    assert_eq!(ok_lines, 6, "stdout: {stdout}");
    assert!(stdout.contains("6/6 checks passed"), "stdout: {stdout}");
}
