use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn failsearch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_failsearch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = failsearch(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Dataset, one-cell model, and two searches (guided with 2 repetitions,
/// random with 1) under `dir`.
fn small_pipeline(dir: &Path) {
    let dataset = dir.join("dataset.jsonl");
    let model = dir.join("model.json");
    ok(&[
        "gen-dataset",
        "--count",
        "300",
        "--seed",
        "1",
        "--out-dir",
        s(dir),
    ]);
    ok(&[
        "train",
        "--dataset",
        s(&dataset),
        "--filters",
        "0.3",
        "--layers",
        "1",
        "--seeds-per-cell",
        "1",
        "--epochs",
        "20",
        "--out-dir",
        s(dir),
    ]);
    ok(&[
        "search",
        "--model",
        s(&model),
        "--dataset",
        s(&dataset),
        "--algo",
        "hc",
        "--seed-strategy",
        "failure",
        "--T",
        "10",
        "--repetitions",
        "2",
        "--budget",
        "50e",
        "--out-dir",
        s(dir),
    ]);
    ok(&[
        "search",
        "--algo",
        "random",
        "--T",
        "10",
        "--repetitions",
        "1",
        "--budget",
        "50e",
        "--out-dir",
        s(dir),
    ]);
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn help_lists_subcommands() {
    let out = ok(&["--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["gen-dataset", "train", "search", "analyze"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn empty_dataset_exits_degenerate() {
    let dir = TempDir::new().unwrap();
    let out = failsearch(&["gen-dataset", "--count", "0", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn unknown_sut_exits_validation() {
    let dir = TempDir::new().unwrap();
    let out = failsearch(&["gen-dataset", "--sut", "bogus", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_budget_is_rejected() {
    let out = failsearch(&["search", "--algo", "random", "--budget", "12x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failure_seeding_needs_a_dataset() {
    let dir = TempDir::new().unwrap();
    let out = failsearch(&[
        "search",
        "--algo",
        "hc",
        "--seed-strategy",
        "failure",
        "--T",
        "2",
        "--repetitions",
        "1",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--dataset"));
}

#[test]
fn pipeline_writes_outcomes_and_is_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    small_pipeline(a.path());
    small_pipeline(b.path());

    let outcome_files: Vec<_> = files_under(a.path())
        .into_iter()
        .filter(|p| p.starts_with("hc_fail") && p.to_string_lossy().contains("outcomes-"))
        .collect();
    assert_eq!(outcome_files.len(), 2);
    let total: usize = outcome_files
        .iter()
        .map(|p| {
            let v: Value =
                serde_json::from_str(&fs::read_to_string(a.path().join(p)).unwrap()).unwrap();
            v["outcomes"].as_array().unwrap().len()
        })
        .sum();
    assert_eq!(total, 20);

    let files = files_under(a.path());
    assert_eq!(files, files_under(b.path()));
    for f in &files {
        if f.to_string_lossy().starts_with("manifest-") {
            continue;
        }
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{} differs",
            f.display()
        );
    }
}

#[test]
fn analyze_prints_one_row_per_approach() {
    let dir = TempDir::new().unwrap();
    small_pipeline(dir.path());
    let mut args = vec!["analyze".to_string()];
    for f in files_under(dir.path()) {
        if f.to_string_lossy().contains("outcomes-") {
            args.push(dir.path().join(f).to_string_lossy().into_owned());
        }
    }
    args.extend(["--clustering-runs", "2", "--out-dir"].map(String::from));
    args.push(dir.path().to_string_lossy().into_owned());
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = ok(&argv);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.lines().any(|l| l.starts_with("hc_fail ")));
    assert!(table.lines().any(|l| l.starts_with("random ")));
    // A single random repetition leaves nothing to test against.
    assert!(table.contains("p=N/A"));
    for name in [
        "report.json",
        "report.csv",
        "comparison.txt",
        "manifest-analyze.json",
    ] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}
