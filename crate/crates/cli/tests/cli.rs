use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "
[data]
kind = sinusoid
n = 24
test_n = 12
seed = 1

[model]
hidden = 6

[train]
epochs = 5
batch_size = 12
lr = 0.01

[curvature]
samples = 20
";

fn marglik(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_marglik"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn train_writes_trace_record_and_curve() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.ini"), TINY).unwrap();
    let out = marglik(&["train", "tiny.ini", "--out-dir", "runs"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("tiny: log marglik"));
    for file in ["tiny.trace.csv", "tiny.record.json", "tiny.predictive.csv"] {
        assert!(
            dir.path().join("runs").join(file).exists(),
            "{file} missing"
        );
    }
    let trace = fs::read_to_string(dir.path().join("runs/tiny.trace.csv")).unwrap();
    let header = trace.lines().next().unwrap();
    assert!(header.starts_with("epoch,train_nll,log_marglik,log_marglik_per_n,"));
    assert_eq!(trace.lines().count(), 6);
    let curve = fs::read_to_string(dir.path().join("runs/tiny.predictive.csv")).unwrap();
    assert_eq!(
        curve.lines().next().unwrap(),
        "x,mean,epistemic_sd,total_sd"
    );
}

#[test]
fn seed_override_changes_data_and_compare_warns() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.ini"), TINY).unwrap();
    assert!(
        marglik(&["train", "tiny.ini", "--out-dir", "a"], dir.path())
            .status
            .success()
    );
    assert!(marglik(
        &["train", "tiny.ini", "--out-dir", "b", "--seed", "9"],
        dir.path()
    )
    .status
    .success());
    let out = marglik(
        &["compare", "a/tiny.record.json", "b/tiny.record.json"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("different data"));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "rank,name,log_marglik,log_marglik_per_n,num_params"
    );
    assert_eq!(lines.len(), 3);
}

#[test]
fn compare_ranks_by_marglik() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.ini"), TINY).unwrap();
    fs::write(
        dir.path().join("wide.ini"),
        TINY.replace("hidden = 6", "hidden = 12"),
    )
    .unwrap();
    for cfg in ["small.ini", "wide.ini"] {
        assert!(marglik(&["train", cfg, "--out-dir", "runs"], dir.path())
            .status
            .success());
    }
    let out = marglik(
        &["compare", "runs/wide.record.json", "runs/small.record.json"],
        dir.path(),
    );
    assert!(out.status.success());
    assert!(stderr(&out).is_empty());
    let text = stdout(&out);
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    let first: f64 = rows[0][2].parse().unwrap();
    let second: f64 = rows[1][2].parse().unwrap();
    assert!(first >= second);
}

#[test]
fn predict_reads_inputs_and_writes_moments() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.ini"), TINY).unwrap();
    assert!(
        marglik(&["train", "tiny.ini", "--out-dir", "runs"], dir.path())
            .status
            .success()
    );
    fs::write(dir.path().join("x.csv"), "x\n0.5\n4.0\n7.5\n").unwrap();
    let out = marglik(
        &[
            "predict",
            "runs/tiny.record.json",
            "x.csv",
            "-o",
            "pred.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("pred.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,mean_0,epistemic_sd_0,total_sd_0");
    assert_eq!(lines.len(), 4);
    for l in &lines[1..] {
        let v: Vec<f64> = l.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(v[2] >= 0.0 && v[3] >= v[2]);
    }
}

#[test]
fn grid_trains_one_model_per_precision() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{TINY}\n[grid]\nprior_precisions = 0.1, 1, 10\n");
    fs::write(dir.path().join("g.ini"), cfg).unwrap();
    let out = marglik(&["grid", "g.ini", "--out-dir", "runs"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let records = fs::read_dir(dir.path().join("runs"))
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .ends_with(".record.json")
        })
        .count();
    assert_eq!(records, 3);
    assert!(stdout(&out).contains("rank,name"));
}

#[test]
fn grid_requires_grid_section() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.ini"), TINY).unwrap();
    let out = marglik(&["grid", "tiny.ini"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("[grid]"));
}

#[test]
fn config_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.ini"), "[train]\nepohcs = 3\n").unwrap();
    let out = marglik(&["train", "bad.ini"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("epohcs"));
    assert!(!dir.path().join("out").exists());
}
