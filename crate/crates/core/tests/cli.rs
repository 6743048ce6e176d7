mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn had(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_had")).args(args).output().unwrap()
}

fn had_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_had")).args(args).env(key, value).output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    validate(&v);
    v
}

fn validate(v: &Value) {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/schema/output.schema.json")).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(v).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "schema violations: {errors:?}");
}

/// Writes a three-period panel (treatment in period 3) with the given doses
/// and outcome changes between periods 2 and 3.
fn write_panel(dir: &Path, name: &str, doses: &[f64], dy: &[f64]) -> PathBuf {
    let mut r = common::rng(1);
    let levels = common::normals(&mut r, doses.len());
    let pre = common::normals(&mut r, doses.len());
    let mut text = String::from("unit,time,outcome,dose\n");
    for (i, (&d, &c)) in doses.iter().zip(dy).enumerate() {
        let l = levels[i];
        text += &format!("g{i},1,{},0\ng{i},2,{l},0\ng{i},3,{},{d}\n", l + 0.1 * pre[i], l + c);
    }
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn unit_slope_panel(dir: &Path) -> PathBuf {
    let mut r = common::rng(2);
    let d = common::uniforms(&mut r, 200, 0.0, 1.0);
    write_panel(dir, "unit_slope.csv", &d, &d)
}

fn noisy_panel(dir: &Path) -> PathBuf {
    let mut r = common::rng(3);
    let d = common::uniforms(&mut r, 300, 0.0, 1.0);
    let e = common::normals(&mut r, 300);
    let dy: Vec<f64> = d.iter().zip(&e).map(|(v, e)| v + v * v + e).collect();
    write_panel(dir, "noisy.csv", &d, &dy)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn estimate_recovers_a_unit_slope() {
    let dir = TempDir::new().unwrap();
    let p = unit_slope_panel(dir.path());
    let v = json(&had(&["estimate", "--panel", s(&p)]));
    assert_eq!(v["command"], "estimate");
    let beta = v["result"]["estimate"]["beta"].as_f64().unwrap();
    assert!((beta - 1.0).abs() < 1e-10, "beta = {beta}");
    assert_eq!(v["result"]["estimate"]["mode"], "qug");
}

#[test]
fn qug_test_reproduces_the_closed_form() {
    let dir = TempDir::new().unwrap();
    let mut d = vec![0.044, 0.044 + 0.044 / 1.77];
    d.extend((1..=40).map(|i| 0.1 + i as f64 / 40.0));
    let p = write_panel(dir.path(), "qug.csv", &d, &vec![0.0; d.len()]);
    let v = json(&had(&["test-qug", "--panel", s(&p)]));
    let pv = v["result"]["report"]["p_value"].as_f64().unwrap();
    assert_eq!(format!("{pv:.3}"), "0.361");
    assert_eq!(v["result"]["report"]["reject"], false);
}

#[test]
fn qug_test_drops_zero_doses_with_a_note() {
    let dir = TempDir::new().unwrap();
    let mut d = vec![0.0, 0.0];
    d.extend((1..=20).map(|i| i as f64 / 20.0));
    let p = write_panel(dir.path(), "zeros.csv", &d, &vec![0.0; d.len()]);
    let v = json(&had(&["test-qug", "--panel", s(&p)]));
    assert_eq!(v["result"]["dropped_zero_doses"], 2);
    assert!(v["result"]["note"].is_string());
}

#[test]
fn every_subcommand_emits_schema_valid_json() {
    let dir = TempDir::new().unwrap();
    let p = noisy_panel(dir.path());
    let p = s(&p);
    let runs: Vec<Vec<&str>> = vec![
        vec!["estimate", "--panel", p, "--kernel", "tri"],
        vec!["estimate", "--panel", p, "--recipe", "--B", "99", "--seed", "3"],
        vec!["estimate", "--panel", p, "--bandwidth", "0.4", "--mode", "qug"],
        vec!["event-study", "--panel", p],
        vec!["test-linearity", "--panel", p, "--B", "199"],
        vec!["test-linearity", "--panel", p, "--method", "yatchew"],
        vec!["test-linearity", "--panel", p, "--pretrends", "--B", "199"],
        vec!["twfe", "--panel", p, "--weights"],
        vec!["twfe", "--panel", p, "--target", "1"],
        vec!["simulate", "--G", "100", "--reps", "100", "--seed", "5"],
        vec!["simulate", "--dgp", "dgp3-synthetic", "--G", "100", "--reps", "100"],
    ];
    for args in runs {
        let v = json(&had(&args));
        assert_eq!(v["command"], args[0]);
    }
}

#[test]
fn discrete_doses_use_the_polynomial_test() {
    let dir = TempDir::new().unwrap();
    let mut r = common::rng(4);
    let d: Vec<f64> = (0..120).map(|i| [0.5, 1.0, 2.0][i % 3]).collect();
    let e = common::normals(&mut r, 120);
    let p = write_panel(dir.path(), "discrete.csv", &d, &e);
    let v = json(&had(&["test-linearity", "--panel", s(&p), "--method", "poly"]));
    assert_eq!(v["result"]["report"]["k_levels"], 3);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let p = noisy_panel(dir.path());
    for args in [
        vec!["simulate", "--G", "100", "--reps", "120", "--seed", "9"],
        vec!["test-linearity", "--panel", s(&p), "--B", "299", "--seed", "4"],
        vec!["event-study", "--panel", s(&p)],
    ] {
        let a = had_env(&args, "HAD_THREADS", "1");
        let b = had_env(&args, "HAD_THREADS", "3");
        let c = had(&args);
        assert!(a.status.success());
        assert_eq!(a.stdout, b.stdout);
        assert_eq!(a.stdout, c.stdout);
    }
}

#[test]
fn csv_output_and_output_files() {
    let dir = TempDir::new().unwrap();
    let p = unit_slope_panel(dir.path());
    let out = had(&["--format", "csv", "estimate", "--panel", s(&p)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let headers = rows.headers().unwrap().clone();
    let beta_col = headers.iter().position(|h| h == "beta").unwrap();
    let first = rows.records().next().unwrap().unwrap();
    assert!((first[beta_col].parse::<f64>().unwrap() - 1.0).abs() < 1e-10);

    let target = dir.path().join("qug.json");
    let plot = dir.path().join("plot.csv");
    assert!(had(&["--out", s(&target), "test-qug", "--panel", s(&p)]).status.success());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&target).unwrap()).unwrap();
    validate(&v);
    assert!(had(&["event-study", "--panel", s(&p), "--plot-data", s(&plot)]).status.success());
    assert!(std::fs::read_to_string(&plot).unwrap().lines().count() >= 2);

    let csv_qug = had(&["--format", "csv", "test-qug", "--panel", s(&p)]);
    assert_eq!(csv_qug.status.code(), Some(2));
}

#[test]
fn exit_codes_separate_validation_from_io_failures() {
    let dir = TempDir::new().unwrap();
    let p = unit_slope_panel(dir.path());
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "unit,time,outcome,dose\na,1,1,0\na,2,x,1\nb,1,0,0\nb,2,1,2\nc,1,0,0\nc,2,1,3\n").unwrap();
    let unbalanced = dir.path().join("unbalanced.csv");
    std::fs::write(&unbalanced, "unit,time,outcome,dose\na,1,1,0\na,2,1,1\nb,1,0,0\nb,2,1,2\nc,1,0,0\n").unwrap();

    let code = |args: &[&str]| had(args).status.code();
    assert_eq!(code(&["estimate", "--panel", s(&bad)]), Some(2));
    assert_eq!(code(&["estimate", "--panel", s(&unbalanced)]), Some(2));
    assert_eq!(code(&["estimate", "--panel", s(&p), "--kernel", "gaussian"]), Some(2));
    assert_eq!(code(&["estimate", "--panel", s(&p), "--alpha", "0.9"]), Some(2));
    assert_eq!(code(&["test-linearity", "--panel", s(&p), "--B", "10"]), Some(2));
    assert_eq!(code(&["estimate", "--panel", s(&dir.path().join("missing.csv"))]), Some(2));
    let blocked = dir.path().join("no_such_dir").join("out.json");
    assert_eq!(code(&["--out", s(&blocked), "test-qug", "--panel", s(&p)]), Some(1));

    let err = String::from_utf8(had(&["estimate", "--panel", s(&bad)]).stderr).unwrap();
    assert!(err.contains("line") && err.contains("outcome"), "{err}");
}

#[test]
fn schema_rejects_malformed_documents() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/schema/output.schema.json")).unwrap();
    let validator = jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap();
    let dir = TempDir::new().unwrap();
    let p = unit_slope_panel(dir.path());
    let good: Value = serde_json::from_slice(&had(&["estimate", "--panel", s(&p)]).stdout).unwrap();
    assert!(validator.is_valid(&good));
    let mut missing = good.clone();
    missing["result"]["estimate"].as_object_mut().unwrap().remove("beta");
    assert!(!validator.is_valid(&missing));
    let mut bad_mode = good.clone();
    bad_mode["result"]["estimate"]["mode"] = Value::from("kernel");
    assert!(!validator.is_valid(&bad_mode));
    let mut extra = good;
    extra["unexpected"] = Value::from(1);
    assert!(!validator.is_valid(&extra));
}
