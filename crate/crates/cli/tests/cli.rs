use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_boardcast"));
    c.env_remove("BOARDCAST_SEED");
    c
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = run(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Ninety days of the default scenario, outside the pandemic window.
fn short_scenario(dir: &Path) -> PathBuf {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/scenarios/default.json")).unwrap();
    let mut s: Value = serde_json::from_str(&text).unwrap();
    s["start"] = "2021-01-01".into();
    s["end"] = "2021-03-31".into();
    s["warmup_days"] = 10.into();
    let path = dir.join("short.json");
    std::fs::write(&path, serde_json::to_string_pretty(&s).unwrap()).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn evaluate_without_checkpoint_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["evaluate", "--hourly", "h.csv", "--out", "e"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_inputs_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["featurize", "--data", "nowhere", "--out", "f"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["pipeline", "--scenario", "nope.json", "--out", "p"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn corrupt_checkpoint_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("h.csv"), "timestamp\n").unwrap();
    std::fs::write(dir.path().join("c.json"), "{ not json").unwrap();
    let out = run(&["evaluate", "--hourly", "h.csv", "--checkpoint", "c.json", "--out", "e"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn stages_chain_and_cleaning_counts_match_injection() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scenario = short_scenario(d);
    let scenario = scenario.to_str().unwrap();
    ok(&["synth", "--scenario", scenario, "--seed", "3", "--out", "data"], d);
    ok(&["featurize", "--data", "data", "--out", "feat"], d);

    let injected = read_json(&d.join("data/injected.json"));
    let cleaning = &read_json(&d.join("feat/featurize_report.json"))["cleaning"];
    assert!(injected["waiting_too_long"].as_u64().unwrap() > 0);
    assert_eq!(cleaning["waiting_excluded"], injected["waiting_too_long"]);
    assert_eq!(cleaning["stuck_treatment_excluded"], injected["stuck_in_treatment"]);
    assert_eq!(cleaning["boarding_excluded"], injected["boarding_too_long"]);

    ok(&["build", "--hourly", "feat/hourly.csv", "--variant", "DS2", "--out", "build"], d);
    let build = read_json(&d.join("build/build.json"));
    assert_eq!(build["variant"], "DS2");
    assert!(build["test_windows"].as_u64().unwrap() > 0);

    ok(&["train", "--hourly", "feat/hourly.csv", "--epochs", "2", "--seed", "1", "--out", "train"], d);
    ok(&["evaluate", "--hourly", "feat/hourly.csv", "--checkpoint", "train/checkpoint.json", "--out", "eval"], d);
    let eval = read_json(&d.join("eval/evaluation.json"));
    assert!(eval["at_horizon"]["mae"].as_f64().unwrap().is_finite());
    assert_eq!(eval["horizon"], 6);

    ok(&["decompose", "--hourly", "feat/hourly.csv", "--checkpoint", "train/checkpoint.json", "--out", "dec"], d);
    let rows = std::fs::read_to_string(d.join("dec/decomposition.csv")).unwrap();
    assert_eq!(rows.lines().count(), 25);

    for stage in ["data", "feat", "build", "train", "eval", "dec"] {
        let m = read_json(&d.join(stage).join("manifest.json"));
        assert!(!m["outputs"].as_array().unwrap().is_empty(), "{stage}");
        for f in m["outputs"].as_array().unwrap() {
            assert_eq!(f["sha256"].as_str().unwrap().len(), 64);
        }
    }
    let m = read_json(&d.join("eval/manifest.json"));
    assert_eq!(m["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn pipeline_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scenario = short_scenario(d);
    let args = |out: &'static str| {
        vec!["pipeline", "--scenario", scenario.to_str().unwrap(), "--variant", "DS3", "--seed", "7", "--epochs", "2", "--out", out]
    };
    ok(&args("a"), d);
    assert!(bin().args(args("b")).env("BOARDCAST_SEED", "99").current_dir(d).status().unwrap().success());
    for f in ["report.json", "checkpoint.json", "predictions.csv", "decomposition.csv", "manifest.json"] {
        let a = std::fs::read(d.join("a").join(f)).unwrap();
        let b = std::fs::read(d.join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn seed_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scenario = short_scenario(d);
    let scenario = scenario.to_str().unwrap();
    let status = bin()
        .args(["synth", "--scenario", scenario, "--out", "data"])
        .env("BOARDCAST_SEED", "42")
        .current_dir(d)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(read_json(&d.join("data/manifest.json"))["seed"], 42);
}

#[test]
fn gridsearch_ranking_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scenario = short_scenario(d);
    ok(&["synth", "--scenario", scenario.to_str().unwrap(), "--out", "data"], d);
    ok(&["featurize", "--data", "data", "--out", "feat"], d);
    let grid = r#"{
        "learning_rate": [0.003, 0.01], "dropout": [0.1], "batch_size": [128], "lookback": [12],
        "stacks": [[
            {"kind": "trend", "blocks": 1, "hidden_widths": [32], "degree": 2},
            {"kind": "exogenous", "blocks": 1, "hidden_widths": [32]}
        ]]
    }"#;
    std::fs::write(d.join("grid.json"), grid).unwrap();
    let search = |out: &str| {
        ok(&["gridsearch", "--hourly", "feat/hourly.csv", "--grid", "grid.json", "--epochs", "2", "--seed", "5", "--out", out], d);
        let text = std::fs::read_to_string(d.join(out).join("results.csv")).unwrap();
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let wall = r.headers().unwrap().iter().position(|h| h == "wall_seconds").unwrap();
        r.records()
            .map(|rec| {
                let rec = rec.unwrap();
                rec.iter().enumerate().filter(|(i, _)| *i != wall).map(|(_, v)| v.to_string()).collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    };
    let a = search("g1");
    let b = search("g2");
    assert_eq!(a.len(), 2);
    assert_eq!(a, b);
    // seeds follow grid order
    let seeds: Vec<(&str, &str)> = a.iter().map(|r| (r[1].as_str(), r[2].as_str())).collect();
    assert!(seeds.contains(&("0", "5")) && seeds.contains(&("1", "6")));
    assert!(d.join("g1/trial_000_history.csv").is_file());
    assert!(d.join("g1/trial_001_history.csv").is_file());
}
