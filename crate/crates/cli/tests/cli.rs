//! Subcommand behaviour of the `d2d` binary: outputs, exit codes, messages.

use std::path::Path;
use std::process::{Command, Output};

fn d2d(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_d2d"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = d2d(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

const SMALL: &str = r#"{"rng_seed": 5, "num_groups": 150}"#;

fn generated(dir: &Path) {
    std::fs::write(dir.join("gen.json"), SMALL).unwrap();
    ok(
        &[
            "generate",
            "--config",
            "gen.json",
            "--out",
            "trace.log",
            "--ledger",
            "ledger.json",
            "--relationships",
            "rel.csv",
        ],
        dir,
    );
}

#[test]
fn analysis_subcommands_write_their_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generated(dir);
    assert!(read(dir, "trace.log").starts_with("#d2dtrace v1"));
    assert!(read(dir, "rel.csv").starts_with("user_a,user_b,tier"));

    let summary: serde_json::Value =
        serde_json::from_str(&ok(&["ingest", "--trace", "trace.log"], dir)).unwrap();
    let events = read(dir, "trace.log").lines().count() as u64 - 1;
    assert_eq!(summary["num_events"], events);

    ok(
        &["groups", "--trace", "trace.log", "--out", "groups.json"],
        dir,
    );
    assert!(read(dir, "group_sizes.csv").starts_with("size,count"));
    let groups: serde_json::Value = serde_json::from_str(&read(dir, "groups.json")).unwrap();
    assert!(!groups.as_object().unwrap().is_empty());

    ok(
        &["metrics", "--trace", "trace.log", "--out", "metrics.csv"],
        dir,
    );
    assert!(read(dir, "metrics.csv").starts_with(
        "group_id,size,global_clustering,mean_local_clustering,avg_path_length,diameter"
    ));

    let fit: serde_json::Value =
        serde_json::from_str(&ok(&["fit", "--histogram", "group_sizes.csv"], dir)).unwrap();
    assert!(fit["alpha_hat"].as_f64().unwrap() > 1.0);
    assert_eq!(fit["xmin"], 2);

    ok(
        &[
            "redundancy",
            "--trace",
            "trace.log",
            "--window",
            "3600",
            "--out",
            "red.csv",
        ],
        dir,
    );
    assert!(read(dir, "red.csv").lines().count() > 1);

    ok(
        &[
            "seed",
            "--trace",
            "trace.log",
            "--relationships",
            "rel.csv",
            "--out",
            "seeds.json",
        ],
        dir,
    );
    ok(
        &[
            "propagate",
            "--trace",
            "trace.log",
            "--relationships",
            "rel.csv",
            "--sample",
            "20",
            "--p",
            "0.5",
            "--threshold",
            "friend",
            "--out",
            "cov.csv",
        ],
        dir,
    );
    assert!(read(dir, "cov.csv").starts_with("group_id,size,seed,coverage"));
    let cov: serde_json::Value = serde_json::from_str(&read(dir, "coverage_summary.json")).unwrap();
    assert!(cov["mean"].as_f64().unwrap() <= 1.0);

    ok(
        &[
            "dataset",
            "--trace",
            "trace.log",
            "--relationships",
            "rel.csv",
            "--out",
            "train.csv",
            "--test-out",
            "test.csv",
        ],
        dir,
    );
    assert!(read(dir, "train.csv").starts_with("user_a,user_b,f1,"));
    assert!(read(dir, "test.csv").lines().count() > 1);

    ok(
        &[
            "predict",
            "--trace",
            "trace.log",
            "--relationships",
            "rel.csv",
            "--epochs",
            "30",
            "--out",
            "predict.json",
        ],
        dir,
    );
    let report: serde_json::Value = serde_json::from_str(&read(dir, "predict.json")).unwrap();
    assert_eq!(report["sweep"].as_array().unwrap().len(), 57);

    ok(
        &[
            "report",
            "--redundancy",
            "red.csv",
            "--histogram",
            "group_sizes.csv",
            "--coverage",
            "cov.csv",
            "--out-dir",
            "rep",
        ],
        dir,
    );
    for name in [
        "redundancy_series.csv",
        "group_size_loglog.csv",
        "coverage_cdf.csv",
    ] {
        assert!(read(&dir.join("rep"), name).lines().count() > 1, "{name}");
    }
}

#[test]
fn generation_is_reproducible_and_seed_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("gen.json"), SMALL).unwrap();
    ok(&["generate", "--config", "gen.json", "--out", "a.log"], dir);
    ok(
        &[
            "--threads",
            "1",
            "generate",
            "--config",
            "gen.json",
            "--out",
            "b.log",
        ],
        dir,
    );
    ok(
        &[
            "generate", "--config", "gen.json", "--seed", "6", "--out", "c.log",
        ],
        dir,
    );
    assert_eq!(read(dir, "a.log"), read(dir, "b.log"));
    assert_ne!(read(dir, "a.log"), read(dir, "c.log"));
}

#[test]
fn missing_input_exits_2_and_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = d2d(
        &["groups", "--trace", "nowhere.log", "--out", "g.json"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.log"));
    assert!(!tmp.path().join("g.json").exists());
}

#[test]
fn malformed_line_is_reported_with_its_number() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generated(dir);
    let mut text = read(dir, "trace.log");
    text.push_str("not,an,event\n");
    std::fs::write(dir.join("bad.log"), &text).unwrap();
    let line = text.lines().count();

    let out = d2d(&["ingest", "--trace", "bad.log"], dir);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("bad.log") && stderr.contains(&line.to_string()),
        "{stderr}"
    );

    let summary: serde_json::Value =
        serde_json::from_str(&ok(&["ingest", "--trace", "bad.log", "--lenient"], dir)).unwrap();
    assert_eq!(summary["num_events"], line as u64 - 2);
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(d2d(&["frobnicate"], dir).status.code(), Some(1));
    assert_eq!(d2d(&["groups"], dir).status.code(), Some(1));
    assert_eq!(
        d2d(&["--threads", "0", "ingest", "--trace", "x"], dir)
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        d2d(
            &[
                "propagate",
                "--trace",
                "x",
                "--strategy",
                "best",
                "--out",
                "y"
            ],
            dir
        )
        .status
        .code(),
        Some(1)
    );
    let help = d2d(&["--help"], dir);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("pipeline"));
}

#[test]
fn invalid_config_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("bad.json"), r#"{"num_groups": 10, "colour": 3}"#).unwrap();
    let out = d2d(&["generate", "--config", "bad.json", "--out", "t.log"], dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json"));

    std::fs::write(dir.join("neg.json"), r#"{"size_alpha": 0.5}"#).unwrap();
    let out = d2d(&["generate", "--config", "neg.json", "--out", "t.log"], dir);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn small_pipeline_writes_a_consistent_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("run.json"),
        r#"{"generator": {"rng_seed": 9, "num_groups": 200}, "coverage": {"sample_size": 30}, "sweep_sizes": [2], "model": {"epochs": 50}}"#,
    )
    .unwrap();
    ok(
        &["pipeline", "--config", "run.json", "--out-dir", "out"],
        dir,
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&read(dir, "out/manifest.json")).unwrap();
    let outputs = manifest["outputs"].as_object().unwrap();
    assert!(outputs.contains_key("report/coverage_cdf.csv"));
    assert!(outputs.contains_key("predict.json"));
    assert_eq!(manifest["rng_seed"], 9);
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 1);
    let predict: serde_json::Value = serde_json::from_str(&read(dir, "out/predict.json")).unwrap();
    assert_eq!(predict["sweep"].as_array().unwrap().len(), 22);
    let config: serde_json::Value = serde_json::from_str(&read(dir, "out/config.json")).unwrap();
    assert_eq!(config["generator"]["num_groups"], 200);
    assert_eq!(config["fit_xmin"], 2);
}
