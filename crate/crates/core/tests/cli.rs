use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use swirpad::synthgen::{reference_counts, GeneratorConfig};

const BIN: &str = env!("CARGO_BIN_EXE_swirpad");

fn swirpad(cwd: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(BIN).current_dir(cwd).args(args).output().expect("spawn swirpad");
    let text = format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    (out.status.code().expect("exit code"), text)
}

fn log_lines(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap_or_default()
        .lines()
        .map(|l| serde_json::from_str(l).expect("run.log line is JSON"))
        .collect()
}

/// A small dataset (about 60 presentations, 24 px) written through the CLI.
fn small_dataset(dir: &Path) -> PathBuf {
    let cfg = GeneratorConfig {
        counts: reference_counts(0.02),
        image_size: 24,
        frames_per_presentation: 3,
        ..GeneratorConfig::default()
    };
    let cfg_path = dir.join("generator.json");
    fs::write(&cfg_path, cfg.to_json()).unwrap();
    let data = dir.join("data");
    let (code, text) = swirpad(
        dir,
        &["synthgen", "--config", cfg_path.to_str().unwrap(), "--seed", "7", "--out", data.to_str().unwrap()],
    );
    assert_eq!(code, 0, "{text}");
    data
}

#[test]
fn commands_chain_and_log_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let data = small_dataset(dir);
    let data = data.to_str().unwrap();
    let p = |name: &str| dir.join(name).to_str().unwrap().to_owned();

    let (code, text) = swirpad(dir, &["rank", "--data", data, "--out", &p("ranking.csv")]);
    assert_eq!(code, 0, "{text}");
    let ranking = fs::read_to_string(dir.join("ranking.csv")).unwrap();
    assert_eq!(ranking.lines().count(), 1 + 42);

    let train = [
        "train", "--data", data, "--channels", "1300-1450,1050-1450", "--preset", "proxy", "--epochs", "2",
        "--seed", "3", "--jobs", "1", "--out", &p("model.spad"),
    ];
    let (code, text) = swirpad(dir, &train);
    assert_eq!(code, 0, "{text}");

    let (code, text) = swirpad(
        dir,
        &["eval", "--data", data, "--model-file", &p("model.spad"), "--frame-agg", "median", "--out", &p("report")],
    );
    assert_eq!(code, 0, "{text}");
    let metrics: Value = serde_json::from_str(&fs::read_to_string(dir.join("report/metrics.json")).unwrap()).unwrap();
    assert!(metrics["test_acer"].as_f64().is_some());
    assert!(dir.join("report/roc.svg").exists());

    let log = log_lines(&dir.join("run.log"));
    let commands: Vec<&str> = log.iter().map(|l| l["command"].as_str().unwrap()).collect();
    assert_eq!(commands, ["synthgen", "rank", "train", "eval"]);
    assert!(log.iter().all(|l| l["exit"] == 0));
    assert_eq!(log[0]["seed"], 7);
    assert_eq!(log[2]["seed"], 3);
    assert_eq!(log[2]["config_sha256"].as_str().unwrap().len(), 64);

    // same config, same hash
    let (code, _) = swirpad(dir, &train);
    assert_eq!(code, 0);
    let log = log_lines(&dir.join("run.log"));
    assert_eq!(log[2]["config_sha256"], log[4]["config_sha256"]);
}

#[test]
fn pipeline_with_fixed_channels() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let data = small_dataset(dir);
    let out = dir.join("run");
    let (code, text) = swirpad(
        dir,
        &[
            "pipeline", "--data", data.to_str().unwrap(), "--protocol", "impersonation", "--model", "mccnn",
            "--channels", "1300-1450", "--preset", "proxy", "--epochs", "1", "--out", out.to_str().unwrap(),
        ],
    );
    assert_eq!(code, 0, "{text}");
    for f in ["ranking.csv", "model.spad", "scores.csv", "metrics.json", "breakdown.csv", "summary.txt"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert!(!out.join("selection.json").exists());
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("impersonation"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = dir.join("x").join("out");
    let out = out.to_str().unwrap();
    let missing = dir.join("nowhere");
    let missing = missing.to_str().unwrap();

    assert_eq!(swirpad(dir, &["--help"]).0, 0);
    assert_eq!(swirpad(dir, &["frobnicate"]).0, 1);
    assert_eq!(swirpad(dir, &["rank", "--data", missing, "--protocol", "everything", "--out", out]).0, 1);
    assert_eq!(swirpad(dir, &["rank", "--out", out]).0, 1);
    assert_eq!(swirpad(dir, &["train", "--data", missing, "--out", out]).0, 1);
    assert_eq!(swirpad(dir, &["train", "--data", missing, "--channels", "1300-1300", "--out", out]).0, 1);
    assert_eq!(swirpad(dir, &["rank", "--data", missing, "--jobs", "0", "--out", out]).0, 1);
    assert_eq!(swirpad(dir, &["rank", "--data", missing, "--out", out]).0, 2);
    assert_eq!(swirpad(dir, &["eval", "--data", missing, "--model-file", missing, "--out", out]).0, 2);

    let bad_cfg = dir.join("bad.json");
    fs::write(&bad_cfg, r#"{"wavelengths": []}"#).unwrap();
    let (code, text) = swirpad(dir, &["synthgen", "--config", bad_cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(code, 1, "{text}");

    // usage errors land in ./run.log, the others next to --out
    let usage = log_lines(&dir.join("run.log"));
    assert_eq!(usage.len(), 2);
    assert!(usage.iter().all(|l| l["command"] == "usage" && l["exit"] == 1));
    let runs = log_lines(&dir.join("x").join("run.log"));
    assert_eq!(runs.len(), 7);
    assert_eq!(runs.iter().filter(|l| l["exit"] == 2).count(), 2);
}
