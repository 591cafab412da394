//! End-to-end tests of the `optm` binary: flag contracts, exit codes,
//! output files, and determinism.

use std::path::Path;
use std::process::{Command, Output};

fn optm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_optm"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn generate_writes_valid_csv_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "generate",
        "--regime",
        "random_walk",
        "--events",
        "10000",
        "--seed",
        "7",
        "--out",
        "lob.csv",
    ];
    let first = optm(&args, dir.path());
    assert!(first.status.success(), "{}", stdout(&first));
    let bytes_a = std::fs::read(dir.path().join("lob.csv")).unwrap();
    assert_eq!(bytes_a.iter().filter(|&&b| b == b'\n').count(), 10_001); // header + rows

    // Loading back validates every row against the book invariants.
    let loaded = optm_core::lob::load_csv(dir.path().join("lob.csv")).unwrap();
    assert_eq!(loaded.len(), 10_000);

    let second = optm(&args, dir.path());
    assert!(second.status.success());
    let bytes_b = std::fs::read(dir.path().join("lob.csv")).unwrap();
    assert_eq!(bytes_a, bytes_b);
}

#[test]
fn generate_rejects_single_event() {
    let dir = tempfile::tempdir().unwrap();
    let output = optm(
        &["generate", "--events", "1", "--out", "tiny.csv"],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(2));
    assert!(!dir.path().join("tiny.csv").exists());
}

#[test]
fn benchmark_produces_one_record_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let output = optm(
        &[
            "benchmark",
            "--models",
            "optm,lstm,gru,persistence,naive",
            "--sizes",
            "200,400",
            "--test-len",
            "100",
            "--synthetic",
            "random_walk",
            "--regime",
            "short",
            "--seed",
            "11",
            "--jobs",
            "2",
            "--out",
            "results",
        ],
        dir.path(),
    );
    assert!(output.status.success(), "{}", stdout(&output));

    let results = std::fs::read_to_string(dir.path().join("results/results.jsonl")).unwrap();
    let records: Vec<serde_json::Value> = results
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 10);
    // Short regime omits the early-stop fields.
    assert!(records.iter().all(|r| r.get("epochs_run").is_none()));
    assert!(dir.path().join("results/table.txt").exists());
    assert!(dir.path().join("results/config.json").exists());
}

#[test]
fn benchmark_long_regime_adds_early_stop_fields() {
    let dir = tempfile::tempdir().unwrap();
    let output = optm(
        &[
            "benchmark",
            "--models",
            "persistence,naive",
            "--sizes",
            "100",
            "--test-len",
            "50",
            "--synthetic",
            "mean_revert",
            "--regime",
            "long",
            "--out",
            "results",
        ],
        dir.path(),
    );
    assert!(output.status.success(), "{}", stdout(&output));
    let results = std::fs::read_to_string(dir.path().join("results/results.jsonl")).unwrap();
    for line in results.lines() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(record.get("epochs_run").is_some(), "{record}");
        assert!(record.get("stopped_early").is_some(), "{record}");
    }
}

#[test]
fn benchmark_missing_data_file_exits_without_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let output = optm(
        &[
            "benchmark",
            "--models",
            "persistence",
            "--sizes",
            "100",
            "--data",
            "no_such_file.csv",
            "--out",
            "results",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("no_such_file.csv"), "{stderr}");
    assert!(!dir.path().join("results").exists());
}

#[test]
fn benchmark_is_deterministic_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str| {
        let output = optm(
            &[
                "benchmark",
                "--models",
                "optm,persistence",
                "--sizes",
                "150,300",
                "--test-len",
                "80",
                "--synthetic",
                "trend",
                "--seed",
                "21",
                "--jobs",
                "4",
                "--out",
                out,
            ],
            dir.path(),
        );
        assert!(output.status.success(), "{}", stdout(&output));
        (
            std::fs::read(dir.path().join(out).join("results.jsonl")).unwrap(),
            std::fs::read(dir.path().join(out).join("table.txt")).unwrap(),
        )
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn benchmark_flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bench.json"),
        r#"{"models": "persistence", "sizes": "100", "test_len": 40, "synthetic": "random_walk", "out": "from_file"}"#,
    )
    .unwrap();
    let output = optm(
        &["benchmark", "--config", "bench.json", "--out", "from_flag"],
        dir.path(),
    );
    assert!(output.status.success(), "{}", stdout(&output));
    assert!(dir.path().join("from_flag/results.jsonl").exists());
    assert!(!dir.path().join("from_file").exists());
}

#[test]
fn train_then_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let train = optm(
        &[
            "train",
            "--model",
            "optm",
            "--synthetic",
            "trend",
            "--events",
            "500",
            "--train-size",
            "400",
            "--seed",
            "3",
            "--out",
            "model.json",
        ],
        dir.path(),
    );
    assert!(train.status.success(), "{}", stdout(&train));

    let evaluate = optm(
        &[
            "evaluate",
            "--checkpoint",
            "model.json",
            "--synthetic",
            "trend",
            "--events",
            "500",
            "--test-len",
            "99",
            "--seed",
            "3",
        ],
        dir.path(),
    );
    assert!(evaluate.status.success(), "{}", stdout(&evaluate));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&evaluate)).unwrap();
    assert_eq!(summary["model"], "optm_lstm");
    assert!(summary["test_mse"].as_f64().unwrap().is_finite());
    assert_eq!(
        summary["selection_counts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_u64().unwrap())
            .sum::<u64>(),
        99
    );
}

#[test]
fn gradcheck_passes_fails_and_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let clean = optm(&["gradcheck", "--seed", "1"], dir.path());
    assert!(clean.status.success(), "{}", stdout(&clean));
    assert!(stdout(&clean).contains("gradcheck PASS"));

    let again = optm(&["gradcheck", "--seed", "1"], dir.path());
    assert_eq!(stdout(&clean), stdout(&again));

    let broken = optm(
        &["gradcheck", "--seed", "1", "--perturb", "0.1"],
        dir.path(),
    );
    assert_eq!(broken.status.code(), Some(1));
    assert!(stdout(&broken).contains("gradcheck FAIL"));
}
