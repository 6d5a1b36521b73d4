use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use grounding_core::corpus::{from_jsonl, to_jsonl};
use grounding_core::model::ModelFile;
use grounding_core::synth;
use grounding_core::world::{read_worlds_jsonl, validate_world};

fn grounding(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grounding"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = grounding(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn generate_writes_one_world_per_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(
        dir.path(),
        &[
            "generate",
            "--num-shared",
            "5",
            "--count",
            "3",
            "--seed",
            "7",
        ],
    );
    let worlds = read_worlds_jsonl(&out).unwrap();
    assert_eq!(out.lines().count(), 3);
    assert!(worlds
        .iter()
        .all(|w| w.num_shared == 5 && validate_world(w).is_empty()));
    assert_eq!(
        out,
        ok(
            dir.path(),
            &[
                "generate",
                "--num-shared",
                "5",
                "--count",
                "3",
                "--seed",
                "7"
            ]
        )
    );
    assert_ne!(
        out,
        ok(
            dir.path(),
            &[
                "generate",
                "--num-shared",
                "5",
                "--count",
                "3",
                "--seed",
                "8"
            ]
        )
    );
}

#[test]
fn bad_usage_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = grounding(dir.path(), &["generate", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(
        grounding(dir.path(), &["frobnicate"]).status.code(),
        Some(2)
    );
    assert_eq!(
        grounding(
            dir.path(),
            &["train", "--variant", "big", "--data", ".", "--out", "m"]
        )
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn runtime_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = grounding(dir.path(), &["generate", "--num-shared", "9"]);
    assert_eq!(out.status.code(), Some(1));
    let out = grounding(
        dir.path(),
        &["analyze", "--in", "missing.jsonl", "--report", "r.json"],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn analyze_empty_file_reports_zeros() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    ok(
        dir.path(),
        &[
            "--json",
            "analyze",
            "--in",
            "empty.jsonl",
            "--report",
            "report.json",
        ],
    );
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(r["stats"]["overall"]["dialogues"], 0);
    assert_eq!(r["bias"]["selections"], 0);
    assert_eq!(r["nuance"]["utterances"], 0);
}

#[test]
fn config_file_fills_unset_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "seed = 7\n[generate]\ncount = 2\nnum-shared = 4\n",
    )
    .unwrap();
    let from_config = ok(dir.path(), &["--config", "c.toml", "generate"]);
    let explicit = ok(
        dir.path(),
        &[
            "generate",
            "--seed",
            "7",
            "--count",
            "2",
            "--num-shared",
            "4",
        ],
    );
    assert_eq!(from_config, explicit);
    let overridden = ok(
        dir.path(),
        &["--config", "c.toml", "generate", "--count", "1"],
    );
    assert_eq!(overridden.lines().count(), 1);
    assert_eq!(overridden.lines().next(), explicit.lines().next());

    std::fs::write(dir.path().join("bad.toml"), "[generate]\ncolour = 1\n").unwrap();
    assert_eq!(
        grounding(dir.path(), &["--config", "bad.toml", "generate"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn corpus_pipeline_trains_and_evaluates_within_a_minute() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("all.jsonl"), to_jsonl(&synth::corpus(50, 4))).unwrap();
    ok(
        p,
        &["split", "--in", "all.jsonl", "--out", "data", "--seed", "1"],
    );
    ok(
        p,
        &[
            "vocab",
            "--in",
            "data/train.jsonl",
            "--out",
            "data/vocab.json",
            "--min-count",
            "2",
        ],
    );
    let train = from_jsonl(&std::fs::read_to_string(p.join("data/train.jsonl")).unwrap()).unwrap();
    assert_eq!(train.len(), 40);

    let start = Instant::now();
    ok(
        p,
        &[
            "train",
            "--variant",
            "context-mlp",
            "--data",
            "data",
            "--out",
            "models/a.json",
            "--seed",
            "3",
        ],
    );
    assert!(
        start.elapsed() < Duration::from_secs(60),
        "{:?}",
        start.elapsed()
    );
    let m = ModelFile::load(&p.join("models/a.json")).unwrap();
    assert_eq!(m.config.epochs, 30);
    assert_eq!(m.log.len(), 30);

    ok(
        p,
        &[
            "train",
            "--variant",
            "context-mlp",
            "--data",
            "data",
            "--out",
            "again/a.json",
            "--seed",
            "3",
        ],
    );
    assert_eq!(ModelFile::load(&p.join("again/a.json")).unwrap(), m);

    let out = ok(
        p,
        &[
            "--json",
            "eval",
            "--models",
            "models",
            "--data",
            "data",
            "--report",
            "eval.json",
        ],
    );
    let r: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(r["full_size"], 10);
    assert_eq!(r["uncorrelated_size"], 5);
}

#[test]
fn selfcheck_small_run_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(
        dir.path(),
        &[
            "selfcheck",
            "--worlds-per-k",
            "100",
            "--logs",
            "100",
            "--baseline-dialogues",
            "3000",
        ],
    );
    assert_eq!(
        out.lines().filter(|l| l.starts_with("PASS")).count(),
        5,
        "{out}"
    );
}
