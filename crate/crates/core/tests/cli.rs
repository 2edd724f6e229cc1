use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ncli_ground::cli::{
    self, bench_corpus, default_bench_heads, parse_grid, sweep, to_json, BenchVariant, RunConfig,
    DEFAULT_SWEEP_GRID,
};
use ncli_ground::dataset::{synth_corpus, CandidateSet, Corpus, DialogTurn};
use ncli_ground::grounding::LossWeights;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ncli-ground"));
    cmd.env_remove("NCLI_CACHE_DIR");
    cmd
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn synth_file(dir: &Path, dialogs: usize) -> PathBuf {
    let path = dir.join("corpus.jsonl");
    synth_corpus(7, dialogs, 3).write_jsonl(&path).unwrap();
    path
}

#[test]
fn sweep_grid_validation() {
    for w in DEFAULT_SWEEP_GRID {
        w.validate_for_sweep().unwrap();
    }
    LossWeights::new(1.0, 1.0, 8.0)
        .validate_for_sweep()
        .unwrap();
    assert!(LossWeights::new(1.0, 1.0, 9.0)
        .validate_for_sweep()
        .is_err());
    assert_eq!(
        parse_grid("2,2,6; 6,2,2").unwrap(),
        vec![DEFAULT_SWEEP_GRID[0], DEFAULT_SWEEP_GRID[5]]
    );
    assert!(parse_grid("1,2").is_err());
    assert!(parse_grid("a,b,c").is_err());
}

#[test]
fn sweep_rejects_bad_point_before_training() {
    let config = RunConfig::new("/does/not/exist.jsonl");
    let err = sweep(
        &config,
        &[DEFAULT_SWEEP_GRID[0], LossWeights::new(1.0, 1.0, 9.0)],
        None,
    )
    .unwrap_err();
    assert!(err.is_validation(), "{err}");
}

#[test]
fn sweep_output_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig {
        epochs: 5,
        dim: 32,
        ..RunConfig::new(synth_file(dir.path(), 20))
    };
    let a = to_json(&sweep(&config, &DEFAULT_SWEEP_GRID, None).unwrap());
    let b = to_json(&sweep(&config, &DEFAULT_SWEEP_GRID, None).unwrap());
    assert_eq!(a, b);
}

/// Two dialogs, five persona and four knowledge entries each, sharing nothing.
fn counting_corpus() -> Corpus {
    let mut corpus = Corpus::default();
    for d in 0..2 {
        let id = format!("dialog{d}");
        corpus.candidates.insert(
            id.clone(),
            CandidateSet {
                persona: (0..5).map(|i| format!("persona {d} {i}")).collect(),
                knowledge: (0..4).map(|i| format!("knowledge {d} {i}")).collect(),
            },
        );
        for t in 0..3 {
            corpus.turns.push(DialogTurn {
                dialog_id: id.clone(),
                turn_index: t,
                utterance_history: (0..=t).map(|u| format!("question {d} {u}")).collect(),
                answer: "ok".into(),
                persona_labels: vec![true, false, false, false, false],
                knowledge_label: 1,
            });
        }
    }
    corpus
}

#[test]
fn bench_counts_provider_calls() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig {
        cache_dir: Some(dir.path().to_path_buf()),
        dim: 32,
        ..RunConfig::new("unused")
    };
    let summary = bench_corpus(&config, &counting_corpus(), &default_bench_heads()).unwrap();
    let calls: Vec<_> = summary
        .reports
        .iter()
        .map(|r| {
            (
                r.variant,
                r.candidate_provider_calls,
                r.utterance_provider_calls,
            )
        })
        .collect();
    // 6 turns x 9 candidates without a cache, 18 unique entries cold, none warm.
    assert_eq!(
        calls,
        [
            (BenchVariant::NoCache, 54, 6),
            (BenchVariant::Cold, 18, 6),
            (BenchVariant::Warm, 0, 6)
        ]
    );
    assert!(summary.outputs_identical);
}

#[test]
fn precompute_then_ground_uses_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_file(dir.path(), 4);
    let config = RunConfig {
        cache_dir: Some(dir.path().join("cache")),
        dim: 32,
        ..RunConfig::new(&corpus)
    };
    let first = cli::precompute(&config).unwrap();
    assert_eq!(first.newly_stored, 40);
    assert_eq!(cli::precompute(&config).unwrap().newly_stored, 0);
    let records = cli::ground(&config, &default_bench_heads(), true).unwrap();
    assert!(records.iter().all(|r| r.sims.is_some()));
    assert_eq!(
        records[0].lm_input.first().map(String::as_str),
        Some("<knowledge>")
    );
    assert_eq!(
        records[0].lm_input.last().map(String::as_str),
        Some("<eos>")
    );
}

#[test]
fn precompute_needs_a_cache_dir() {
    let err = cli::precompute(&RunConfig::new("x.jsonl")).unwrap_err();
    assert!(err.is_validation());
}

/// synth, train, ground, eval through the binary in `dir`.
fn pipeline(dir: &Path) -> Vec<Vec<u8>> {
    let corpus = dir.join("corpus.jsonl");
    let (heads, grounded, report) = (
        dir.join("heads.json"),
        dir.join("grounded.jsonl"),
        dir.join("report.json"),
    );
    run_ok(
        bin()
            .args(["synth", "--dialogs", "25", "--out"])
            .arg(&corpus),
    );
    let train = run_ok(
        bin()
            .args([
                "--dim", "64", "train", "--alpha", "6", "--beta", "2", "--gamma", "2", "--epochs",
                "10", "--corpus",
            ])
            .arg(&corpus)
            .arg("--out")
            .arg(&heads),
    );
    run_ok(
        bin()
            .args(["--dim", "64", "ground", "--corpus"])
            .arg(&corpus)
            .arg("--heads")
            .arg(&heads)
            .arg("--out")
            .arg(&grounded),
    );
    run_ok(
        bin()
            .args(["eval", "--grounded"])
            .arg(&grounded)
            .arg("--corpus")
            .arg(&corpus)
            .arg("--out")
            .arg(&report),
    );
    let mut outputs = vec![train.stdout];
    for path in [&corpus, &heads, &grounded, &report] {
        outputs.push(std::fs::read(path).unwrap());
    }
    outputs
}

#[test]
fn pipeline_is_byte_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (first, second) = (pipeline(a.path()), pipeline(b.path()));
    assert_eq!(first, second);
    let report: serde_json::Value = serde_json::from_slice(&first[4]).unwrap();
    assert!(report["perplexity"].is_null());
    assert_eq!(
        report["turn_count"].as_u64().unwrap() as usize,
        synth_corpus(7, 25, 3).turns.len()
    );
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_file(dir.path(), 2);
    let out = bin()
        .args(["sweep", "--grid", "1,1,9", "--corpus"])
        .arg(&corpus)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin()
        .args(["train", "--lr", "0", "--out", "h.json", "--corpus"])
        .arg(&corpus)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"dialog_id\": 3}\n").unwrap();
    let out = bin().arg("stats").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn internal_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_file(dir.path(), 2);
    let cache = dir.path().join("cache");
    run_ok(
        bin()
            .args(["--dim", "16", "precompute", "--corpus"])
            .arg(&corpus)
            .env("NCLI_CACHE_DIR", &cache),
    );
    for ns in std::fs::read_dir(&cache).unwrap() {
        for file in std::fs::read_dir(ns.unwrap().path()).unwrap() {
            std::fs::write(file.unwrap().path(), b"NCLI\x01").unwrap();
        }
    }
    let heads = dir.path().join("heads.json");
    std::fs::write(&heads, to_json(&default_bench_heads())).unwrap();
    let out = bin()
        .args(["--dim", "16", "ground", "--corpus"])
        .arg(&corpus)
        .arg("--heads")
        .arg(&heads)
        .env("NCLI_CACHE_DIR", &cache)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("corrupt"));
}
