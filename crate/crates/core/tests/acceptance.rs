//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use ncli_ground::cli::{self, RunConfig, DEFAULT_SWEEP_GRID};
use ncli_ground::dataset::synth_corpus;
use ncli_ground::embedstore::TokenMatrix;
use ncli_ground::grounding::{
    extract_features, ground_turn, head_gradients, kg_loss, pg_loss, GroundingHead,
    GroundingLabels, LossWeights, Task,
};
use ncli_ground::metrics::{bleu_avg, perplexity, rouge_l, rouge_n, unigram_f1};
use ncli_ground::ncli::{ncli, ncolbert, Source};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn random_list(rng: &mut TestRng) -> Vec<TokenMatrix> {
    (0..rng.int(1, 6))
        .map(|_| {
            let s = rng.int(1, 12);
            random_matrix(rng, s, 8)
        })
        .collect()
}

fn ncli_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = TestRng::new(101);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (xs, ys) = (random_list(&mut rng), random_list(&mut rng));
        let sim =
            ncli(&xs, &ys, (Source::Persona, Source::Knowledge)).map_err(|e| e.to_string())?;
        for (i, x) in xs.iter().enumerate() {
            for (j, y) in ys.iter().enumerate() {
                worst = worst.max((sim.get(i, j) - ncolbert_oracle(x, y)).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    check(worst < 1e-9, format!("max deviation {worst:e}"))?;
    check(
        elapsed < Duration::from_secs(5),
        format!("took {elapsed:?}"),
    )?;
    Ok(format!("max deviation {worst:.1e}, {elapsed:.2?}"))
}

fn exact_copy(parts: &[&TokenMatrix], order: Option<&[usize]>) -> TokenMatrix {
    let rows: Vec<&[f32]> = parts.iter().flat_map(|m| m.rows()).collect();
    let order: Vec<usize> = order.map_or_else(|| (0..rows.len()).collect(), <[usize]>::to_vec);
    let data = order.iter().flat_map(|&i| rows[i].to_vec()).collect();
    let tokens = order.iter().map(|i| format!("t{i}")).collect();
    TokenMatrix::from_unit_rows(0, tokens, parts[0].dim(), data).unwrap()
}

fn normalization_invariance() -> Outcome {
    let mut rng = TestRng::new(102);
    let mut worst_dup = 0.0f64;
    for _ in 0..100 {
        let (sx, sy) = (rng.int(1, 12), rng.int(1, 12));
        let x = random_matrix(&mut rng, sx, 8);
        let y = random_matrix(&mut rng, sy, 8);
        let base = ncolbert(&x, &y).unwrap();

        let tripled = exact_copy(&[&x, &x, &x], None);
        worst_dup = worst_dup.max((ncolbert(&tripled, &y).unwrap() - base).abs());

        let extra = random_matrix(&mut rng, 1, 8);
        let longer = ncolbert(&x, &exact_copy(&[&y, &extra], None)).unwrap();
        check(
            longer >= base,
            format!("appending lowered {base} to {longer}"),
        )?;

        let mut order: Vec<usize> = (0..sx).collect();
        for i in (1..sx).rev() {
            order.swap(i, rng.int(0, i));
        }
        let px = exact_copy(&[&x], Some(&order));
        let mut order: Vec<usize> = (0..sy).collect();
        for i in (1..sy).rev() {
            order.swap(i, rng.int(0, i));
        }
        let py = exact_copy(&[&y], Some(&order));
        let permuted = ncolbert(&px, &py).unwrap();
        check(
            permuted.to_bits() == base.to_bits(),
            format!("permutation moved {base} to {permuted}"),
        )?;
    }
    check(
        worst_dup < 1e-9,
        format!("duplication moved score by {worst_dup:e}"),
    )?;
    Ok(format!(
        "duplication drift {worst_dup:.1e}, append monotone, permutations exact"
    ))
}

fn asymmetry_witness() -> Outcome {
    let single = basis(8, &[0]);
    let pair = basis(8, &[0, 1]);
    let (forward, backward) = (
        ncolbert(&single, &pair).unwrap(),
        ncolbert(&pair, &single).unwrap(),
    );
    check(
        (forward - 1.0).abs() < 1e-9 && (backward - 0.5).abs() < 1e-9,
        format!("{forward} / {backward}"),
    )?;
    Ok(format!("{forward} and {backward}"))
}

fn gradient_check() -> Outcome {
    let mut rng = TestRng::new(104);
    let mut worst = 0.0f64;
    for task in [Task::PersonaGrounding, Task::KnowledgeGrounding] {
        for _ in 0..50 {
            let n = rng.int(2, 8);
            let cross: Vec<f64> = (0..n).map(|_| rng.range(-1.0, 1.0)).collect();
            let utt: Vec<f64> = (0..n).map(|_| rng.range(-1.0, 1.0)).collect();
            let w = [
                rng.range(-3.0, 3.0),
                rng.range(-3.0, 3.0),
                rng.range(-2.0, 2.0),
            ];
            let head = GroundingHead::new(task, w[0], w[1], w[2]);
            let (analytic, numeric) = match task {
                Task::PersonaGrounding => {
                    let labels: Vec<bool> = (0..n).map(|_| rng.unit() < 0.5).collect();
                    let g = head_gradients(&head, &cross, &utt, GroundingLabels::Persona(&labels))
                        .unwrap();
                    (
                        g,
                        central_diff(|w| pg_loss_oracle(w, &cross, &utt, &labels), w, 1e-5),
                    )
                }
                Task::KnowledgeGrounding => {
                    let label = rng.int(0, n - 1);
                    let g = head_gradients(&head, &cross, &utt, GroundingLabels::Knowledge(label))
                        .unwrap();
                    (
                        g,
                        central_diff(|w| kg_loss_oracle(w, &cross, &utt, label), w, 1e-5),
                    )
                }
            };
            for (a, b) in [analytic.dw1, analytic.dw2, analytic.dbias]
                .into_iter()
                .zip(numeric)
            {
                worst = worst.max(rel_err(a, b));
            }
        }
    }
    check(worst < 1e-4, format!("max relative error {worst:e}"))?;
    Ok(format!(
        "100 configurations, max relative error {worst:.1e}"
    ))
}

fn initialization_losses() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    let corpus = synth_corpus(7, 200, 3);
    corpus.write_jsonl(&path).unwrap();
    let embedder = RunConfig::new(&path)
        .embedder()
        .map_err(|e| e.to_string())?;
    let features =
        extract_features(&corpus, &embedder, cli::DEFAULT_MAX_TOKENS).map_err(|e| e.to_string())?;
    let pg = GroundingHead::zeros(Task::PersonaGrounding);
    let kg = GroundingHead::zeros(Task::KnowledgeGrounding);
    let mut worst = 0.0f64;
    for (turn, f) in corpus.turns.iter().zip(&features) {
        let out = ground_turn(&pg, &kg, f).unwrap();
        let n_k = out.knowledge_probs.len() as f64;
        worst = worst
            .max((kg_loss(&out.knowledge_probs, turn.knowledge_label).unwrap() - n_k.ln()).abs());
        worst = worst
            .max((pg_loss(&out.persona_probs, &turn.persona_labels).unwrap() - 2f64.ln()).abs());
    }
    check(worst < 1e-9, format!("max deviation {worst:e}"))?;
    Ok(format!(
        "{} turns, max deviation {worst:.1e}",
        corpus.turns.len()
    ))
}

fn desk_scale_learning() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    let corpus = synth_corpus(7, 200, 3);
    corpus.write_jsonl(&path).unwrap();
    let config = RunConfig {
        weights: LossWeights::new(6.0, 2.0, 2.0),
        learning_rate: 0.1,
        epochs: 50,
        ..RunConfig::new(&path)
    };
    let summary = cli::train(&config).map_err(|e| e.to_string())?;
    let grounded = cli::ground(&config, &summary.heads, false).map_err(|e| e.to_string())?;
    let report = cli::eval(&corpus, &grounded, None).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mut losses = summary.loss_history.clone();
    losses.push(summary.final_loss);
    let decreasing = losses.windows(2).all(|w| w[1] < w[0]);
    check(
        report.kg_accuracy >= 95.0,
        format!("KG accuracy {:.2}%", report.kg_accuracy),
    )?;
    check(
        decreasing,
        format!("loss not strictly decreasing: {losses:?}"),
    )?;
    check(
        elapsed < Duration::from_secs(60),
        format!("took {elapsed:?}"),
    )?;
    Ok(format!(
        "KG {:.2}%, loss {:.4} -> {:.4}, {elapsed:.2?}",
        report.kg_accuracy, losses[0], summary.final_loss
    ))
}

fn cache_soundness() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    synth_corpus(7, 200, 3).write_jsonl(&path).unwrap();
    let config = RunConfig {
        cache_dir: Some(dir.path().join("cache")),
        ..RunConfig::new(&path)
    };
    let summary = cli::bench(&config, &cli::default_bench_heads()).map_err(|e| e.to_string())?;
    let [no_cache, cold, warm] = &summary.reports[..] else {
        return Err("expected three reports".into());
    };
    check(summary.outputs_identical, "outputs differ")?;
    check(
        warm.candidate_provider_calls == 0,
        format!(
            "warm made {} candidate calls",
            warm.candidate_provider_calls
        ),
    )?;
    check(
        warm.wall_time_us < no_cache.wall_time_us,
        format!(
            "warm {}us vs no-cache {}us",
            warm.wall_time_us, no_cache.wall_time_us
        ),
    )?;
    Ok(format!(
        "candidate calls {}/{}/{}, warm {:.1}ms vs no-cache {:.1}ms",
        no_cache.candidate_provider_calls,
        cold.candidate_provider_calls,
        warm.candidate_provider_calls,
        warm.wall_time_us as f64 / 1e3,
        no_cache.wall_time_us as f64 / 1e3
    ))
}

fn metric_oracles() -> Outcome {
    let mut rng = TestRng::new(108);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (h, r) = (random_sentence(&mut rng, 14), random_sentence(&mut rng, 14));
        let nlls: Vec<f64> = (0..rng.int(1, 20)).map(|_| rng.range(0.0, 5.0)).collect();
        for (got, want) in [
            (rouge_n(&h, &r, 1), rouge_n_oracle(&h, &r, 1)),
            (rouge_n(&h, &r, 2), rouge_n_oracle(&h, &r, 2)),
            (rouge_l(&h, &r), rouge_l_oracle(&h, &r)),
            (bleu_avg(&h, &r), bleu_avg_oracle(&h, &r)),
            (unigram_f1(&h, &r), unigram_f1_oracle(&h, &r)),
            (perplexity(&nlls).unwrap(), perplexity_oracle(&nlls)),
        ] {
            worst = worst.max((got - want).abs());
        }
    }
    check(worst < 1e-9, format!("max deviation {worst:e}"))?;
    check(
        rouge_n("the cat", "the cat sat", 1) == 0.8,
        "ROUGE-1 worked example",
    )?;
    check(
        unigram_f1("the cat", "the cat sat") == 0.8,
        "F1 worked example",
    )?;
    check(
        perplexity(&[2f64.ln(), 8f64.ln()]).unwrap() == 4.0,
        "perplexity worked example",
    )?;
    Ok(format!("max deviation {worst:.1e}, worked examples exact"))
}

fn sweep_constraint() -> Outcome {
    for w in DEFAULT_SWEEP_GRID {
        w.validate_for_sweep().map_err(|e| e.to_string())?;
    }
    check(
        LossWeights::new(1.0, 1.0, 9.0)
            .validate_for_sweep()
            .is_err(),
        "(1,1,9) accepted",
    )?;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    synth_corpus(7, 40, 3).write_jsonl(&path).unwrap();
    let config = RunConfig::new(&path);
    let run = || cli::sweep(&config, &DEFAULT_SWEEP_GRID, None).map(|rows| cli::to_json(&rows));
    let (a, b) = (
        run().map_err(|e| e.to_string())?,
        run().map_err(|e| e.to_string())?,
    );
    check(a == b, "sweep output differs between runs")?;
    Ok(format!(
        "6 grid points accepted, (1,1,9) rejected, {} identical bytes",
        a.len()
    ))
}

fn run_bin(args: &[&str], dir: &Path) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ncli-ground"))
        .args(args)
        .current_dir(dir)
        .env_remove("NCLI_CACHE_DIR")
        .output()
        .map_err(|e| e.to_string())?;
    check(
        out.status.success(),
        format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)),
    )?;
    Ok(out.stdout)
}

fn end_to_end_once(dir: &Path) -> Result<Vec<Vec<u8>>, String> {
    synth_corpus(7, 60, 3)
        .write_jsonl(dir.join("corpus.jsonl"))
        .unwrap();
    let train = run_bin(
        &["train", "--corpus", "corpus.jsonl", "--out", "heads.json"],
        dir,
    )?;
    run_bin(
        &[
            "ground",
            "--corpus",
            "corpus.jsonl",
            "--heads",
            "heads.json",
            "--out",
            "grounded.jsonl",
        ],
        dir,
    )?;
    let eval = run_bin(
        &[
            "eval",
            "--grounded",
            "grounded.jsonl",
            "--corpus",
            "corpus.jsonl",
        ],
        dir,
    )?;
    let mut outputs = vec![train, eval];
    for name in ["heads.json", "grounded.jsonl"] {
        outputs.push(std::fs::read(dir.join(name)).map_err(|e| e.to_string())?);
    }
    Ok(outputs)
}

fn end_to_end_determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (first, second) = (end_to_end_once(a.path())?, end_to_end_once(b.path())?);
    check(first == second, "outputs differ between runs")?;
    let bytes: usize = first.iter().map(Vec::len).sum();
    Ok(format!(
        "train/ground/eval outputs identical ({bytes} bytes)"
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("ncli oracle equivalence", ncli_oracle_equivalence),
        ("normalization invariance", normalization_invariance),
        ("asymmetry witness", asymmetry_witness),
        ("gradient check", gradient_check),
        ("initialization losses", initialization_losses),
        ("desk-scale grounding learning", desk_scale_learning),
        ("cache soundness", cache_soundness),
        ("metric oracles", metric_oracles),
        ("sweep constraint", sweep_constraint),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    let mut failed = 0;
    for (name, criterion) in criteria {
        let outcome = std::panic::catch_unwind(criterion).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {name}: {reason}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
