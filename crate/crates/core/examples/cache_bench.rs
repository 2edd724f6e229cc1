//! Time grounding with no cache, a cold cache and a warm cache.

use ncli_ground::cli::{bench, default_bench_heads, RunConfig};
use ncli_ground::dataset::synth_corpus;

fn main() -> ncli_ground::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let corpus = dir.path().join("corpus.jsonl");
    synth_corpus(7, 200, 3).write_jsonl(&corpus)?;
    let config = RunConfig {
        cache_dir: Some(dir.path().join("cache")),
        ..RunConfig::new(&corpus)
    };
    let summary = bench(&config, &default_bench_heads())?;
    for r in &summary.reports {
        println!(
            "{:<9} {:>8.1} ms  candidate calls {:>5}  utterance calls {:>4}",
            format!("{:?}", r.variant),
            r.wall_time_us as f64 / 1e3,
            r.candidate_provider_calls,
            r.utterance_provider_calls
        );
    }
    println!(
        "warm speedup {:.2}x, outputs identical: {}",
        summary.warm_speedup_vs_no_cache, summary.outputs_identical
    );
    Ok(())
}
