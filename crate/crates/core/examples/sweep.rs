//! Search the loss-weight grid on a synthetic split.

use ncli_ground::cli::{sweep, RunConfig, DEFAULT_SWEEP_GRID};
use ncli_ground::dataset::synth_corpus;

fn main() -> ncli_ground::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let (train, valid) = (
        dir.path().join("train.jsonl"),
        dir.path().join("valid.jsonl"),
    );
    synth_corpus(7, 150, 3).write_jsonl(&train)?;
    synth_corpus(8, 50, 3).write_jsonl(&valid)?;

    let rows = sweep(&RunConfig::new(&train), &DEFAULT_SWEEP_GRID, Some(&valid))?;
    println!(
        "{:>5} {:>5} {:>5} {:>9} {:>7} {:>7}",
        "alpha", "beta", "gamma", "loss", "KG%", "PG%"
    );
    for row in rows {
        let w = row.weights;
        println!(
            "{:>5} {:>5} {:>5} {:>9.4} {:>7.2} {:>7.2}",
            w.alpha,
            w.beta,
            w.gamma,
            row.final_loss,
            row.report.kg_accuracy,
            row.report.pg_accuracy
        );
    }
    Ok(())
}
