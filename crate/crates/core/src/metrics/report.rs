use serde::{Deserialize, Serialize};

use super::{bleu_avg, grounding_accuracies, perplexity, rouge_l, rouge_n, unigram_f1};
use crate::dataset::DialogTurn;
use crate::error::{Error, Result};
use crate::grounding::GroundingOutput;

/// Corpus-level evaluation. Text metrics are per-turn means in [0, 1], except
/// `bleu_avg`, which is scaled to [0, 100] like the accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub f1: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub bleu_avg: f64,
    pub pg_accuracy: f64,
    pub pg_mtl_accuracy: f64,
    pub kg_accuracy: f64,
    /// `None` when no token NLLs were supplied.
    pub perplexity: Option<f64>,
    pub turn_count: usize,
}

/// `hypotheses[i]` is scored against `turns[i].answer`.
pub fn evaluate(
    hypotheses: &[String],
    turns: &[DialogTurn],
    outputs: &[GroundingOutput],
    token_nlls: Option<&[f64]>,
) -> Result<EvalReport> {
    if hypotheses.len() != turns.len() {
        return Err(Error::Shape(format!(
            "{} hypotheses for {} turns",
            hypotheses.len(),
            turns.len()
        )));
    }
    let acc = grounding_accuracies(outputs, turns)?;
    let n = turns.len();
    let mean = |f: &dyn Fn(&str, &str) -> f64| {
        if n == 0 {
            return 0.0;
        }
        hypotheses
            .iter()
            .zip(turns)
            .map(|(h, t)| f(h, &t.answer))
            .sum::<f64>()
            / n as f64
    };
    Ok(EvalReport {
        f1: mean(&unigram_f1),
        rouge1: mean(&|h, r| rouge_n(h, r, 1)),
        rouge2: mean(&|h, r| rouge_n(h, r, 2)),
        rouge_l: mean(&rouge_l),
        bleu_avg: 100.0 * mean(&bleu_avg),
        pg_accuracy: acc.pg,
        pg_mtl_accuracy: acc.pg_mtl,
        kg_accuracy: acc.kg,
        perplexity: token_nlls.map(perplexity).transpose()?,
        turn_count: n,
    })
}
