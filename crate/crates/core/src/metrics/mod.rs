//! Response-quality and grounding metrics.
//!
//! Text metrics compare engine-tokenizer tokens and return values in [0, 1].
//! ROUGE variants are F-measures. `bleu_avg` is the mean of sentence-level
//! BLEU-1 through BLEU-4, each with add-one smoothed n-gram precisions
//! `(matches + 1) / (hyp_ngrams + 1)` and brevity penalty `exp(1 - r/h)`
//! when the hypothesis is shorter than the reference. It is not comparable
//! to corpus-level BLEU figures computed elsewhere.

mod accuracy;
mod report;

pub use accuracy::{grounding_accuracies, GroundingAccuracies};
pub use report::{evaluate, EvalReport};

use std::collections::HashMap;

use crate::embedstore::tokenize;
use crate::error::{Error, Result};

/// `exp(mean(nlls))` with NLLs in nats.
pub fn perplexity(token_nlls: &[f64]) -> Result<f64> {
    if token_nlls.is_empty() {
        return Err(Error::EmptyInput("perplexity needs at least one token NLL"));
    }
    Ok((token_nlls.iter().sum::<f64>() / token_nlls.len() as f64).exp())
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram matches and the n-gram totals of both sides.
fn clipped_overlap(hyp: &[String], reference: &[String], n: usize) -> (usize, usize, usize) {
    let hyp_counts = ngram_counts(hyp, n);
    let ref_counts = ngram_counts(reference, n);
    let overlap = hyp_counts
        .iter()
        .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    (
        overlap,
        hyp.len().saturating_sub(n - 1),
        reference.len().saturating_sub(n - 1),
    )
}

fn f_measure(matches: usize, hyp_total: usize, ref_total: usize) -> f64 {
    if matches == 0 || hyp_total == 0 || ref_total == 0 {
        return 0.0;
    }
    let p = matches as f64 / hyp_total as f64;
    let r = matches as f64 / ref_total as f64;
    2.0 * p * r / (p + r)
}

pub fn rouge_n(hypothesis: &str, reference: &str, n: usize) -> f64 {
    let (h, r) = (tokenize(hypothesis), tokenize(reference));
    if n == 0 {
        return 0.0;
    }
    let (m, ht, rt) = clipped_overlap(&h, &r, n);
    f_measure(m, ht, rt)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l(hypothesis: &str, reference: &str) -> f64 {
    let (h, r) = (tokenize(hypothesis), tokenize(reference));
    f_measure(lcs_len(&h, &r), h.len(), r.len())
}

pub fn unigram_f1(hypothesis: &str, reference: &str) -> f64 {
    let (h, r) = (tokenize(hypothesis), tokenize(reference));
    let (m, ht, rt) = clipped_overlap(&h, &r, 1);
    f_measure(m, ht, rt)
}

pub const BLEU_MAX_ORDER: usize = 4;

pub fn bleu_avg(hypothesis: &str, reference: &str) -> f64 {
    let (h, r) = (tokenize(hypothesis), tokenize(reference));
    if h.is_empty() {
        return 0.0;
    }
    let brevity = if h.len() < r.len() {
        (1.0 - r.len() as f64 / h.len() as f64).exp()
    } else {
        1.0
    };
    let mut log_precision_sum = 0.0;
    let mut total = 0.0;
    for n in 1..=BLEU_MAX_ORDER {
        let (m, ht, _) = clipped_overlap(&h, &r, n);
        log_precision_sum += ((m as f64 + 1.0) / (ht as f64 + 1.0)).ln();
        total += brevity * (log_precision_sum / n as f64).exp();
    }
    total / BLEU_MAX_ORDER as f64
}
