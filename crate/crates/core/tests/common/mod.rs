//! Independent reference implementations shared by the integration tests.
//! These are written for clarity, not speed, and avoid the library's code
//! paths on purpose.
#![allow(dead_code)]

use ncli_ground::embedstore::TokenMatrix;

/// Small splittable generator so test inputs do not depend on the crate's RNG.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(seed ^ 0x5851_f42d_4c95_7f2d)
    }

    pub fn next_u64(&mut self) -> u64 {
        // SplitMix64.
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform in `lo..=hi`.
    pub fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.next_u64() % (hi - lo + 1) as u64) as usize
    }
}

/// A token matrix with `s` random unit rows of width `d0`.
pub fn random_matrix(rng: &mut TestRng, s: usize, d0: usize) -> TokenMatrix {
    let rows: Vec<Vec<f64>> = (0..s)
        .map(|_| (0..d0).map(|_| rng.range(-1.0, 1.0)).collect())
        .collect();
    TokenMatrix::normalized((0..s).map(|i| format!("t{i}")).collect(), &rows).unwrap()
}

pub fn basis(d0: usize, axes: &[usize]) -> TokenMatrix {
    let rows: Vec<Vec<f64>> = axes
        .iter()
        .map(|&a| (0..d0).map(|i| if i == a { 1.0 } else { 0.0 }).collect())
        .collect();
    TokenMatrix::normalized(axes.iter().map(|a| format!("e{a}")).collect(), &rows).unwrap()
}

/// Nested-loop late-interaction score, summed in row order.
pub fn ncolbert_oracle(x: &TokenMatrix, y: &TokenMatrix) -> f64 {
    let mut total = 0.0;
    for i in 0..x.len() {
        let mut best = f64::NEG_INFINITY;
        for j in 0..y.len() {
            let mut dot = 0.0;
            for k in 0..x.dim() {
                dot += f64::from(x.row(i)[k]) * f64::from(y.row(j)[k]);
            }
            if dot > best {
                best = dot;
            }
        }
        total += best;
    }
    total / x.len() as f64
}

fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn count_grams(tokens: &[&str], n: usize) -> Vec<(Vec<String>, usize)> {
    let mut out: Vec<(Vec<String>, usize)> = Vec::new();
    if tokens.len() < n {
        return out;
    }
    for start in 0..=tokens.len() - n {
        let gram: Vec<String> = tokens[start..start + n]
            .iter()
            .map(|t| t.to_string())
            .collect();
        match out.iter_mut().find(|(g, _)| *g == gram) {
            Some((_, c)) => *c += 1,
            None => out.push((gram, 1)),
        }
    }
    out
}

fn clipped(h: &[&str], r: &[&str], n: usize) -> (f64, f64, f64) {
    let hc = count_grams(h, n);
    let rc = count_grams(r, n);
    let mut m = 0;
    for (g, c) in &hc {
        let rcount = rc.iter().find(|(rg, _)| rg == g).map_or(0, |(_, c)| *c);
        m += (*c).min(rcount);
    }
    let total = |v: &[(Vec<String>, usize)]| v.iter().map(|(_, c)| *c).sum::<usize>() as f64;
    (m as f64, total(&hc), total(&rc))
}

fn f1_of(m: f64, h: f64, r: f64) -> f64 {
    if m == 0.0 {
        return 0.0;
    }
    let (p, rec) = (m / h, m / r);
    2.0 * p * rec / (p + rec)
}

/// Oracles below take lowercase whitespace-separated text.
pub fn rouge_n_oracle(hyp: &str, reference: &str, n: usize) -> f64 {
    let (m, h, r) = clipped(&words(hyp), &words(reference), n);
    f1_of(m, h, r)
}

pub fn unigram_f1_oracle(hyp: &str, reference: &str) -> f64 {
    rouge_n_oracle(hyp, reference, 1)
}

pub fn rouge_l_oracle(hyp: &str, reference: &str) -> f64 {
    let (h, r) = (words(hyp), words(reference));
    // Full table, 1-based.
    let mut t = vec![vec![0usize; r.len() + 1]; h.len() + 1];
    for i in 1..=h.len() {
        for j in 1..=r.len() {
            t[i][j] = if h[i - 1] == r[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    f1_of(t[h.len()][r.len()] as f64, h.len() as f64, r.len() as f64)
}

pub fn bleu_avg_oracle(hyp: &str, reference: &str) -> f64 {
    let (h, r) = (words(hyp), words(reference));
    if h.is_empty() {
        return 0.0;
    }
    let bp = if h.len() < r.len() {
        (1.0 - r.len() as f64 / h.len() as f64).exp()
    } else {
        1.0
    };
    let precisions: Vec<f64> = (1..=4)
        .map(|n| {
            let (m, ht, _) = clipped(&h, &r, n);
            (m + 1.0) / (ht + 1.0)
        })
        .collect();
    let mut sum = 0.0;
    for n in 1..=4 {
        let geo: f64 = precisions[..n].iter().product::<f64>().powf(1.0 / n as f64);
        sum += bp * geo;
    }
    sum / 4.0
}

pub fn perplexity_oracle(nlls: &[f64]) -> f64 {
    (nlls.iter().sum::<f64>() / nlls.len() as f64).exp()
}

/// Random lowercase sentence over a small vocabulary so overlaps are common.
pub fn random_sentence(rng: &mut TestRng, max_len: usize) -> String {
    const VOCAB: [&str; 12] = [
        "the", "cat", "sat", "on", "mat", "a", "dog", "ran", "to", "park", "i", "like",
    ];
    let len = rng.int(1, max_len);
    (0..len)
        .map(|_| VOCAB[rng.int(0, VOCAB.len() - 1)])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Head losses written directly from their definitions, for finite differences.
pub fn pg_loss_oracle(w: [f64; 3], cross: &[f64], utt: &[f64], labels: &[bool]) -> f64 {
    let mut total = 0.0;
    for i in 0..cross.len() {
        let z = w[0] * cross[i] + w[1] * utt[i] + w[2];
        let p = 1.0 / (1.0 + (-z).exp());
        total += if labels[i] { -p.ln() } else { -(1.0 - p).ln() };
    }
    total / cross.len() as f64
}

pub fn kg_loss_oracle(w: [f64; 3], cross: &[f64], utt: &[f64], label: usize) -> f64 {
    let z: Vec<f64> = (0..cross.len())
        .map(|k| w[0] * cross[k] + w[1] * utt[k] + w[2])
        .collect();
    let log_norm = z.iter().map(|v| v.exp()).sum::<f64>().ln();
    log_norm - z[label]
}

/// Central differences of `f` at `w` in each coordinate.
pub fn central_diff(f: impl Fn([f64; 3]) -> f64, w: [f64; 3], h: f64) -> [f64; 3] {
    let mut g = [0.0; 3];
    for (k, gk) in g.iter_mut().enumerate() {
        let (mut plus, mut minus) = (w, w);
        plus[k] += h;
        minus[k] -= h;
        *gk = (f(plus) - f(minus)) / (2.0 * h);
    }
    g
}

/// Relative error with an absolute floor so near-zero gradients compare sanely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}
