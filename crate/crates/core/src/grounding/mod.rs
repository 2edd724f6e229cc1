//! Persona and knowledge grounding heads.
//!
//! Both heads read two similarity features per candidate entry: the mean
//! similarity against the other candidate source and the similarity against
//! the utterance history. Persona grounding applies one shared affine map and
//! a sigmoid per entry and keeps entries strictly above 0.5. Knowledge
//! grounding applies the same form of map followed by a softmax and keeps the
//! single most probable entry (lowest index on ties). The two heads have
//! separate parameters.

mod features;
mod train;

pub use features::{extract_features, ground_turn, turn_sims, TurnFeatures, TurnSims};
pub use train::{fit_heads, train_heads, LmLossProvider, NullLmLoss, TrainOptions, TrainedHeads};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ncli::SimMatrix;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logarithms.
pub const PROB_CLAMP: f64 = 1e-12;

pub const PG_THRESHOLD: f64 = 0.5;

pub const KNOWLEDGE_MARKER: &str = "<knowledge>";
pub const PERSONA_MARKER: &str = "<persona>";
pub const UTTERANCE_MARKER: &str = "<utt>";
pub const EOS_MARKER: &str = "<eos>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "pg")]
    PersonaGrounding,
    #[serde(rename = "kg")]
    KnowledgeGrounding,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundingHead {
    pub w1: f64,
    pub w2: f64,
    pub bias: f64,
    pub task: Task,
}

impl GroundingHead {
    pub fn zeros(task: Task) -> Self {
        Self {
            w1: 0.0,
            w2: 0.0,
            bias: 0.0,
            task,
        }
    }

    pub fn new(task: Task, w1: f64, w2: f64, bias: f64) -> Self {
        Self { w1, w2, bias, task }
    }

    pub fn is_finite(&self) -> bool {
        self.w1.is_finite() && self.w2.is_finite() && self.bias.is_finite()
    }

    fn logits(&self, cross_mean: &[f64], utterance: &[f64]) -> Result<Vec<f64>> {
        if cross_mean.len() != utterance.len() {
            return Err(Error::Shape(format!(
                "feature lengths differ: {} vs {}",
                cross_mean.len(),
                utterance.len()
            )));
        }
        Ok(cross_mean
            .iter()
            .zip(utterance)
            .map(|(a, b)| self.w1 * a + self.w2 * b + self.bias)
            .collect())
    }

    fn expect_task(&self, task: Task) -> Result<()> {
        if self.task != task {
            return Err(Error::InvalidConfig(format!(
                "{:?} head used for {:?}",
                self.task, task
            )));
        }
        Ok(())
    }
}

/// Serialized parameters of one head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub w1: f64,
    pub w2: f64,
    pub bias: f64,
}

/// `heads.json`: `{"pg": {...}, "kg": {...}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadsFile {
    pub pg: HeadParams,
    pub kg: HeadParams,
}

impl HeadsFile {
    pub fn from_heads(pg: &GroundingHead, kg: &GroundingHead) -> Self {
        let params = |h: &GroundingHead| HeadParams {
            w1: h.w1,
            w2: h.w2,
            bias: h.bias,
        };
        Self {
            pg: params(pg),
            kg: params(kg),
        }
    }

    pub fn heads(&self) -> (GroundingHead, GroundingHead) {
        (
            GroundingHead::new(Task::PersonaGrounding, self.pg.w1, self.pg.w2, self.pg.bias),
            GroundingHead::new(
                Task::KnowledgeGrounding,
                self.kg.w1,
                self.kg.w2,
                self.kg.bias,
            ),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// Tolerance on `alpha + beta + gamma = 10` for sweep grids.
pub const SWEEP_SUM: f64 = 10.0;
pub const SWEEP_SUM_TOLERANCE: f64 = 1e-9;

impl LossWeights {
    pub const fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn validate_for_sweep(&self) -> Result<()> {
        self.validate()?;
        let sum = self.alpha + self.beta + self.gamma;
        if (sum - SWEEP_SUM).abs() > SWEEP_SUM_TOLERANCE {
            return Err(Error::InvalidConfig(format!(
                "sweep weights ({}, {}, {}) sum to {sum}, expected {SWEEP_SUM}",
                self.alpha, self.beta, self.gamma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingOutput {
    pub persona_probs: Vec<f64>,
    pub selected_personas: Vec<usize>,
    pub knowledge_probs: Vec<f64>,
    pub selected_knowledge: usize,
}

impl GroundingOutput {
    /// Equality on the exact bit patterns of every probability.
    pub fn bit_identical(&self, other: &Self) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        self.selected_personas == other.selected_personas
            && self.selected_knowledge == other.selected_knowledge
            && bits(&self.persona_probs) == bits(&other.persona_probs)
            && bits(&self.knowledge_probs) == bits(&other.knowledge_probs)
    }
}

/// Row means of a similarity matrix.
pub fn mean_rows(s: &SimMatrix) -> Vec<f64> {
    (0..s.rows)
        .map(|i| s.row(i).iter().sum::<f64>() / s.cols as f64)
        .collect()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn pg_forward(head: &GroundingHead, s_pk_mean: &[f64], s_pu: &[f64]) -> Result<Vec<f64>> {
    head.expect_task(Task::PersonaGrounding)?;
    Ok(head
        .logits(s_pk_mean, s_pu)?
        .into_iter()
        .map(sigmoid)
        .collect())
}

/// Indices with probability strictly above 0.5.
pub fn pg_select(persona_probs: &[f64]) -> Vec<usize> {
    persona_probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > PG_THRESHOLD)
        .map(|(i, _)| i)
        .collect()
}

pub fn kg_forward(head: &GroundingHead, s_kp_mean: &[f64], s_ku: &[f64]) -> Result<Vec<f64>> {
    head.expect_task(Task::KnowledgeGrounding)?;
    if s_ku.is_empty() {
        return Err(Error::EmptyInput("no knowledge entries"));
    }
    Ok(softmax(&head.logits(s_kp_mean, s_ku)?))
}

/// Lowest index attaining the maximum probability.
pub fn kg_select(knowledge_probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in knowledge_probs.iter().enumerate() {
        if p > knowledge_probs[best] {
            best = i;
        }
    }
    best
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn is_clamped(p: f64) -> bool {
    !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p)
}

/// Mean binary cross-entropy over persona entries.
pub fn pg_loss(persona_probs: &[f64], labels: &[bool]) -> Result<f64> {
    if persona_probs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} persona probabilities for {} labels",
            persona_probs.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("no persona entries"));
    }
    let total: f64 = persona_probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = clamp_prob(p);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / labels.len() as f64)
}

/// Cross-entropy of the gold knowledge entry.
pub fn kg_loss(knowledge_probs: &[f64], label: usize) -> Result<f64> {
    let p = knowledge_probs.get(label).ok_or(Error::Index {
        index: label,
        len: knowledge_probs.len(),
    })?;
    Ok(-clamp_prob(*p).ln())
}

pub fn total_loss(weights: &LossWeights, l_kg: f64, l_pg: f64, l_lm: f64) -> f64 {
    weights.alpha * l_kg + weights.beta * l_pg + weights.gamma * l_lm
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HeadGradients {
    pub dw1: f64,
    pub dw2: f64,
    pub dbias: f64,
}

impl HeadGradients {
    fn accumulate(&mut self, dz: f64, cross: f64, utterance: f64) {
        self.dw1 += dz * cross;
        self.dw2 += dz * utterance;
        self.dbias += dz;
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self {
            dw1: self.dw1 * factor,
            dw2: self.dw2 * factor,
            dbias: self.dbias * factor,
        }
    }
}

impl std::ops::Add for HeadGradients {
    type Output = Self;

    fn add(self, other: Self) -> Self {
        Self {
            dw1: self.dw1 + other.dw1,
            dw2: self.dw2 + other.dw2,
            dbias: self.dbias + other.dbias,
        }
    }
}

/// Supervision for one head on one turn.
#[derive(Debug, Clone, Copy)]
pub enum GroundingLabels<'a> {
    Persona(&'a [bool]),
    Knowledge(usize),
}

/// Closed-form gradient of the head's loss (composed with its forward pass)
/// with respect to `w1`, `w2` and `bias`. Entries whose probability hits the
/// clamp contribute nothing, matching the clamped loss.
pub fn head_gradients(
    head: &GroundingHead,
    cross_mean: &[f64],
    utterance: &[f64],
    labels: GroundingLabels<'_>,
) -> Result<HeadGradients> {
    let mut grad = HeadGradients::default();
    match labels {
        GroundingLabels::Persona(labels) => {
            let probs = pg_forward(head, cross_mean, utterance)?;
            if labels.len() != probs.len() {
                return Err(Error::Shape(format!(
                    "{} persona probabilities for {} labels",
                    probs.len(),
                    labels.len()
                )));
            }
            let n = probs.len() as f64;
            for i in 0..probs.len() {
                if is_clamped(probs[i]) {
                    continue;
                }
                let y = if labels[i] { 1.0 } else { 0.0 };
                grad.accumulate((probs[i] - y) / n, cross_mean[i], utterance[i]);
            }
        }
        GroundingLabels::Knowledge(label) => {
            let probs = kg_forward(head, cross_mean, utterance)?;
            if label >= probs.len() {
                return Err(Error::Index {
                    index: label,
                    len: probs.len(),
                });
            }
            if !is_clamped(probs[label]) {
                for k in 0..probs.len() {
                    let y = if k == label { 1.0 } else { 0.0 };
                    grad.accumulate(probs[k] - y, cross_mean[k], utterance[k]);
                }
            }
        }
    }
    Ok(grad)
}

/// `[<knowledge> K̂ (<persona> P̂_i)* (<utt> U_t)* <eos>]`, texts tokenized
/// with the engine tokenizer.
pub fn build_lm_input(
    selected_knowledge: &str,
    selected_personas: &[&str],
    utterance_history: &[String],
) -> Vec<String> {
    use crate::embedstore::tokenize;
    let mut out = vec![KNOWLEDGE_MARKER.to_owned()];
    out.extend(tokenize(selected_knowledge));
    for persona in selected_personas {
        out.push(PERSONA_MARKER.to_owned());
        out.extend(tokenize(persona));
    }
    for utterance in utterance_history {
        out.push(UTTERANCE_MARKER.to_owned());
        out.extend(tokenize(utterance));
    }
    out.push(EOS_MARKER.to_owned());
    out
}
