use super::{
    ground_turn, head_gradients, kg_loss, pg_loss, total_loss, GroundingHead, GroundingLabels,
    GroundingOutput, HeadGradients, LossWeights, Task, TurnFeatures,
};
use crate::dataset::{CandidateSet, Corpus, DialogTurn};
use crate::embedstore::Embedder;
use crate::error::{Error, Result};

/// Per-turn language-model loss. Only the weighted total sees it; it carries
/// no gradient to the grounding heads.
pub trait LmLossProvider {
    fn turn_loss(
        &self,
        turn: &DialogTurn,
        candidates: &CandidateSet,
        output: &GroundingOutput,
    ) -> f64;
}

/// Always 0, so `gamma` has no effect on head training.
pub struct NullLmLoss;

impl LmLossProvider for NullLmLoss {
    fn turn_loss(&self, _: &DialogTurn, _: &CandidateSet, _: &GroundingOutput) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub weights: LossWeights,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedHeads {
    pub pg: GroundingHead,
    pub kg: GroundingHead,
    /// Mean total loss over turns, evaluated at the start of each epoch.
    pub history: Vec<f64>,
    /// Mean total loss after the last update.
    pub final_loss: f64,
}

struct EpochPass {
    loss: f64,
    pg_grad: HeadGradients,
    kg_grad: HeadGradients,
}

fn epoch_pass(
    corpus: &Corpus,
    features: &[TurnFeatures],
    pg: &GroundingHead,
    kg: &GroundingHead,
    weights: &LossWeights,
    lm: &dyn LmLossProvider,
) -> Result<EpochPass> {
    let mut loss_sum = 0.0;
    let mut pg_grad = HeadGradients::default();
    let mut kg_grad = HeadGradients::default();
    for (turn, f) in corpus.turns.iter().zip(features) {
        let output = ground_turn(pg, kg, f)?;
        let l_pg = pg_loss(&output.persona_probs, &turn.persona_labels)?;
        let l_kg = kg_loss(&output.knowledge_probs, turn.knowledge_label)?;
        let l_lm = lm.turn_loss(turn, corpus.candidates_for(turn), &output);
        let loss = total_loss(weights, l_kg, l_pg, l_lm);
        if !loss.is_finite() || !f.is_finite() {
            return Err(Error::NonFiniteLoss {
                dialog_id: turn.dialog_id.clone(),
                turn_index: turn.turn_index,
            });
        }
        loss_sum += loss;
        pg_grad = pg_grad
            + head_gradients(
                pg,
                &f.s_pk_mean,
                &f.s_pu,
                GroundingLabels::Persona(&turn.persona_labels),
            )?
            .scaled(weights.beta);
        kg_grad = kg_grad
            + head_gradients(
                kg,
                &f.s_kp_mean,
                &f.s_ku,
                GroundingLabels::Knowledge(turn.knowledge_label),
            )?
            .scaled(weights.alpha);
    }
    let n = features.len() as f64;
    Ok(EpochPass {
        loss: loss_sum / n,
        pg_grad: pg_grad.scaled(1.0 / n),
        kg_grad: kg_grad.scaled(1.0 / n),
    })
}

fn step(head: &mut GroundingHead, grad: HeadGradients, lr: f64) {
    head.w1 -= lr * grad.dw1;
    head.w2 -= lr * grad.dw2;
    head.bias -= lr * grad.dbias;
}

/// Full-batch gradient descent from all-zero heads on precomputed features.
/// Turns are reduced in corpus order, so results are run-to-run identical.
pub fn fit_heads(
    corpus: &Corpus,
    features: &[TurnFeatures],
    options: &TrainOptions,
    lm: &dyn LmLossProvider,
) -> Result<TrainedHeads> {
    options.validate()?;
    if features.len() != corpus.turns.len() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} turns",
            features.len(),
            corpus.turns.len()
        )));
    }
    if features.is_empty() {
        return Err(Error::EmptyInput("no turns to train on"));
    }
    let mut pg = GroundingHead::zeros(Task::PersonaGrounding);
    let mut kg = GroundingHead::zeros(Task::KnowledgeGrounding);
    let mut history = Vec::with_capacity(options.epochs);
    for _ in 0..options.epochs {
        let pass = epoch_pass(corpus, features, &pg, &kg, &options.weights, lm)?;
        history.push(pass.loss);
        step(&mut pg, pass.pg_grad, options.learning_rate);
        step(&mut kg, pass.kg_grad, options.learning_rate);
    }
    let final_loss = epoch_pass(corpus, features, &pg, &kg, &options.weights, lm)?.loss;
    Ok(TrainedHeads {
        pg,
        kg,
        history,
        final_loss,
    })
}

/// Extracts features with `embedder` and fits both heads.
pub fn train_heads(
    corpus: &Corpus,
    embedder: &Embedder,
    max_tokens: usize,
    options: &TrainOptions,
    lm: &dyn LmLossProvider,
) -> Result<TrainedHeads> {
    options.validate()?;
    let features = super::extract_features(corpus, embedder, max_tokens)?;
    fit_heads(corpus, &features, options, lm)
}
