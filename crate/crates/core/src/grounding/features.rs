use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    kg_forward, kg_select, mean_rows, pg_forward, pg_select, GroundingHead, GroundingOutput,
};
use crate::dataset::{CandidateSet, Corpus, DialogTurn};
use crate::embedstore::{Embedder, TokenMatrix};
use crate::error::Result;
use crate::ncli::{ncli, SimMatrix, Source};

/// The four similarity matrices of one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnSims {
    pub s_pu: SimMatrix,
    pub s_pk: SimMatrix,
    pub s_ku: SimMatrix,
    pub s_kp: SimMatrix,
}

/// Per-entry head inputs derived from [`TurnSims`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnFeatures {
    pub s_pk_mean: Vec<f64>,
    pub s_pu: Vec<f64>,
    pub s_kp_mean: Vec<f64>,
    pub s_ku: Vec<f64>,
}

impl From<&TurnSims> for TurnFeatures {
    fn from(sims: &TurnSims) -> Self {
        Self {
            s_pk_mean: mean_rows(&sims.s_pk),
            s_pu: sims.s_pu.column(0),
            s_kp_mean: mean_rows(&sims.s_kp),
            s_ku: sims.s_ku.column(0),
        }
    }
}

impl TurnFeatures {
    pub fn is_finite(&self) -> bool {
        [&self.s_pk_mean, &self.s_pu, &self.s_kp_mean, &self.s_ku]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Embeds the turn's candidates and history (each embedded once and shared by
/// both heads) and computes all four similarity matrices. `max_tokens = 0`
/// disables truncation; histories keep their last tokens.
pub fn turn_sims(
    embedder: &Embedder,
    candidates: &CandidateSet,
    turn: &DialogTurn,
    max_tokens: usize,
) -> Result<TurnSims> {
    let embed_all = |texts: &[String]| -> Result<Vec<Arc<TokenMatrix>>> {
        texts
            .iter()
            .map(|t| Ok(embedder.candidate(t)?.truncated(max_tokens, false)))
            .collect()
    };
    let persona = embed_all(&candidates.persona)?;
    let knowledge = embed_all(&candidates.knowledge)?;
    let utterance = [embedder
        .utterance(&turn.utterance_text())?
        .truncated(max_tokens, true)];
    let context = |e: crate::Error| {
        e.context(format!(
            "dialog {} turn {}",
            turn.dialog_id, turn.turn_index
        ))
    };
    Ok(TurnSims {
        s_pu: ncli(&persona, &utterance, (Source::Persona, Source::Utterance)).map_err(context)?,
        s_pk: ncli(&persona, &knowledge, (Source::Persona, Source::Knowledge)).map_err(context)?,
        s_ku: ncli(
            &knowledge,
            &utterance,
            (Source::Knowledge, Source::Utterance),
        )
        .map_err(context)?,
        s_kp: ncli(&knowledge, &persona, (Source::Knowledge, Source::Persona)).map_err(context)?,
    })
}

/// Features for every turn, in corpus order.
pub fn extract_features(
    corpus: &Corpus,
    embedder: &Embedder,
    max_tokens: usize,
) -> Result<Vec<TurnFeatures>> {
    corpus
        .turns
        .iter()
        .map(|turn| {
            let sims = turn_sims(embedder, corpus.candidates_for(turn), turn, max_tokens)?;
            Ok(TurnFeatures::from(&sims))
        })
        .collect()
}

pub fn ground_turn(
    pg: &GroundingHead,
    kg: &GroundingHead,
    features: &TurnFeatures,
) -> Result<GroundingOutput> {
    let persona_probs = pg_forward(pg, &features.s_pk_mean, &features.s_pu)?;
    let knowledge_probs = kg_forward(kg, &features.s_kp_mean, &features.s_ku)?;
    Ok(GroundingOutput {
        selected_personas: pg_select(&persona_probs),
        selected_knowledge: kg_select(&knowledge_probs),
        persona_probs,
        knowledge_probs,
    })
}
