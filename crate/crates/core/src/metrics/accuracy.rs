use serde::{Deserialize, Serialize};

use crate::dataset::DialogTurn;
use crate::error::{Error, Result};
use crate::grounding::GroundingOutput;

/// Percentages in [0, 100].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundingAccuracies {
    /// Per (turn, persona entry) agreement between selection and label.
    pub pg: f64,
    /// Turns whose persona selection matches every label.
    pub pg_mtl: f64,
    /// Turns whose selected knowledge entry is the gold one.
    pub kg: f64,
}

pub fn grounding_accuracies(
    outputs: &[GroundingOutput],
    turns: &[DialogTurn],
) -> Result<GroundingAccuracies> {
    if outputs.len() != turns.len() {
        return Err(Error::Shape(format!(
            "{} grounding outputs for {} turns",
            outputs.len(),
            turns.len()
        )));
    }
    let (mut entry_hits, mut entries, mut all_hits, mut kg_hits) = (0usize, 0usize, 0usize, 0usize);
    for (out, turn) in outputs.iter().zip(turns) {
        let mut all_correct = true;
        for (i, &label) in turn.persona_labels.iter().enumerate() {
            let selected = out.selected_personas.contains(&i);
            entries += 1;
            if selected == label {
                entry_hits += 1;
            } else {
                all_correct = false;
            }
        }
        all_hits += usize::from(all_correct);
        kg_hits += usize::from(out.selected_knowledge == turn.knowledge_label);
    }
    let pct = |hits: usize, total: usize| {
        if total == 0 {
            0.0
        } else {
            100.0 * hits as f64 / total as f64
        }
    };
    Ok(GroundingAccuracies {
        pg: pct(entry_hits, entries),
        pg_mtl: pct(all_hits, turns.len()),
        kg: pct(kg_hits, turns.len()),
    })
}
