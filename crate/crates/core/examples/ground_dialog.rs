//! Ground one dialog turn by turn and show the generator input built from the selection.

use std::sync::Arc;

use ncli_ground::dataset::synth_corpus;
use ncli_ground::embedstore::{Embedder, HashedProvider, ProjectionMatrix};
use ncli_ground::grounding::{
    build_lm_input, ground_turn, turn_sims, GroundingHead, Task, TurnFeatures,
};

fn main() -> ncli_ground::Result<()> {
    let corpus = synth_corpus(3, 1, 3);
    let embedder = Embedder::new(
        Arc::new(HashedProvider::new(3, 128)?),
        Arc::new(ProjectionMatrix::for_width(3, 128)?),
        None,
    )?;
    // Hand-set heads: personas whose similarity to the history exceeds 0.45,
    // and the knowledge entry closest to it.
    let pg = GroundingHead::new(Task::PersonaGrounding, 0.0, 10.0, -4.5);
    let kg = GroundingHead::new(Task::KnowledgeGrounding, 0.0, 1.0, 0.0);

    for turn in &corpus.turns {
        let set = corpus.candidates_for(turn);
        let sims = turn_sims(&embedder, set, turn, 256)?;
        let out = ground_turn(&pg, &kg, &TurnFeatures::from(&sims))?;
        let personas: Vec<&str> = out
            .selected_personas
            .iter()
            .map(|&i| set.persona[i].as_str())
            .collect();
        println!("turn {}: {}", turn.turn_index, turn.question());
        println!(
            "  knowledge {} (gold {}), personas {:?} (labelled {:?})",
            out.selected_knowledge,
            turn.knowledge_label,
            out.selected_personas,
            (0..set.persona.len())
                .filter(|&i| turn.persona_labels[i])
                .collect::<Vec<_>>()
        );
        let lm = build_lm_input(
            &set.knowledge[out.selected_knowledge],
            &personas,
            &turn.utterance_history,
        );
        println!("  lm input: {}", lm.join(" "));
    }
    Ok(())
}
