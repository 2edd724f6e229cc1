//! Text metrics on a few pairs and a full evaluation report.

use ncli_ground::dataset::DialogTurn;
use ncli_ground::grounding::GroundingOutput;
use ncli_ground::metrics::{bleu_avg, evaluate, perplexity, rouge_l, rouge_n, unigram_f1};

fn main() -> ncli_ground::Result<()> {
    let pairs = [
        ("the cat", "the cat sat"),
        ("the cat sat on the mat", "the cat sat on the mat"),
        ("a dog ran", "the cat sat"),
    ];
    println!(
        "{:<24} {:<24} {:>6} {:>6} {:>6} {:>6} {:>6}",
        "hypothesis", "reference", "R1", "R2", "RL", "F1", "BLEU"
    );
    for (h, r) in pairs {
        println!(
            "{h:<24} {r:<24} {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>6.3}",
            rouge_n(h, r, 1),
            rouge_n(h, r, 2),
            rouge_l(h, r),
            unigram_f1(h, r),
            bleu_avg(h, r)
        );
    }
    println!(
        "perplexity of [ln 2, ln 8] = {}",
        perplexity(&[2f64.ln(), 8f64.ln()])?
    );

    let turn = DialogTurn {
        dialog_id: "demo".into(),
        turn_index: 0,
        utterance_history: vec!["do you like tea?".into()],
        answer: "yes i drink green tea".into(),
        persona_labels: vec![true, false],
        knowledge_label: 1,
    };
    let output = GroundingOutput {
        persona_probs: vec![0.9, 0.2],
        selected_personas: vec![0],
        knowledge_probs: vec![0.3, 0.7],
        selected_knowledge: 1,
    };
    let report = evaluate(
        &["i drink green tea".into()],
        &[turn],
        &[output],
        Some(&[1.2, 0.8, 2.0]),
    )?;
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(())
}
