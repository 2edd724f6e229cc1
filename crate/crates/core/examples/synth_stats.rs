//! Generate the synthetic corpus and print its statistics.

use ncli_ground::dataset::{corpus_stats, synth_corpus};

fn main() {
    let mut args = std::env::args()
        .skip(1)
        .map(|a| a.parse::<usize>().expect("numeric argument"));
    let dialogs = args.next().unwrap_or(200);
    let overlap = args.next().unwrap_or(3);
    let corpus = synth_corpus(7, dialogs, overlap);
    println!(
        "{}",
        serde_json::to_string_pretty(&corpus_stats(&corpus)).unwrap()
    );

    let turn = &corpus.turns[0];
    let set = corpus.candidates_for(turn);
    println!("question: {}", turn.question());
    println!("gold knowledge: {}", set.knowledge[turn.knowledge_label]);
}
