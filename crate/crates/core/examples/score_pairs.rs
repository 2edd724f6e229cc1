//! Late-interaction scores between short texts, and why the score is directional.

use std::sync::Arc;

use ncli_ground::embedstore::{Embedder, HashedProvider, ProjectionMatrix, TokenMatrix};
use ncli_ground::ncli::{ncli, ncolbert, Source};

fn main() -> ncli_ground::Result<()> {
    // One matched token vs. a matched token plus an orthogonal one.
    let e = |axes: &[usize]| {
        let rows: Vec<Vec<f64>> = axes
            .iter()
            .map(|&a| (0..4).map(|i| f64::from(u8::from(i == a))).collect())
            .collect();
        TokenMatrix::normalized(axes.iter().map(|a| format!("e{a}")).collect(), &rows)
    };
    let (short, long) = (e(&[0])?, e(&[0, 1])?);
    println!("score(short -> long) = {}", ncolbert(&short, &long)?);
    println!("score(long -> short) = {}", ncolbert(&long, &short)?);

    let embedder = Embedder::new(
        Arc::new(HashedProvider::new(7, 128)?),
        Arc::new(ProjectionMatrix::for_width(7, 128)?),
        None,
    )?;
    let knowledge = [
        "The bridge was finished in 1932 after six years of work.",
        "Tea is grown on terraced hillsides.",
    ];
    let question = "when was the bridge finished?";
    let ks: Vec<_> = knowledge
        .iter()
        .map(|k| embedder.candidate(k))
        .collect::<Result<_, _>>()?;
    let u = [embedder.utterance(question)?];
    let sim = ncli(&ks, &u, (Source::Knowledge, Source::Utterance))?;
    for (k, text) in knowledge.iter().enumerate() {
        println!("{:.4}  {text}", sim.get(k, 0));
    }
    Ok(())
}
