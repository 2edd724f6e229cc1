//! Train both grounding heads on the synthetic corpus and report accuracy.

use std::sync::Arc;

use ncli_ground::dataset::synth_corpus;
use ncli_ground::embedstore::{Embedder, EmbeddingCache, HashedProvider, ProjectionMatrix};
use ncli_ground::grounding::{
    extract_features, fit_heads, ground_turn, LossWeights, NullLmLoss, TrainOptions,
};
use ncli_ground::metrics::grounding_accuracies;

fn main() -> ncli_ground::Result<()> {
    let corpus = synth_corpus(7, 200, 3);
    let provider = Arc::new(HashedProvider::new(7, 128)?);
    let projection = Arc::new(ProjectionMatrix::for_width(7, 128)?);
    let cache = Arc::new(EmbeddingCache::in_memory(provider.as_ref(), &projection));
    let embedder = Embedder::new(provider, projection, Some(cache))?;

    let features = extract_features(&corpus, &embedder, 256)?;
    let options = TrainOptions {
        weights: LossWeights::new(6.0, 2.0, 2.0),
        learning_rate: 0.1,
        epochs: 50,
    };
    let trained = fit_heads(&corpus, &features, &options, &NullLmLoss)?;
    for (epoch, loss) in trained.history.iter().enumerate().step_by(10) {
        println!("epoch {epoch:>2}  loss {loss:.4}");
    }
    println!("final    loss {:.4}", trained.final_loss);
    println!("pg head {:?}\nkg head {:?}", trained.pg, trained.kg);

    let outputs = features
        .iter()
        .map(|f| ground_turn(&trained.pg, &trained.kg, f))
        .collect::<Result<Vec<_>, _>>()?;
    let acc = grounding_accuracies(&outputs, &corpus.turns)?;
    println!(
        "PG {:.1}%  PG_MTL {:.1}%  KG {:.1}%",
        acc.pg, acc.pg_mtl, acc.kg
    );
    Ok(())
}
