//! Precomputing candidate embeddings into an on-disk cache and reading them back.

use ncli_ground::dataset::synth_corpus;
use ncli_ground::embedstore::{
    cache_get_or_embed, precompute_candidates, EmbeddingCache, HashedProvider, ProjectionMatrix,
};

fn main() -> ncli_ground::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let provider = HashedProvider::new(7, 64)?;
    let projection = ProjectionMatrix::for_width(7, 64)?;
    let corpus = synth_corpus(7, 10, 3);

    let cache = EmbeddingCache::open(dir.path(), &provider, &projection)?;
    let stored = precompute_candidates(&corpus.candidates, &provider, &projection, &cache)?;
    println!(
        "stored {stored} entries under {}",
        cache.dir().unwrap().display()
    );
    let again = precompute_candidates(&corpus.candidates, &provider, &projection, &cache)?;
    println!(
        "second pass stored {again}, provider calls so far {}",
        cache.provider_calls()
    );

    // A fresh handle on the same directory serves entries from disk.
    let reopened = EmbeddingCache::open(dir.path(), &provider, &projection)?;
    let entry = &corpus.candidates[0].knowledge[0];
    let m = cache_get_or_embed(entry, &provider, &projection, &reopened)?;
    println!(
        "{} tokens x {} dims, provider calls after reopen: {}",
        m.len(),
        m.dim(),
        reopened.provider_calls()
    );
    Ok(())
}
