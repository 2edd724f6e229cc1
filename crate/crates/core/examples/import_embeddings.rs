//! Write an export directory the way an external encoder would, then ground
//! against it with the import provider.

use std::sync::Arc;

use ncli_ground::dataset::synth_corpus;
use ncli_ground::embedstore::{
    precompute_candidates, tokenize, EmbeddingCache, EmbeddingProvider, ExportWriter,
    HashedProvider, ImportProvider, ProjectionMatrix,
};

fn main() -> ncli_ground::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let corpus = synth_corpus(7, 5, 3);

    // Stand-in encoder: any model producing one d-wide vector per token works.
    let encoder = HashedProvider::new(99, 48)?;
    let mut writer = ExportWriter::create(dir.path(), "stand-in-encoder", "ws-lower", 48)?;
    let texts = corpus
        .candidates
        .values()
        .flat_map(|s| s.persona.iter().chain(&s.knowledge));
    for text in texts {
        let tokens = tokenize(text);
        let data = tokens
            .iter()
            .flat_map(|t| encoder.token_vector(t))
            .collect();
        writer.append(text, tokens, data, false)?;
    }
    let manifest = writer.finish()?;
    println!(
        "exported {} records of width {}",
        manifest.records.len(),
        manifest.d
    );

    let provider = Arc::new(ImportProvider::open(dir.path())?);
    let projection = ProjectionMatrix::for_width(7, provider.dim())?;
    let cache = EmbeddingCache::in_memory(provider.as_ref(), &projection);
    let stored = precompute_candidates(&corpus.candidates, provider.as_ref(), &projection, &cache)?;
    println!("precomputed {stored} entries with no misses");

    match provider.embed("a text nobody exported") {
        Err(e) => println!("lookup outside the export: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
