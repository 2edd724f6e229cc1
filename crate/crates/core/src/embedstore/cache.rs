use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use super::format;
use super::provider::EmbeddingProvider;
use super::rng::derive_seed;
use super::tokenize::text_hash;
use super::{reduce_and_normalize, ProjectionMatrix, TokenMatrix};
use crate::dataset::CandidateSets;
use crate::error::{Error, Result};

const FILE_EXTENSION: &str = "ncli";

/// Reduced token matrices keyed by text hash, optionally mirrored to disk.
///
/// A cache is bound to one provider fingerprint and one projection; on disk it
/// lives in `<root>/<namespace>/<hash>.ncli` where the namespace hashes both.
/// Reads are concurrent, writes go through a temp file and an atomic rename.
pub struct EmbeddingCache {
    dir: Option<PathBuf>,
    namespace: String,
    tokenizer_id: String,
    dim: usize,
    index: RwLock<HashMap<u64, Arc<TokenMatrix>>>,
    provider_calls: AtomicU64,
}

fn namespace_for(provider: &dyn EmbeddingProvider, proj: &ProjectionMatrix) -> String {
    let key = format!("{}|{}", provider.fingerprint(), proj.fingerprint());
    format!("{:016x}", derive_seed("cache-namespace", 0, key.as_bytes()))
}

impl EmbeddingCache {
    pub fn in_memory(provider: &dyn EmbeddingProvider, proj: &ProjectionMatrix) -> Self {
        Self {
            dir: None,
            namespace: namespace_for(provider, proj),
            tokenizer_id: provider.tokenizer_id().to_owned(),
            dim: proj.d0,
            index: RwLock::new(HashMap::new()),
            provider_calls: AtomicU64::new(0),
        }
    }

    pub fn open(
        root: impl AsRef<Path>,
        provider: &dyn EmbeddingProvider,
        proj: &ProjectionMatrix,
    ) -> Result<Self> {
        let mut cache = Self::in_memory(provider, proj);
        let dir = root.as_ref().join(&cache.namespace);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        cache.dir = Some(dir);
        Ok(cache)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn provider_calls(&self) -> u64 {
        self.provider_calls.load(Ordering::SeqCst)
    }

    fn entry_path(&self, hash: u64) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(format!("{hash:016x}.{FILE_EXTENSION}")))
    }

    pub fn contains(&self, hash: u64) -> bool {
        self.index.read().unwrap().contains_key(&hash)
            || self.entry_path(hash).is_some_and(|p| p.exists())
    }

    /// Looks up memory, then disk. A file that exists but does not decode is an error.
    pub fn get(&self, hash: u64) -> Result<Option<Arc<TokenMatrix>>> {
        if let Some(m) = self.index.read().unwrap().get(&hash) {
            return Ok(Some(Arc::clone(m)));
        }
        let Some(path) = self.entry_path(hash) else {
            return Ok(None);
        };
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let matrix = Arc::new(self.decode(&path, hash, &bytes)?);
        self.index
            .write()
            .unwrap()
            .insert(hash, Arc::clone(&matrix));
        Ok(Some(matrix))
    }

    fn decode(&self, path: &Path, hash: u64, bytes: &[u8]) -> Result<TokenMatrix> {
        let corrupt = |reason: String| Error::CacheCorrupt {
            path: path.to_path_buf(),
            reason,
        };
        let mut cursor = bytes;
        let record = format::read_record(&mut cursor).map_err(|e| corrupt(e.to_string()))?;
        if !cursor.is_empty() {
            return Err(corrupt(format!("{} trailing bytes", cursor.len())));
        }
        if record.tokenizer_id != self.tokenizer_id {
            return Err(corrupt(format!(
                "tokenizer {:?}, expected {:?}",
                record.tokenizer_id, self.tokenizer_id
            )));
        }
        if record.dim != self.dim {
            return Err(corrupt(format!(
                "width {}, expected {}",
                record.dim, self.dim
            )));
        }
        TokenMatrix::from_unit_rows(hash, record.tokens, record.dim, record.data)
            .map_err(|e| corrupt(e.to_string()))
    }

    pub fn insert(&self, matrix: Arc<TokenMatrix>) -> Result<()> {
        if let Some(path) = self.entry_path(matrix.text_hash) {
            let dir = self.dir.as_ref().expect("entry path implies a directory");
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
            tmp.write_all(&format::encode_record(
                &matrix.to_record(&self.tokenizer_id),
            ))
            .map_err(|e| Error::io(tmp.path(), e))?;
            tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
        }
        self.index.write().unwrap().insert(matrix.text_hash, matrix);
        Ok(())
    }

    fn check_binding(
        &self,
        provider: &dyn EmbeddingProvider,
        proj: &ProjectionMatrix,
    ) -> Result<()> {
        if namespace_for(provider, proj) != self.namespace {
            return Err(Error::InvalidConfig(
                "cache was opened for a different provider or projection".into(),
            ));
        }
        Ok(())
    }
}

/// Embeds and reduces `text` unless the cache already holds it.
/// The provider call counter moves only on a miss.
pub fn cache_get_or_embed(
    text: &str,
    provider: &dyn EmbeddingProvider,
    proj: &ProjectionMatrix,
    cache: &EmbeddingCache,
) -> Result<Arc<TokenMatrix>> {
    cache.check_binding(provider, proj)?;
    let hash = text_hash(provider.tokenizer_id(), text);
    if let Some(hit) = cache.get(hash)? {
        return Ok(hit);
    }
    cache.provider_calls.fetch_add(1, Ordering::SeqCst);
    let raw = provider.embed(text)?;
    let matrix = Arc::new(reduce_and_normalize(&raw, proj)?);
    cache.insert(Arc::clone(&matrix))?;
    Ok(matrix)
}

/// Makes sure every persona and knowledge entry is cached. Returns how many
/// entries were newly stored; identical texts across sets are stored once.
pub fn precompute_candidates(
    candidate_sets: &CandidateSets,
    provider: &dyn EmbeddingProvider,
    proj: &ProjectionMatrix,
    cache: &EmbeddingCache,
) -> Result<usize> {
    cache.check_binding(provider, proj)?;
    let mut stored = 0;
    for (dialog_id, set) in candidate_sets {
        let entries = set
            .persona
            .iter()
            .enumerate()
            .map(|(i, t)| ("persona", i, t))
            .chain(
                set.knowledge
                    .iter()
                    .enumerate()
                    .map(|(i, t)| ("knowledge", i, t)),
            );
        for (kind, i, text) in entries {
            if cache.contains(text_hash(provider.tokenizer_id(), text)) {
                continue;
            }
            cache_get_or_embed(text, provider, proj, cache)
                .map_err(|e| e.context(format!("dialog {dialog_id} {kind} entry {i}")))?;
            stored += 1;
        }
    }
    Ok(stored)
}

/// Provider + projection + optional cache, as used by the grounding pipeline.
///
/// Candidate entries go through the cache when there is one. Utterance
/// histories are never cached: they are unknown ahead of time.
pub struct Embedder {
    provider: Arc<dyn EmbeddingProvider>,
    projection: Arc<ProjectionMatrix>,
    cache: Option<Arc<EmbeddingCache>>,
    uncached_candidate_calls: AtomicU64,
    utterance_calls: AtomicU64,
}

impl Embedder {
    pub fn new(
        provider: Arc<dyn EmbeddingProvider>,
        projection: Arc<ProjectionMatrix>,
        cache: Option<Arc<EmbeddingCache>>,
    ) -> Result<Self> {
        if provider.dim() != projection.d {
            return Err(Error::Shape(format!(
                "provider width {} does not match projection input width {}",
                provider.dim(),
                projection.d
            )));
        }
        if let Some(cache) = &cache {
            cache.check_binding(provider.as_ref(), &projection)?;
        }
        Ok(Self {
            provider,
            projection,
            cache,
            uncached_candidate_calls: AtomicU64::new(0),
            utterance_calls: AtomicU64::new(0),
        })
    }

    pub fn provider(&self) -> &dyn EmbeddingProvider {
        self.provider.as_ref()
    }

    pub fn projection(&self) -> &ProjectionMatrix {
        &self.projection
    }

    pub fn cache(&self) -> Option<&EmbeddingCache> {
        self.cache.as_deref()
    }

    pub fn candidate(&self, text: &str) -> Result<Arc<TokenMatrix>> {
        match &self.cache {
            Some(cache) => {
                cache_get_or_embed(text, self.provider.as_ref(), &self.projection, cache)
            }
            None => {
                self.uncached_candidate_calls.fetch_add(1, Ordering::SeqCst);
                self.embed_fresh(text)
            }
        }
    }

    pub fn utterance(&self, text: &str) -> Result<Arc<TokenMatrix>> {
        self.utterance_calls.fetch_add(1, Ordering::SeqCst);
        self.embed_fresh(text)
    }

    fn embed_fresh(&self, text: &str) -> Result<Arc<TokenMatrix>> {
        let raw = self.provider.embed(text)?;
        Ok(Arc::new(reduce_and_normalize(&raw, &self.projection)?))
    }

    /// Provider invocations made for persona/knowledge entries.
    pub fn candidate_provider_calls(&self) -> u64 {
        self.cache.as_ref().map_or(0, |c| c.provider_calls())
            + self.uncached_candidate_calls.load(Ordering::SeqCst)
    }

    pub fn utterance_provider_calls(&self) -> u64 {
        self.utterance_calls.load(Ordering::SeqCst)
    }
}
