use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::format::{self, EmbeddingRecord};
use super::rng::{derive_seed, Rng};
use super::tokenize::{text_hash, tokenize, ENGINE_TOKENIZER_ID};
use super::RawTokenMatrix;
use crate::error::{Error, Result};

pub const EXPORT_MANIFEST_FILE: &str = "manifest.json";
pub const EXPORT_DATA_FILE: &str = "embeddings.bin";

/// Source of raw `d`-wide token embeddings.
pub trait EmbeddingProvider: Send + Sync {
    /// Folded into text hashes; two providers with different tokenizers never
    /// share cache entries.
    fn tokenizer_id(&self) -> &str;

    fn dim(&self) -> usize;

    /// Everything that influences the produced vectors.
    fn fingerprint(&self) -> String;

    fn embed(&self, text: &str) -> Result<RawTokenMatrix>;
}

pub fn embed_text(text: &str, provider: &dyn EmbeddingProvider) -> Result<RawTokenMatrix> {
    provider.embed(text)
}

/// Built-in provider: every distinct token maps to a pseudorandom unit vector
/// that depends only on the token string and the seed.
#[derive(Debug, Clone)]
pub struct HashedProvider {
    seed: u64,
    dim: usize,
}

impl HashedProvider {
    pub fn new(seed: u64, dim: usize) -> Result<Self> {
        if dim < 4 {
            return Err(Error::InvalidConfig(format!(
                "embedding width must be >= 4, got {dim}"
            )));
        }
        Ok(Self { seed, dim })
    }

    pub fn token_vector(&self, token: &str) -> Vec<f32> {
        let mut rng = Rng::new(derive_seed("hashed-token", self.seed, token.as_bytes()));
        let raw: Vec<f64> = (0..self.dim).map(|_| rng.standard_normal()).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        raw.iter().map(|v| (v / norm) as f32).collect()
    }
}

impl EmbeddingProvider for HashedProvider {
    fn tokenizer_id(&self) -> &str {
        ENGINE_TOKENIZER_ID
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn fingerprint(&self) -> String {
        format!("hashed:seed={}:d={}", self.seed, self.dim)
    }

    fn embed(&self, text: &str) -> Result<RawTokenMatrix> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::EmptyText {
                text: text.to_owned(),
            });
        }
        let mut data = Vec::with_capacity(tokens.len() * self.dim);
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (i, token) in tokens.iter().enumerate() {
            match seen.get(token.as_str()) {
                Some(&first) => data.extend_from_within(first * self.dim..(first + 1) * self.dim),
                None => {
                    seen.insert(token, i);
                    data.extend(self.token_vector(token));
                }
            }
        }
        RawTokenMatrix::new(text_hash(ENGINE_TOKENIZER_ID, text), tokens, self.dim, data)
    }
}

mod hex_u64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        u64::from_str_radix(&s, 16).map_err(serde::de::Error::custom)
    }
}

/// One exported text inside `embeddings.bin`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportRecord {
    /// 16 lowercase hex digits in JSON.
    #[serde(with = "hex_u64")]
    pub text_hash: u64,
    pub token_count: usize,
    /// Byte offset of the record in `embeddings.bin`.
    pub offset: u64,
    #[serde(default)]
    pub truncated: bool,
}

/// `manifest.json` of an export directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub model: String,
    pub tokenizer_id: String,
    pub d: usize,
    #[serde(default)]
    pub layer: Option<String>,
    pub records: Vec<ExportRecord>,
}

/// Serves embeddings from an export directory (`manifest.json` + `embeddings.bin`).
/// Tokens stored in the records are opaque; the engine does not retokenize them.
pub struct ImportProvider {
    data_path: PathBuf,
    manifest: ExportManifest,
    index: HashMap<u64, usize>,
    bytes: Vec<u8>,
}

impl ImportProvider {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest_path = dir.join(EXPORT_MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: ExportManifest =
            serde_json::from_str(&text).map_err(|e| Error::CacheCorrupt {
                path: manifest_path.clone(),
                reason: e.to_string(),
            })?;
        if manifest.d < 4 {
            return Err(Error::CacheCorrupt {
                path: manifest_path,
                reason: format!("embedding width {} is below 4", manifest.d),
            });
        }
        let data_path = dir.join(EXPORT_DATA_FILE);
        let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
        let index = manifest
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.text_hash, i))
            .collect();
        Ok(Self {
            data_path,
            manifest,
            index,
            bytes,
        })
    }

    pub fn manifest(&self) -> &ExportManifest {
        &self.manifest
    }

    pub fn contains(&self, text: &str) -> bool {
        self.index
            .contains_key(&text_hash(&self.manifest.tokenizer_id, text))
    }

    fn corrupt(&self, reason: impl Into<String>) -> Error {
        Error::CacheCorrupt {
            path: self.data_path.clone(),
            reason: reason.into(),
        }
    }
}

impl EmbeddingProvider for ImportProvider {
    fn tokenizer_id(&self) -> &str {
        &self.manifest.tokenizer_id
    }

    fn dim(&self) -> usize {
        self.manifest.d
    }

    fn fingerprint(&self) -> String {
        format!(
            "import:model={}:tokenizer={}:d={}:layer={}",
            self.manifest.model,
            self.manifest.tokenizer_id,
            self.manifest.d,
            self.manifest.layer.as_deref().unwrap_or("last")
        )
    }

    fn embed(&self, text: &str) -> Result<RawTokenMatrix> {
        if tokenize(text).is_empty() {
            return Err(Error::EmptyText {
                text: text.to_owned(),
            });
        }
        let hash = text_hash(&self.manifest.tokenizer_id, text);
        let entry =
            &self.manifest.records[*self.index.get(&hash).ok_or(Error::CacheMiss { hash })?];
        let start = usize::try_from(entry.offset)
            .ok()
            .filter(|&o| o < self.bytes.len())
            .ok_or_else(|| self.corrupt(format!("offset {} past end of file", entry.offset)))?;
        let record = format::read_record(&self.bytes[start..])
            .map_err(|e| self.corrupt(format!("record {hash:016x}: {e}")))?;
        if record.dim != self.manifest.d {
            return Err(self.corrupt(format!(
                "record {hash:016x} has width {}, manifest says {}",
                record.dim, self.manifest.d
            )));
        }
        if record.tokens.len() != entry.token_count {
            return Err(self.corrupt(format!(
                "record {hash:016x} has {} tokens, manifest says {}",
                record.tokens.len(),
                entry.token_count
            )));
        }
        if record.tokenizer_id != self.manifest.tokenizer_id {
            return Err(self.corrupt(format!(
                "record {hash:016x} tokenizer {:?} differs from manifest",
                record.tokenizer_id
            )));
        }
        if record.tokens.is_empty() {
            return Err(Error::EmptyText {
                text: text.to_owned(),
            });
        }
        RawTokenMatrix::new(hash, record.tokens, record.dim, record.data)
    }
}

/// Writes an export directory in the layout [`ImportProvider`] reads.
pub struct ExportWriter {
    dir: PathBuf,
    data: BufWriter<File>,
    offset: u64,
    manifest: ExportManifest,
    seen: HashMap<u64, ()>,
}

impl ExportWriter {
    pub fn create(
        dir: impl AsRef<Path>,
        model: &str,
        tokenizer_id: &str,
        d: usize,
    ) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let data_path = dir.join(EXPORT_DATA_FILE);
        let file = File::create(&data_path).map_err(|e| Error::io(&data_path, e))?;
        Ok(Self {
            dir,
            data: BufWriter::new(file),
            offset: 0,
            manifest: ExportManifest {
                model: model.to_owned(),
                tokenizer_id: tokenizer_id.to_owned(),
                d,
                layer: Some("last".to_owned()),
                records: Vec::new(),
            },
            seen: HashMap::new(),
        })
    }

    /// Appends one text; returns false if an identical text was already written.
    pub fn append(
        &mut self,
        text: &str,
        tokens: Vec<String>,
        data: Vec<f32>,
        truncated: bool,
    ) -> Result<bool> {
        let hash = text_hash(&self.manifest.tokenizer_id, text);
        if self.seen.insert(hash, ()).is_some() {
            return Ok(false);
        }
        if tokens.is_empty() || data.len() != tokens.len() * self.manifest.d {
            return Err(Error::Shape(format!(
                "export record for {hash:016x}: {} values for {} tokens of width {}",
                data.len(),
                tokens.len(),
                self.manifest.d
            )));
        }
        let record = EmbeddingRecord {
            tokenizer_id: self.manifest.tokenizer_id.clone(),
            tokens,
            dim: self.manifest.d,
            data,
        };
        let bytes = format::encode_record(&record);
        let path = self.dir.join(EXPORT_DATA_FILE);
        self.data
            .write_all(&bytes)
            .map_err(|e| Error::io(&path, e))?;
        self.manifest.records.push(ExportRecord {
            text_hash: hash,
            token_count: record.tokens.len(),
            offset: self.offset,
            truncated,
        });
        self.offset += bytes.len() as u64;
        Ok(true)
    }

    pub fn finish(mut self) -> Result<ExportManifest> {
        let data_path = self.dir.join(EXPORT_DATA_FILE);
        self.data.flush().map_err(|e| Error::io(&data_path, e))?;
        let mut tmp =
            tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        serde_json::to_writer_pretty(&mut tmp, &self.manifest)
            .map_err(|e| Error::io(&self.dir, e.into()))?;
        let manifest_path = self.dir.join(EXPORT_MANIFEST_FILE);
        tmp.persist(&manifest_path)
            .map_err(|e| Error::io(&manifest_path, e.error))?;
        Ok(self.manifest)
    }
}
