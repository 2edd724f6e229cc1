//! Token-level embeddings: production, dimension reduction, persistence and caching.
//!
//! A text is tokenized, every token gets a `d`-dimensional row from an
//! [`EmbeddingProvider`], and the rows are projected to `d0 = d / 4` columns by a
//! fixed seeded Gaussian [`ProjectionMatrix`] and rescaled to unit length. The
//! reduced [`TokenMatrix`] is what the similarity kernel consumes and what the
//! [`EmbeddingCache`] persists.

mod cache;
pub mod format;
mod provider;
pub mod rng;
mod tokenize;

use std::sync::Arc;

pub use cache::{cache_get_or_embed, precompute_candidates, Embedder, EmbeddingCache};
pub use provider::{
    embed_text, EmbeddingProvider, ExportManifest, ExportRecord, ExportWriter, HashedProvider,
    ImportProvider, EXPORT_DATA_FILE, EXPORT_MANIFEST_FILE,
};
pub use tokenize::{text_hash, tokenize, ENGINE_TOKENIZER_ID};

use crate::error::{Error, Result};
use rng::{derive_seed, Rng};

/// Allowed deviation of a stored row's L2 norm from 1.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-5;

/// Projected rows shorter than this are replaced by `e_1`.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Reduced width used for a model width `d`.
pub fn reduced_dim(d: usize) -> usize {
    d / 4
}

/// Provider output before reduction: one `d`-wide row per token.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTokenMatrix {
    pub text_hash: u64,
    pub tokens: Vec<String>,
    dim: usize,
    data: Vec<f32>,
}

impl RawTokenMatrix {
    pub fn new(text_hash: u64, tokens: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput("raw token matrix has no tokens"));
        }
        if data.len() != tokens.len() * dim {
            return Err(Error::Shape(format!(
                "{} values for {} tokens of width {dim}",
                data.len(),
                tokens.len()
            )));
        }
        Ok(Self {
            text_hash,
            tokens,
            dim,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Reduced, unit-normalized token embeddings of one text.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    pub text_hash: u64,
    pub tokens: Vec<String>,
    dim: usize,
    data: Vec<f32>,
}

impl TokenMatrix {
    /// Builds a matrix from rows that must already have unit length.
    pub fn from_unit_rows(
        text_hash: u64,
        tokens: Vec<String>,
        dim: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput("token matrix has no tokens"));
        }
        if dim == 0 || data.len() != tokens.len() * dim {
            return Err(Error::Shape(format!(
                "{} values for {} tokens of width {dim}",
                data.len(),
                tokens.len()
            )));
        }
        for (i, row) in data.chunks_exact(dim).enumerate() {
            let norm = row_norm(row);
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE || !norm.is_finite() {
                return Err(Error::Shape(format!("row {i} has norm {norm}, expected 1")));
            }
        }
        Ok(Self {
            text_hash,
            tokens,
            dim,
            data,
        })
    }

    /// Normalizes arbitrary rows (same degenerate rule as reduction).
    pub fn normalized(tokens: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.len() != tokens.len() || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape(
                "ragged rows or token/row count mismatch".into(),
            ));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            push_normalized(&mut data, row);
        }
        Self::from_unit_rows(0, tokens, dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Keeps at most `max_tokens` rows: the first ones, or the last ones when
    /// `keep_tail` is set (utterance histories end with the current question).
    pub fn truncated(self: &Arc<Self>, max_tokens: usize, keep_tail: bool) -> Arc<Self> {
        if max_tokens == 0 || self.len() <= max_tokens {
            return Arc::clone(self);
        }
        let start = if keep_tail {
            self.len() - max_tokens
        } else {
            0
        };
        let end = start + max_tokens;
        Arc::new(Self {
            text_hash: self.text_hash,
            tokens: self.tokens[start..end].to_vec(),
            dim: self.dim,
            data: self.data[start * self.dim..end * self.dim].to_vec(),
        })
    }

    pub(crate) fn to_record(&self, tokenizer_id: &str) -> format::EmbeddingRecord {
        format::EmbeddingRecord {
            tokenizer_id: tokenizer_id.to_owned(),
            tokens: self.tokens.clone(),
            dim: self.dim,
            data: self.data.clone(),
        }
    }
}

fn row_norm(row: &[f32]) -> f64 {
    row.iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt()
}

fn push_normalized(out: &mut Vec<f32>, row: &[f64]) {
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < DEGENERATE_NORM || !norm.is_finite() {
        out.push(1.0);
        out.extend(std::iter::repeat_n(0.0, row.len() - 1));
    } else {
        out.extend(row.iter().map(|v| (v / norm) as f32));
    }
}

/// Fixed Gaussian random projection from `d` to `d0` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    pub seed: u64,
    pub d: usize,
    pub d0: usize,
    /// `d × d0`, row-major.
    entries: Vec<f64>,
}

impl ProjectionMatrix {
    /// Entries are standard normals scaled by `1/sqrt(d0)`, drawn row-major from
    /// a stream seeded by `(seed, d, d0)`.
    pub fn new(seed: u64, d: usize, d0: usize) -> Result<Self> {
        if d < 4 || d0 == 0 || d0 > d {
            return Err(Error::InvalidConfig(format!(
                "projection needs d >= 4 and 1 <= d0 <= d, got d={d}, d0={d0}"
            )));
        }
        let mut extra = Vec::with_capacity(16);
        extra.extend_from_slice(&(d as u64).to_le_bytes());
        extra.extend_from_slice(&(d0 as u64).to_le_bytes());
        let mut rng = Rng::new(derive_seed("projection", seed, &extra));
        let scale = 1.0 / (d0 as f64).sqrt();
        let entries = (0..d * d0).map(|_| rng.standard_normal() * scale).collect();
        Ok(Self {
            seed,
            d,
            d0,
            entries,
        })
    }

    /// Projection for a model width `d` using the standard `d0 = d / 4`.
    pub fn for_width(seed: u64, d: usize) -> Result<Self> {
        Self::new(seed, d, reduced_dim(d))
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.d0 + col]
    }

    pub fn fingerprint(&self) -> String {
        format!(
            "gaussian-projection:seed={}:d={}:d0={}",
            self.seed, self.d, self.d0
        )
    }
}

/// Projects every row to `d0` columns then scales it to unit length.
/// Rows whose projection is shorter than [`DEGENERATE_NORM`] become `e_1`.
pub fn reduce_and_normalize(raw: &RawTokenMatrix, proj: &ProjectionMatrix) -> Result<TokenMatrix> {
    if raw.dim != proj.d {
        return Err(Error::Shape(format!(
            "embedding width {} does not match projection input width {}",
            raw.dim, proj.d
        )));
    }
    let mut data = Vec::with_capacity(raw.len() * proj.d0);
    let mut projected = vec![0.0f64; proj.d0];
    for i in 0..raw.len() {
        projected.iter_mut().for_each(|v| *v = 0.0);
        for (k, &x) in raw.row(i).iter().enumerate() {
            let x = f64::from(x);
            let weights = &proj.entries[k * proj.d0..(k + 1) * proj.d0];
            for (acc, w) in projected.iter_mut().zip(weights) {
                *acc += x * w;
            }
        }
        push_normalized(&mut data, &projected);
    }
    Ok(TokenMatrix {
        text_hash: raw.text_hash,
        tokens: raw.tokens.clone(),
        dim: proj.d0,
        data,
    })
}
