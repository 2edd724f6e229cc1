//! Binary embedding record.
//!
//! ```text
//! magic      4 bytes   "NCLI"
//! version    u8        1
//! tokenizer  u32 LE length + UTF-8 bytes
//! d          u32 LE    columns
//! s          u32 LE    rows (tokens)
//! tokens     s × (u32 LE length + UTF-8 bytes)
//! vectors    s × d f32 LE, row-major
//! ```
//!
//! Records may be concatenated; an export directory indexes them by byte offset.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"NCLI";
pub const VERSION: u8 = 1;

// Guards allocations when a header is corrupt.
const MAX_DIM: u32 = 1 << 16;
const MAX_TOKENS: u32 = 1 << 20;
const MAX_STRING: u32 = 1 << 20;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated record")]
    Truncated,
    #[error("invalid UTF-8 in {0}")]
    InvalidUtf8(&'static str),
    #[error("implausible header field {field} = {value}")]
    Implausible { field: &'static str, value: u32 },
    #[error(transparent)]
    Io(io::Error),
}

impl From<io::Error> for FormatError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            FormatError::Truncated
        } else {
            FormatError::Io(e)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub tokenizer_id: String,
    pub tokens: Vec<String>,
    pub dim: usize,
    /// `tokens.len() * dim` values, row-major.
    pub data: Vec<f32>,
}

impl EmbeddingRecord {
    pub fn encoded_len(&self) -> usize {
        4 + 1
            + 4
            + self.tokenizer_id.len()
            + 8
            + self.tokens.iter().map(|t| 4 + t.len()).sum::<usize>()
            + 4 * self.data.len()
    }
}

pub fn write_record<W: Write>(mut w: W, record: &EmbeddingRecord) -> io::Result<()> {
    assert_eq!(record.data.len(), record.tokens.len() * record.dim);
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    write_str(&mut w, &record.tokenizer_id)?;
    w.write_all(&(record.dim as u32).to_le_bytes())?;
    w.write_all(&(record.tokens.len() as u32).to_le_bytes())?;
    for token in &record.tokens {
        write_str(&mut w, token)?;
    }
    let mut buf = Vec::with_capacity(record.data.len() * 4);
    for v in &record.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn encode_record(record: &EmbeddingRecord) -> Vec<u8> {
    let mut out = Vec::with_capacity(record.encoded_len());
    write_record(&mut out, record).expect("writing to a Vec cannot fail");
    out
}

pub fn read_record<R: Read>(mut r: R) -> Result<EmbeddingRecord, FormatError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let version = read_u8(&mut r)?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let tokenizer_id = read_str(&mut r, "tokenizer id")?;
    let dim = read_u32(&mut r)?;
    if dim == 0 || dim > MAX_DIM {
        return Err(FormatError::Implausible {
            field: "d",
            value: dim,
        });
    }
    let rows = read_u32(&mut r)?;
    if rows > MAX_TOKENS {
        return Err(FormatError::Implausible {
            field: "s",
            value: rows,
        });
    }
    let mut tokens = Vec::with_capacity(rows as usize);
    for _ in 0..rows {
        tokens.push(read_str(&mut r, "token")?);
    }
    let count = rows as usize * dim as usize;
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(EmbeddingRecord {
        tokenizer_id,
        tokens,
        dim: dim as usize,
        data,
    })
}

fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8, FormatError> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, FormatError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R, what: &'static str) -> Result<String, FormatError> {
    let len = read_u32(r)?;
    if len > MAX_STRING {
        return Err(FormatError::Implausible {
            field: what,
            value: len,
        });
    }
    let mut bytes = vec![0u8; len as usize];
    r.read_exact(&mut bytes)?;
    String::from_utf8(bytes).map_err(|_| FormatError::InvalidUtf8(what))
}
