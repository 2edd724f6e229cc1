use std::hash::Hasher;

use fnv::FnvHasher;

/// Identifier of the built-in tokenizer, folded into every text hash it produces.
pub const ENGINE_TOKENIZER_ID: &str = "ncli-ws-lower-v1";

/// Lowercases, splits on whitespace and strips leading/trailing
/// non-alphanumeric characters from each piece. Pieces left empty are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|piece| {
            let trimmed = piece.trim_matches(|c: char| !c.is_alphanumeric());
            (!trimmed.is_empty()).then(|| trimmed.to_lowercase())
        })
        .collect()
}

/// Content hash shared with external embedding exporters.
///
/// 64-bit FNV-1a over `tokenizer_id` as UTF-8, one `0x00` byte, then `text`
/// as UTF-8. The text is hashed verbatim (no normalization).
pub fn text_hash(tokenizer_id: &str, text: &str) -> u64 {
    let mut hasher = FnvHasher::default();
    hasher.write(tokenizer_id.as_bytes());
    hasher.write(&[0u8]);
    hasher.write(text.as_bytes());
    hasher.finish()
}
