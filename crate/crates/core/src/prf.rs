//! Keyed pseudorandom uniforms for the watermark.
//!
//! `prf_uniform(key, window, w)` hashes
//! `key ‖ window ids (u32 LE) ‖ w (u32 LE)` with SHA-256, reads the first
//! eight digest bytes big-endian, keeps the top 53 bits `x` and returns
//! `(x + 0.5) / 2^53`, which lies strictly inside (0, 1).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};

pub const DEFAULT_WINDOW: usize = 5;
pub const MAX_KEY_LEN: usize = 64;

/// Secret watermark key, 1 to 64 bytes.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Key(Vec<u8>);

impl Key {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Result<Self> {
        let bytes = bytes.into();
        if bytes.is_empty() || bytes.len() > MAX_KEY_LEN {
            return invalid(format!(
                "key must be 1..={MAX_KEY_LEN} bytes, got {}",
                bytes.len()
            ));
        }
        Ok(Key(bytes))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl std::fmt::Debug for Key {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Key(<{} bytes>)", self.0.len())
    }
}

/// The `m` tokens preceding the position being generated or scored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowCtx<'a> {
    tokens: &'a [u32],
    vocab_size: usize,
}

impl<'a> WindowCtx<'a> {
    pub fn new(tokens: &'a [u32], vocab_size: usize) -> Result<Self> {
        if tokens.is_empty() {
            return invalid("window must hold at least one token");
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= vocab_size) {
            return invalid(format!("window token {bad} >= vocab size {vocab_size}"));
        }
        Ok(WindowCtx { tokens, vocab_size })
    }

    pub fn tokens(&self) -> &[u32] {
        self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn prefix_hasher(&self, key: &Key) -> Sha256 {
        let mut h = Sha256::new();
        h.update(key.as_bytes());
        for &t in self.tokens {
            h.update(t.to_le_bytes());
        }
        h
    }
}

#[inline]
fn digest_to_unit(prefix: Sha256, token_id: u32) -> f64 {
    let mut h = prefix;
    h.update(token_id.to_le_bytes());
    let digest = h.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    let x53 = u64::from_be_bytes(head) >> 11;
    (x53 as f64 + 0.5) / (1u64 << 53) as f64
}

/// The pseudorandom uniform attached to `token_id` in the given context.
pub fn prf_uniform(key: &Key, window: &WindowCtx<'_>, token_id: u32) -> Result<f64> {
    if token_id as usize >= window.vocab_size {
        return invalid(format!(
            "token id {token_id} >= vocab size {}",
            window.vocab_size
        ));
    }
    Ok(digest_to_unit(window.prefix_hasher(key), token_id))
}

/// All `vocab_size` uniforms for one context; entry `w` is `prf_uniform(key, window, w)`.
pub fn prf_vector(key: &Key, window: &WindowCtx<'_>, vocab_size: usize) -> Result<Vec<f64>> {
    if vocab_size < 2 {
        return invalid(format!("vocab size must be >= 2, got {vocab_size}"));
    }
    if vocab_size != window.vocab_size {
        return invalid(format!(
            "vocab size {vocab_size} disagrees with window vocab {}",
            window.vocab_size
        ));
    }
    let prefix = window.prefix_hasher(key);
    Ok((0..vocab_size as u32)
        .map(|w| digest_to_unit(prefix.clone(), w))
        .collect())
}
