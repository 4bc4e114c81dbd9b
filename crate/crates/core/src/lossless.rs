//! Pluggable lossless backends and best-of selection.
//!
//! The core crate only knows the raw passthrough (tag 0); real compressors
//! are registered by callers as [`LosslessBackend`] trait objects.

use alloc::string::String;
use alloc::vec::Vec;

/// Tag of the "stored as-is" backend.
pub const RAW_TAG: u8 = 0;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LosslessError {
    #[error("unknown lossless backend tag {0}")]
    UnknownTag(u8),
    #[error("lossless backend {name} failed: {message}")]
    Backend { name: &'static str, message: String },
}

/// A byte-oriented lossless compressor identified by a one-byte tag.
///
/// `decode(encode(x)) == x` must hold for every byte string.
pub trait LosslessBackend: Sync {
    fn tag(&self) -> u8;
    fn name(&self) -> &'static str;
    fn encode(&self, input: &[u8]) -> Result<Vec<u8>, LosslessError>;
    fn decode(&self, input: &[u8]) -> Result<Vec<u8>, LosslessError>;
}

/// Compresses `bytes` with every backend and keeps the smallest output.
///
/// Raw storage (tag 0) competes too and wins ties, so the result is never
/// larger than the input. Failing backends are skipped.
pub fn select_lossless(bytes: &[u8], backends: &[&dyn LosslessBackend]) -> (u8, Vec<u8>) {
    let mut best: Option<(u8, Vec<u8>)> = None;
    for backend in backends {
        if backend.tag() == RAW_TAG {
            continue;
        }
        let Ok(encoded) = backend.encode(bytes) else {
            continue;
        };
        let better = match &best {
            None => encoded.len() < bytes.len(),
            Some((tag, b)) => {
                encoded.len() < b.len() || (encoded.len() == b.len() && backend.tag() < *tag)
            }
        };
        if better {
            best = Some((backend.tag(), encoded));
        }
    }
    best.unwrap_or_else(|| (RAW_TAG, bytes.to_vec()))
}

/// Inverse of [`select_lossless`].
pub fn decode_lossless(
    tag: u8,
    bytes: &[u8],
    backends: &[&dyn LosslessBackend],
) -> Result<Vec<u8>, LosslessError> {
    if tag == RAW_TAG {
        return Ok(bytes.to_vec());
    }
    backends
        .iter()
        .find(|b| b.tag() == tag)
        .ok_or(LosslessError::UnknownTag(tag))?
        .decode(bytes)
}
