//! Error-bounded lossy compressor for 1-D arrays of `f32`.
//!
//! Stages: previous-value prediction and linear-scaling quantization
//! ([`predict_quantize`]), canonical Huffman coding of the codes
//! ([`entropy_encode`]), then an optional best-of lossless pass over the
//! Huffman payload.
//!
//! Every non-escaped value decompresses to within `eb` of its input; escaped
//! values are stored bit-exactly.

mod bits;
mod block;
pub mod huffman;
mod quantize;

use alloc::vec::Vec;

pub use block::{CompressedBlock, BLOCK_MAGIC};
pub use huffman::{entropy_decode, entropy_encode, HuffmanTable};
pub use quantize::{dequantize, predict_quantize, Escape, QuantStream, Quantized, ESCAPE_CODE};

use crate::lossless::{decode_lossless, select_lossless, LosslessBackend, LosslessError, RAW_TAG};

/// Quantization capacity used unless configured otherwise.
pub const DEFAULT_QUANT_BINS: u32 = 65_536;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CodecError {
    #[error("error bound must be finite and positive, got {0}")]
    InvalidErrorBound(f64),
    #[error("quantization bin count must be even and >= 4, got {0}")]
    InvalidQuantBins(u32),
    #[error("non-finite value at position {position}")]
    NonFinite { position: usize },
    #[error("array of {0} elements exceeds the u32 element count")]
    TooLarge(usize),
    #[error("invalid Huffman table: {0}")]
    InvalidTable(&'static str),
    #[error("invalid Huffman code in payload")]
    InvalidCode,
    #[error("truncated input")]
    Truncated,
    #[error("bad block magic")]
    BadMagic,
    #[error("corrupt block: {0}")]
    Corrupt(&'static str),
    #[error(transparent)]
    Lossless(#[from] LosslessError),
}

/// Runs the full compression pipeline.
///
/// `backends` are the candidates for the post-Huffman pass; pass an empty
/// slice to always store the payload raw.
pub fn compress(
    values: &[f32],
    eb: f64,
    quant_bins: u32,
    backends: &[&dyn LosslessBackend],
) -> Result<CompressedBlock, CodecError> {
    let q = predict_quantize(values, eb, quant_bins)?;
    let (table, payload, payload_bit_count) = entropy_encode(&q.stream.codes);
    let (post_lossless_tag, payload) = if payload.is_empty() {
        (RAW_TAG, payload)
    } else {
        select_lossless(&payload, backends)
    };
    Ok(CompressedBlock {
        element_count: values.len() as u32,
        error_bound: eb,
        quant_bins,
        post_lossless_tag,
        huffman_table: table,
        escapes: q.escapes,
        payload_bit_count,
        payload,
    })
}

/// Reconstructs the array stored in `block`.
pub fn decompress(
    block: &CompressedBlock,
    backends: &[&dyn LosslessBackend],
) -> Result<Vec<f32>, CodecError> {
    quantize::check_params(block.error_bound, block.quant_bins)?;
    let payload = decode_lossless(block.post_lossless_tag, &block.payload, backends)?;
    if payload.len() as u64 != block.payload_bit_count.div_ceil(8) {
        return Err(CodecError::Corrupt("payload length does not match bit count"));
    }
    if block
        .huffman_table
        .entries()
        .iter()
        .any(|&(s, _)| s >= block.quant_bins)
    {
        return Err(CodecError::Corrupt("table symbol outside quantization range"));
    }
    let codes = entropy_decode(
        &block.huffman_table,
        &payload,
        block.payload_bit_count,
        block.element_count as usize,
    )?;
    let stream = QuantStream { codes, quant_bins: block.quant_bins };
    dequantize(&stream, &block.escapes, block.error_bound)
}

/// Compresses and serializes in one step; convenience for size probes.
pub fn compress_to_bytes(
    values: &[f32],
    eb: f64,
    quant_bins: u32,
    backends: &[&dyn LosslessBackend],
) -> Result<Vec<u8>, CodecError> {
    Ok(compress(values, eb, quant_bins, backends)?.to_bytes())
}

/// Parses and decompresses a serialized block.
pub fn decompress_bytes(
    bytes: &[u8],
    backends: &[&dyn LosslessBackend],
) -> Result<Vec<f32>, CodecError> {
    decompress(&CompressedBlock::from_bytes(bytes)?, backends)
}
