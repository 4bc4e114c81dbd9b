//! Lossless backends available to the codec and the container.

use std::io::{Read, Write};

use deepsz_core::lossless::{LosslessBackend, LosslessError};

pub const DEFLATE_TAG: u8 = 1;
pub const ZSTD_TAG: u8 = 2;

/// Raw DEFLATE stream (no zlib or gzip framing) at the best compression level.
#[derive(Debug, Default, Clone, Copy)]
pub struct Deflate;

/// Zstandard frame at level 19.
#[derive(Debug, Default, Clone, Copy)]
pub struct Zstd;

const ZSTD_LEVEL: i32 = 19;

fn backend_err(name: &'static str, e: std::io::Error) -> LosslessError {
    LosslessError::Backend { name, message: e.to_string() }
}

impl LosslessBackend for Deflate {
    fn tag(&self) -> u8 {
        DEFLATE_TAG
    }

    fn name(&self) -> &'static str {
        "deflate"
    }

    fn encode(&self, input: &[u8]) -> Result<Vec<u8>, LosslessError> {
        let mut enc = flate2::write::DeflateEncoder::new(Vec::new(), flate2::Compression::best());
        enc.write_all(input).map_err(|e| backend_err("deflate", e))?;
        enc.finish().map_err(|e| backend_err("deflate", e))
    }

    fn decode(&self, input: &[u8]) -> Result<Vec<u8>, LosslessError> {
        let mut out = Vec::new();
        flate2::read::DeflateDecoder::new(input)
            .read_to_end(&mut out)
            .map_err(|e| backend_err("deflate", e))?;
        Ok(out)
    }
}

impl LosslessBackend for Zstd {
    fn tag(&self) -> u8 {
        ZSTD_TAG
    }

    fn name(&self) -> &'static str {
        "zstd"
    }

    fn encode(&self, input: &[u8]) -> Result<Vec<u8>, LosslessError> {
        zstd::bulk::compress(input, ZSTD_LEVEL).map_err(|e| backend_err("zstd", e))
    }

    fn decode(&self, input: &[u8]) -> Result<Vec<u8>, LosslessError> {
        zstd::stream::decode_all(input).map_err(|e| backend_err("zstd", e))
    }
}

/// Every backend this crate ships, in tag order.
pub fn all() -> [&'static dyn LosslessBackend; 2] {
    [&Deflate, &Zstd]
}
