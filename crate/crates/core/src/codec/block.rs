use alloc::vec::Vec;

use super::huffman::HuffmanTable;
use super::quantize::Escape;
use super::CodecError;

pub const BLOCK_MAGIC: [u8; 4] = *b"SZB1";

/// Serialized output of the lossy codec for one array.
///
/// Wire layout (little-endian): magic `SZB1`, u32 element_count,
/// f64 error_bound, u32 quant_bins, u8 post_lossless_tag,
/// u32 table_len + table bytes, u32 escape_count + (u32 position,
/// u32 raw bits) pairs, u64 payload_bit_count, then the payload bytes, which
/// run to the end of the block.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedBlock {
    pub element_count: u32,
    pub error_bound: f64,
    pub quant_bins: u32,
    pub post_lossless_tag: u8,
    pub huffman_table: HuffmanTable,
    pub escapes: Vec<Escape>,
    /// Exact length of the Huffman bitstream before the lossless pass.
    pub payload_bit_count: u64,
    /// Payload as stored, i.e. after the lossless pass when the tag is set.
    pub payload: Vec<u8>,
}

impl CompressedBlock {
    pub fn to_bytes(&self) -> Vec<u8> {
        let table = self.huffman_table.to_bytes();
        let mut out = Vec::with_capacity(
            4 + 4 + 8 + 4 + 1 + 4 + table.len() + 4 + 8 * self.escapes.len() + 8 + self.payload.len(),
        );
        out.extend_from_slice(&BLOCK_MAGIC);
        out.extend_from_slice(&self.element_count.to_le_bytes());
        out.extend_from_slice(&self.error_bound.to_le_bytes());
        out.extend_from_slice(&self.quant_bins.to_le_bytes());
        out.push(self.post_lossless_tag);
        out.extend_from_slice(&(table.len() as u32).to_le_bytes());
        out.extend_from_slice(&table);
        out.extend_from_slice(&(self.escapes.len() as u32).to_le_bytes());
        for e in &self.escapes {
            out.extend_from_slice(&e.position.to_le_bytes());
            out.extend_from_slice(&e.raw_bits.to_le_bytes());
        }
        out.extend_from_slice(&self.payload_bit_count.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != BLOCK_MAGIC {
            return Err(CodecError::BadMagic);
        }
        let element_count = r.u32()?;
        let error_bound = f64::from_le_bytes(r.array()?);
        let quant_bins = r.u32()?;
        let post_lossless_tag = r.take(1)?[0];
        let table_len = r.u32()? as usize;
        let huffman_table = HuffmanTable::from_bytes(r.take(table_len)?)?;
        let escape_count = r.u32()? as usize;
        if escape_count > element_count as usize {
            return Err(CodecError::Corrupt("more escapes than elements"));
        }
        let raw = r.take(escape_count.checked_mul(8).ok_or(CodecError::Truncated)?)?;
        let escapes = raw
            .chunks_exact(8)
            .map(|c| Escape {
                position: u32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                raw_bits: u32::from_le_bytes([c[4], c[5], c[6], c[7]]),
            })
            .collect();
        let payload_bit_count = u64::from_le_bytes(r.array()?);
        let payload = r.rest().to_vec();
        if post_lossless_tag == 0 && payload.len() as u64 != payload_bit_count.div_ceil(8) {
            return Err(CodecError::Truncated);
        }
        Ok(Self {
            element_count,
            error_bound,
            quant_bins,
            post_lossless_tag,
            huffman_table,
            escapes,
            payload_bit_count,
            payload,
        })
    }

    /// Serialized size in bytes.
    pub fn serialized_len(&self) -> usize {
        4 + 4 + 8 + 4 + 1 + 4 + 5 * self.huffman_table.len() + 4 + 8 * self.escapes.len() + 8 + self.payload.len()
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self.pos.checked_add(n).ok_or(CodecError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(CodecError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn rest(&mut self) -> &'a [u8] {
        let s = &self.bytes[self.pos..];
        self.pos = self.bytes.len();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::compress;

    #[test]
    fn layout_matches_field_offsets() {
        let block = compress(&[1.0, 1.0, 30.0], 0.5, 8, &[]).unwrap();
        let bytes = block.to_bytes();
        assert_eq!(&bytes[..4], b"SZB1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(bytes[8..16].try_into().unwrap()), 0.5);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 8);
        assert_eq!(bytes[20], 0);
        assert_eq!(bytes.len(), block.serialized_len());
        assert_eq!(CompressedBlock::from_bytes(&bytes).unwrap(), block);
    }

    #[test]
    fn corruption_is_detected() {
        let block = compress(&[0.1, 0.2, 0.3, 0.4], 0.01, 256, &[]).unwrap();
        let bytes = block.to_bytes();
        let mut bad = bytes.clone();
        bad[0] ^= 0xff;
        assert_eq!(CompressedBlock::from_bytes(&bad), Err(CodecError::BadMagic));
        for cut in [3, 10, 20, 30, bytes.len() - 1] {
            assert!(CompressedBlock::from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
        }
    }
}
