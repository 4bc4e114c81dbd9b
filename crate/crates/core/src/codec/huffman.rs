//! Canonical Huffman coding of quantization codes.
//!
//! The table is serialized as `(u32 symbol, u8 code length)` pairs in
//! ascending symbol order; canonical codes are assigned in `(length, symbol)`
//! order, so the lengths alone fully determine the bitstream.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use super::bits::{BitReader, BitWriter};
use super::CodecError;

/// Longest code length accepted by the decoder.
pub const MAX_CODE_LEN: u8 = 64;

const ENTRY_LEN: usize = 5;

/// Code length table: `(symbol, length)` sorted by symbol.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HuffmanTable {
    entries: Vec<(u32, u8)>,
}

impl HuffmanTable {
    /// Builds code lengths from symbol frequencies.
    ///
    /// Merges always take the two lightest nodes, ties going to the node with
    /// the lower symbol id (internal nodes sort after every leaf, in creation
    /// order). A single-symbol alphabet gets a 1-bit code.
    pub fn from_frequencies(freqs: &BTreeMap<u32, u64>) -> Self {
        match freqs.len() {
            0 => return Self::default(),
            1 => {
                let (&sym, _) = freqs.iter().next().unwrap();
                return Self { entries: vec![(sym, 1)] };
            }
            _ => {}
        }

        let symbols: Vec<u32> = freqs.keys().copied().collect();
        let leaves = symbols.len();
        // parent[i] for every node; leaves first, internal nodes appended
        let mut parent: Vec<usize> = vec![usize::MAX; leaves];
        let mut heap = BinaryHeap::with_capacity(leaves);
        for (i, (&sym, &w)) in freqs.iter().enumerate() {
            heap.push(Reverse((w, u64::from(sym), i)));
        }
        let mut next_order = u64::from(u32::MAX) + 1;
        while heap.len() > 1 {
            let Reverse((w1, _, a)) = heap.pop().unwrap();
            let Reverse((w2, _, b)) = heap.pop().unwrap();
            let node = parent.len();
            parent.push(usize::MAX);
            parent[a] = node;
            parent[b] = node;
            heap.push(Reverse((w1 + w2, next_order, node)));
            next_order += 1;
        }

        // depth of a node = depth(parent) + 1; parents always have larger ids
        let mut depth = vec![0u32; parent.len()];
        for node in (0..parent.len()).rev() {
            if parent[node] != usize::MAX {
                depth[node] = depth[parent[node]] + 1;
            }
        }
        let entries = symbols
            .iter()
            .enumerate()
            .map(|(i, &s)| (s, depth[i] as u8))
            .collect();
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(symbol, code length)` pairs sorted by symbol.
    pub fn entries(&self) -> &[(u32, u8)] {
        &self.entries
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.entries.len() * ENTRY_LEN);
        for &(sym, len) in &self.entries {
            out.extend_from_slice(&sym.to_le_bytes());
            out.push(len);
        }
        out
    }

    /// Parses and validates a serialized table.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        if !bytes.len().is_multiple_of(ENTRY_LEN) {
            return Err(CodecError::InvalidTable("length is not a multiple of 5"));
        }
        let entries: Vec<(u32, u8)> = bytes
            .chunks_exact(ENTRY_LEN)
            .map(|c| (u32::from_le_bytes([c[0], c[1], c[2], c[3]]), c[4]))
            .collect();
        let table = Self { entries };
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<(), CodecError> {
        if self.entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(CodecError::InvalidTable("symbols not strictly increasing"));
        }
        if self
            .entries
            .iter()
            .any(|&(_, len)| len == 0 || len > MAX_CODE_LEN)
        {
            return Err(CodecError::InvalidTable("code length out of range"));
        }
        // Kraft sum, scaled by 2^MAX_CODE_LEN, must not exceed 1.
        let mut kraft: u128 = 0;
        for &(_, len) in &self.entries {
            kraft += 1u128 << (MAX_CODE_LEN - len);
        }
        if kraft > 1u128 << MAX_CODE_LEN {
            return Err(CodecError::InvalidTable("code lengths oversubscribed"));
        }
        Ok(())
    }

    /// Canonical `(symbol, code, length)` assignments in code order.
    fn canonical(&self) -> Vec<(u32, u64, u8)> {
        let mut order: Vec<(u8, u32)> = self.entries.iter().map(|&(s, l)| (l, s)).collect();
        order.sort_unstable();
        let mut out = Vec::with_capacity(order.len());
        let mut code: u64 = 0;
        let mut prev_len = 0u8;
        for (i, &(len, sym)) in order.iter().enumerate() {
            if i > 0 {
                code = code.wrapping_add(1);
            }
            code <<= u32::from(len - prev_len);
            prev_len = len;
            out.push((sym, code, len));
        }
        out
    }
}

/// Encodes `codes` with a canonical Huffman code built from their
/// frequencies. Returns the table, payload bytes and exact bit count.
pub fn entropy_encode(codes: &[u32]) -> (HuffmanTable, Vec<u8>, u64) {
    let mut freqs = BTreeMap::new();
    for &c in codes {
        *freqs.entry(c).or_insert(0u64) += 1;
    }
    let table = HuffmanTable::from_frequencies(&freqs);
    let book: BTreeMap<u32, (u64, u8)> = table
        .canonical()
        .into_iter()
        .map(|(s, code, len)| (s, (code, len)))
        .collect();

    let mut w = BitWriter::new();
    // Dense lookup is much faster than the map for the common small alphabet.
    let max_sym = book.keys().next_back().copied().unwrap_or(0) as usize;
    if max_sym <= 1 << 20 {
        let mut dense = vec![(0u64, 0u8); max_sym + 1];
        for (&s, &c) in &book {
            dense[s as usize] = c;
        }
        for &c in codes {
            let (code, len) = dense[c as usize];
            w.write(code, u32::from(len));
        }
    } else {
        for c in codes {
            let (code, len) = book[c];
            w.write(code, u32::from(len));
        }
    }
    let (payload, bits) = w.finish();
    (table, payload, bits)
}

/// Decodes exactly `count` symbols, consuming exactly `bit_count` bits.
pub fn entropy_decode(
    table: &HuffmanTable,
    payload: &[u8],
    bit_count: u64,
    count: usize,
) -> Result<Vec<u32>, CodecError> {
    if count == 0 {
        if bit_count != 0 {
            return Err(CodecError::Corrupt("payload present for empty stream"));
        }
        return Ok(Vec::new());
    }
    if table.is_empty() {
        return Err(CodecError::InvalidTable("empty table for non-empty stream"));
    }
    if (payload.len() as u64) * 8 < bit_count {
        return Err(CodecError::Truncated);
    }

    // first code and first sorted index per length
    let canon = table.canonical();
    let max_len = canon.iter().map(|c| c.2).max().unwrap_or(0) as usize;
    let mut first_code = vec![0u64; max_len + 1];
    let mut first_index = vec![0usize; max_len + 1];
    let mut count_at = vec![0u64; max_len + 1];
    for (i, &(_, code, len)) in canon.iter().enumerate().rev() {
        let l = len as usize;
        first_code[l] = code;
        first_index[l] = i;
        count_at[l] += 1;
    }
    let symbols: Vec<u32> = canon.iter().map(|c| c.0).collect();

    let mut reader = BitReader::new(payload, bit_count);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut code = 0u64;
        let mut len = 0usize;
        loop {
            let bit = reader.read_bit().ok_or(CodecError::Truncated)?;
            code = (code << 1) | bit;
            len += 1;
            let n = count_at[len];
            if n > 0 && code >= first_code[len] && code - first_code[len] < n {
                out.push(symbols[first_index[len] + (code - first_code[len]) as usize]);
                break;
            }
            if len == max_len {
                return Err(CodecError::InvalidCode);
            }
        }
    }
    if reader.position() != bit_count {
        return Err(CodecError::Corrupt("trailing payload bits"));
    }
    Ok(out)
}
