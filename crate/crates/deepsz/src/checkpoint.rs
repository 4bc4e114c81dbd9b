//! Binary formats for networks, masks and sparse layers.
//!
//! Network checkpoint (little-endian): magic `DSZN`, u16 version, u16
//! layer_count, then per layer u32 out_dim, u32 in_dim, u8 activation
//! (0 = relu, 1 = identity), row-major f32 weights, f32 biases.

use std::path::Path;

use deepsz_core::netmodel::{Activation, DenseLayer, Mask, Matrix, Network};
use deepsz_core::pruner::PrunedLayer;

use crate::{Error, FormatError};

pub const NETWORK_MAGIC: [u8; 4] = *b"DSZN";
pub const NETWORK_VERSION: u16 = 1;
pub const MASK_MAGIC: [u8; 4] = *b"DSZM";
pub const SPARSE_MAGIC: [u8; 4] = *b"DSZS";

/// Little-endian cursor shared by the binary formats in this crate.
pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).ok_or(FormatError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(FormatError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32s(&mut self, n: usize) -> Result<Vec<f32>, FormatError> {
        let raw = self.take(n.checked_mul(4).ok_or(FormatError::Truncated)?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    pub(crate) fn magic(&mut self, expected: [u8; 4]) -> Result<(), FormatError> {
        if self.take(4)? != expected {
            return Err(FormatError::BadMagic);
        }
        Ok(())
    }

    pub(crate) fn finish(&self) -> Result<(), FormatError> {
        if self.pos != self.bytes.len() {
            return Err(FormatError::TrailingBytes(self.bytes.len() - self.pos));
        }
        Ok(())
    }
}

pub(crate) fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn network_to_bytes(net: &Network) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + net.parameter_count() * 4 + net.layers().len() * 9);
    out.extend_from_slice(&NETWORK_MAGIC);
    out.extend_from_slice(&NETWORK_VERSION.to_le_bytes());
    out.extend_from_slice(&(net.layers().len() as u16).to_le_bytes());
    for l in net.layers() {
        out.extend_from_slice(&(l.out_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(l.in_dim() as u32).to_le_bytes());
        out.push(l.activation.to_u8());
        put_f32s(&mut out, l.weights.as_slice());
        put_f32s(&mut out, &l.bias);
    }
    out
}

pub fn network_from_bytes(bytes: &[u8]) -> Result<Network, FormatError> {
    let mut c = Cursor::new(bytes);
    c.magic(NETWORK_MAGIC)?;
    let version = c.u16()?;
    if version != NETWORK_VERSION {
        return Err(FormatError::Version(version));
    }
    let count = c.u16()? as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let out = c.u32()? as usize;
        let inp = c.u32()? as usize;
        let act = Activation::from_u8(c.u8()?).ok_or(FormatError::Invalid("activation tag"))?;
        let w = c.f32s(out.checked_mul(inp).ok_or(FormatError::Truncated)?)?;
        let b = c.f32s(out)?;
        layers.push(DenseLayer::new(Matrix::from_vec(out, inp, w)?, b, act)?);
    }
    c.finish()?;
    Ok(Network::new(layers)?)
}

pub fn save_network(path: &Path, net: &Network) -> Result<(), Error> {
    write_file(path, &network_to_bytes(net))
}

pub fn load_network(path: &Path) -> Result<Network, Error> {
    let bytes = read_file(path)?;
    network_from_bytes(&bytes).map_err(|e| Error::format(path, e))
}

/// Masks: magic `DSZM`, u16 count, per mask u32 rows, u32 cols, then the
/// keep bits packed LSB-first.
pub fn masks_to_bytes(masks: &[Mask]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MASK_MAGIC);
    out.extend_from_slice(&(masks.len() as u16).to_le_bytes());
    for m in masks {
        out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for chunk in m.as_slice().chunks(8) {
            let byte = chunk.iter().enumerate().fold(0u8, |acc, (i, &k)| acc | (u8::from(k) << i));
            out.push(byte);
        }
    }
    out
}

pub fn masks_from_bytes(bytes: &[u8]) -> Result<Vec<Mask>, FormatError> {
    let mut c = Cursor::new(bytes);
    c.magic(MASK_MAGIC)?;
    let count = c.u16()? as usize;
    let mut masks = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = c.u32()? as usize;
        let cols = c.u32()? as usize;
        let n = rows.checked_mul(cols).ok_or(FormatError::Truncated)?;
        let packed = c.take(n.div_ceil(8))?;
        let keep = (0..n).map(|i| packed[i / 8] >> (i % 8) & 1 == 1).collect();
        masks.push(Mask::new(rows, cols, keep)?);
    }
    c.finish()?;
    Ok(masks)
}

/// Sparse layer: magic `DSZS`, u32 out_dim, u32 in_dim, u32 nnz_true,
/// u32 entry count, index bytes, f32 data.
pub fn sparse_to_bytes(layer: &PrunedLayer) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + layer.payload_bytes());
    out.extend_from_slice(&SPARSE_MAGIC);
    for v in [layer.out_dim, layer.in_dim, layer.nnz_true, layer.len()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&layer.index);
    put_f32s(&mut out, &layer.data);
    out
}

pub fn sparse_from_bytes(bytes: &[u8]) -> Result<PrunedLayer, FormatError> {
    let mut c = Cursor::new(bytes);
    c.magic(SPARSE_MAGIC)?;
    let out_dim = c.u32()? as usize;
    let in_dim = c.u32()? as usize;
    let nnz_true = c.u32()? as usize;
    let len = c.u32()? as usize;
    if nnz_true > len {
        return Err(FormatError::Invalid("nnz exceeds entry count"));
    }
    let index = c.take(len)?.to_vec();
    let data = c.f32s(len)?;
    c.finish()?;
    Ok(PrunedLayer { out_dim, in_dim, data, index, nnz_true })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, Error> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}
