//! IDX (MNIST) reader.
//!
//! Layout is big-endian: u32 magic (`0x00000803` images, `0x00000801`
//! labels), one u32 per dimension, then raw `u8` samples.

use std::path::Path;

use deepsz_core::netmodel::Dataset;

use crate::Error;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("bad IDX magic {found:#010x}, expected {expected:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("IDX file truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {0} out of range")]
    BadLabel(u8),
}

fn header(bytes: &[u8], magic: u32, dims: usize) -> Result<Vec<usize>, IdxError> {
    let need = 4 + 4 * dims;
    if bytes.len() < need {
        return Err(IdxError::Truncated { needed: need, have: bytes.len() });
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    if word(0) != magic {
        return Err(IdxError::BadMagic { expected: magic, found: word(0) });
    }
    Ok((1..=dims).map(|i| word(i) as usize).collect())
}

/// Parses an image file and a label file already in memory.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset, IdxError> {
    let d = header(images, IMAGE_MAGIC, 3)?;
    let (count, dim) = (d[0], d[1] * d[2]);
    let body = &images[16..];
    if body.len() < count * dim {
        return Err(IdxError::Truncated { needed: 16 + count * dim, have: images.len() });
    }
    let l = header(labels, LABEL_MAGIC, 1)?;
    let lbody = &labels[8..];
    if lbody.len() < l[0] {
        return Err(IdxError::Truncated { needed: 8 + l[0], have: labels.len() });
    }
    if l[0] != count {
        return Err(IdxError::CountMismatch { images: count, labels: l[0] });
    }
    let labels = lbody[..count].to_vec();
    if let Some(&bad) = labels.iter().find(|&&v| v > 9) {
        return Err(IdxError::BadLabel(bad));
    }
    let pixels = body[..count * dim].iter().map(|&p| f32::from(p) / 255.0).collect();
    Dataset::new(dim.max(1), pixels, labels).map_err(|_| IdxError::CountMismatch { images: count, labels: count })
}

/// Loads an IDX image/label file pair, scaling pixels by 1/255.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, Error> {
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    Ok(parse_idx(&images, &labels)?)
}

/// Serializes a dataset back to IDX bytes (pixels re-quantized to `u8`).
pub fn to_idx(data: &Dataset, rows: u32, cols: u32) -> (Vec<u8>, Vec<u8>) {
    let mut images = Vec::with_capacity(16 + data.images().len());
    images.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    images.extend_from_slice(&(data.len() as u32).to_be_bytes());
    images.extend_from_slice(&rows.to_be_bytes());
    images.extend_from_slice(&cols.to_be_bytes());
    images.extend(data.images().iter().map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8));
    let mut labels = Vec::with_capacity(8 + data.len());
    labels.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(data.len() as u32).to_be_bytes());
    labels.extend_from_slice(data.labels());
    (images, labels)
}
