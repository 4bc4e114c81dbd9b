//! Magnitude pruning and the dual-array sparse layer format.
//!
//! A pruned layer is stored as a data array of `f32` values and an index
//! array of `u8` gaps between consecutive stored positions (row-major,
//! starting from position -1). Gaps larger than 255 are bridged with filler
//! entries: gap 255, value 0.0. Each stored entry costs 40 bits.

use alloc::vec::Vec;

use crate::netmodel::{Dataset, Mask, Matrix, NetError, Network, TrainConfig};

/// Largest gap an index byte can hold; also the span of one filler entry.
pub const MAX_GAP: usize = 255;

/// Serialized bits per stored entry (8 index + 32 value).
pub const BITS_PER_ENTRY: usize = 40;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PruneError {
    #[error("keep ratio must be in (0, 1], got {0}")]
    InvalidKeepRatio(f64),
    #[error("prune spec has {got} ratios for {expected} layers")]
    SpecMismatch { expected: usize, got: usize },
    #[error("data array has {data} entries but index array has {index}")]
    LengthMismatch { data: usize, index: usize },
    #[error("zero gap at entry {0}")]
    ZeroGap(usize),
    #[error("cumulative position {position} overflows a {rows}x{cols} matrix")]
    PositionOverflow { position: usize, rows: usize, cols: usize },
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Per-layer fraction of weights to keep.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneSpec {
    pub keep_ratios: Vec<f64>,
}

impl PruneSpec {
    pub fn new(keep_ratios: Vec<f64>) -> Result<Self, PruneError> {
        if let Some(&r) = keep_ratios.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
            return Err(PruneError::InvalidKeepRatio(r));
        }
        Ok(Self { keep_ratios })
    }
}

/// Number of weights kept out of `count` at `keep_ratio` (ceiling).
pub fn keep_count(count: usize, keep_ratio: f64) -> usize {
    let exact = keep_ratio * count as f64;
    // shave representation error so 0.08 * 235200 stays 18816
    let k = libm::ceil(exact - exact * 1e-12) as usize;
    k.clamp(usize::from(count > 0), count)
}

/// Keeps the `⌈keep_ratio·n⌉` largest-magnitude weights; ties at the
/// threshold go to the earlier row-major position.
pub fn magnitude_mask(weights: &Matrix, keep_ratio: f64) -> Result<Mask, PruneError> {
    if !(keep_ratio > 0.0 && keep_ratio <= 1.0) {
        return Err(PruneError::InvalidKeepRatio(keep_ratio));
    }
    let w = weights.as_slice();
    let k = keep_count(w.len(), keep_ratio);
    let mut keep = alloc::vec![false; w.len()];
    if k == w.len() {
        keep.iter_mut().for_each(|b| *b = true);
    } else {
        let mut order: Vec<u32> = (0..w.len() as u32).collect();
        let by_magnitude = |a: &u32, b: &u32| {
            w[*b as usize]
                .abs()
                .total_cmp(&w[*a as usize].abs())
                .then(a.cmp(b))
        };
        if k > 0 {
            order.select_nth_unstable_by(k - 1, by_magnitude);
        }
        for &i in &order[..k] {
            keep[i as usize] = true;
        }
    }
    Ok(Mask::new(weights.rows(), weights.cols(), keep)?)
}

/// Dual-array sparse form of one FC weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedLayer {
    pub out_dim: usize,
    pub in_dim: usize,
    pub data: Vec<f32>,
    pub index: Vec<u8>,
    /// Stored entries that are real weights rather than fillers.
    pub nnz_true: usize,
}

impl PrunedLayer {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn filler_count(&self) -> usize {
        self.data.len() - self.nnz_true
    }

    /// Bytes for the two arrays: 40 bits per stored entry.
    pub fn payload_bytes(&self) -> usize {
        self.data.len() * BITS_PER_ENTRY / 8
    }

    /// Same layer with its data array swapped (e.g. after lossy decoding).
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self, PruneError> {
        if data.len() != self.index.len() {
            return Err(PruneError::LengthMismatch { data: data.len(), index: self.index.len() });
        }
        Ok(Self { data, ..self.clone() })
    }
}

/// Encodes every nonzero of `weights` (row-major) as value + gap.
pub fn to_sparse(weights: &Matrix) -> PrunedLayer {
    let mut data = Vec::new();
    let mut index = Vec::new();
    let mut nnz_true = 0;
    let mut prev: isize = -1;
    for (p, &v) in weights.as_slice().iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let p = p as isize;
        while p - prev > MAX_GAP as isize {
            data.push(0.0);
            index.push(MAX_GAP as u8);
            prev += MAX_GAP as isize;
        }
        data.push(v);
        index.push((p - prev) as u8);
        prev = p;
        nnz_true += 1;
    }
    PrunedLayer { out_dim: weights.rows(), in_dim: weights.cols(), data, index, nnz_true }
}

/// Rebuilds the dense matrix, depositing every stored value (fillers
/// included) at its cumulative position.
pub fn from_sparse(layer: &PrunedLayer) -> Result<Matrix, PruneError> {
    if layer.data.len() != layer.index.len() {
        return Err(PruneError::LengthMismatch { data: layer.data.len(), index: layer.index.len() });
    }
    let cells = layer.out_dim * layer.in_dim;
    let mut out = Matrix::zeros(layer.out_dim, layer.in_dim);
    let dense = out.as_mut_slice();
    let mut prev: isize = -1;
    for (i, (&v, &gap)) in layer.data.iter().zip(&layer.index).enumerate() {
        if gap == 0 {
            return Err(PruneError::ZeroGap(i));
        }
        let pos = prev + isize::from(gap);
        if pos as usize >= cells {
            return Err(PruneError::PositionOverflow {
                position: pos as usize,
                rows: layer.out_dim,
                cols: layer.in_dim,
            });
        }
        dense[pos as usize] = v;
        prev = pos;
    }
    Ok(out)
}

/// Applies magnitude masks to every layer and retrains with them.
///
/// Returns the retrained network (pruned weights exactly zero) and the masks.
pub fn prune_network(
    net: &Network,
    spec: &PruneSpec,
    train_set: &Dataset,
    retrain: &TrainConfig,
    on_epoch: impl FnMut(usize, f64),
) -> Result<(Network, Vec<Mask>), PruneError> {
    if spec.keep_ratios.len() != net.layers().len() {
        return Err(PruneError::SpecMismatch { expected: net.layers().len(), got: spec.keep_ratios.len() });
    }
    let mut pruned = net.clone();
    let mut masks = Vec::with_capacity(spec.keep_ratios.len());
    for (i, &ratio) in spec.keep_ratios.iter().enumerate() {
        let mask = magnitude_mask(&net.layer(i).weights, ratio)?;
        let mut w = net.layer(i).weights.clone();
        mask.apply(&mut w);
        pruned.replace_weights(i, w)?;
        masks.push(mask);
    }
    let retrained = if retrain.epochs > 0 {
        crate::netmodel::train_sgd(&pruned, train_set, retrain, Some(&masks), on_epoch)?
    } else {
        pruned
    };
    Ok((retrained, masks))
}
