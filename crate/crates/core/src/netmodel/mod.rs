//! Minimal fully-connected network: forward pass, top-1 evaluation and
//! (masked) SGD training.
//!
//! Parameters are stored as `f32`; all arithmetic runs in `f64` through
//! [`ShadowNet`], a 64-bit working copy of the parameters.

mod shadow;
mod train;

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use shadow::{Gradients, ShadowLayer, ShadowNet};
pub use train::{train_sgd, TrainConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("network has no layers")]
    Empty,
    #[error("final layer must use the identity activation")]
    FinalActivation,
    #[error("non-finite parameter in layer {layer}")]
    NonFinite { layer: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u8, classes: usize },
    #[error("training diverged in epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Dense row-major `f32` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, NetError> {
        if data.len() != rows * cols {
            return Err(NetError::DimMismatch { expected: rows * cols, got: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f32) {
        self.data[row * self.cols + col] = value;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn to_u8(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Identity => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Identity),
            _ => None,
        }
    }

    #[inline]
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }
}

/// One fully-connected layer; `weights` is `out_dim × in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f32>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f32>, activation: Activation) -> Result<Self, NetError> {
        if bias.len() != weights.rows() {
            return Err(NetError::DimMismatch { expected: weights.rows(), got: bias.len() });
        }
        Ok(Self { weights, bias, activation })
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }
}

/// Keep-mask for one weight matrix (`true` = weight is trainable).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    keep: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, keep: Vec<bool>) -> Result<Self, NetError> {
        if keep.len() != rows * cols {
            return Err(NetError::DimMismatch { expected: rows * cols, got: keep.len() });
        }
        Ok(Self { rows, cols, keep })
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self { rows, cols, keep: vec![true; rows * cols] }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, keep: vec![false; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.keep
    }

    pub fn count_kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    /// Zeroes every masked-out entry of `m`.
    pub fn apply(&self, m: &mut Matrix) {
        for (w, &k) in m.as_mut_slice().iter_mut().zip(&self.keep) {
            if !k {
                *w = 0.0;
            }
        }
    }
}

/// Ordered stack of dense layers ending in an identity (logit) layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<DenseLayer>,
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self, NetError> {
        let last = layers.last().ok_or(NetError::Empty)?;
        if last.activation != Activation::Identity {
            return Err(NetError::FinalActivation);
        }
        for pair in layers.windows(2) {
            if pair[1].in_dim() != pair[0].out_dim() {
                return Err(NetError::DimMismatch { expected: pair[0].out_dim(), got: pair[1].in_dim() });
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.as_slice().iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(NetError::NonFinite { layer: i });
            }
        }
        Ok(Self { layers })
    }

    /// ReLU MLP with the given layer widths (`dims[0]` is the input size),
    /// uniform ±sqrt(6/(in+out)) weights and zero biases.
    pub fn mlp(dims: &[usize], seed: u64) -> Result<Self, NetError> {
        if dims.len() < 2 {
            return Err(NetError::Empty);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| {
                let (inp, out) = (d[0], d[1]);
                let limit = libm::sqrt(6.0 / (inp + out) as f64);
                let data = (0..inp * out)
                    .map(|_| rng.random_range(-limit..limit) as f32)
                    .collect();
                let activation = if i + 1 == n { Activation::Identity } else { Activation::Relu };
                DenseLayer {
                    weights: Matrix { rows: out, cols: inp, data },
                    bias: vec![0.0; out],
                    activation,
                }
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &DenseLayer {
        &self.layers[i]
    }

    /// Replaces the weights of layer `i`, returning the previous matrix.
    pub fn replace_weights(&mut self, i: usize, weights: Matrix) -> Result<Matrix, NetError> {
        let l = &mut self.layers[i];
        if weights.rows() != l.out_dim() || weights.cols() != l.in_dim() {
            return Err(NetError::DimMismatch { expected: l.weights.len(), got: weights.len() });
        }
        Ok(core::mem::replace(&mut l.weights, weights))
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Logits for a batch of rows (`batch.cols() == input_dim`).
    pub fn forward(&self, batch: &Matrix) -> Result<Logits, NetError> {
        if batch.cols() != self.input_dim() {
            return Err(NetError::DimMismatch { expected: self.input_dim(), got: batch.cols() });
        }
        let shadow = ShadowNet::from_network(self);
        let input: Vec<f64> = batch.as_slice().iter().map(|&v| f64::from(v)).collect();
        Ok(Logits {
            rows: batch.rows(),
            cols: self.output_dim(),
            data: shadow.forward(&input, batch.rows()),
        })
    }
}

/// Row-major `f64` network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Logits {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Images scaled to `[0, 1]` with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    images: Vec<f32>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(dim: usize, images: Vec<f32>, labels: Vec<u8>) -> Result<Self, NetError> {
        if dim == 0 || images.len() != dim * labels.len() {
            return Err(NetError::DimMismatch { expected: dim * labels.len(), got: images.len() });
        }
        Ok(Self { dim, images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn image(&self, i: usize) -> &[f32] {
        &self.images[i * self.dim..(i + 1) * self.dim]
    }

    pub fn images(&self) -> &[f32] {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// First `n` samples (or all of them).
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            dim: self.dim,
            images: self.images[..n * self.dim].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }
}

const EVAL_CHUNK: usize = 1000;

/// Number of samples whose argmax logit equals the label.
pub fn count_correct(net: &Network, data: &Dataset) -> Result<usize, NetError> {
    if data.dim() != net.input_dim() {
        return Err(NetError::DimMismatch { expected: net.input_dim(), got: data.dim() });
    }
    let shadow = ShadowNet::from_network(net);
    let classes = net.output_dim();
    let mut correct = 0;
    let mut input = Vec::with_capacity(EVAL_CHUNK * data.dim());
    for start in (0..data.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(data.len());
        input.clear();
        input.extend(data.images[start * data.dim..end * data.dim].iter().map(|&v| f64::from(v)));
        let logits = shadow.forward(&input, end - start);
        for (row, &label) in logits.chunks_exact(classes).zip(&data.labels[start..end]) {
            if argmax(row) == label as usize {
                correct += 1;
            }
        }
    }
    Ok(correct)
}

/// Top-1 accuracy as a fraction in `[0, 1]`; an empty dataset scores 0.
pub fn evaluate_top1(net: &Network, data: &Dataset) -> Result<f64, NetError> {
    if data.is_empty() {
        return Ok(0.0);
    }
    Ok(count_correct(net, data)? as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(rows: usize, cols: usize, w: &[f32], b: &[f32], act: Activation) -> DenseLayer {
        DenseLayer::new(Matrix::from_vec(rows, cols, w.to_vec()).unwrap(), b.to_vec(), act).unwrap()
    }

    #[test]
    fn relu_identity_layer() {
        // a relu layer followed by an identity pass-through
        let net = Network::new(vec![
            layer(2, 2, &[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0], Activation::Relu),
            layer(2, 2, &[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0], Activation::Identity),
        ])
        .unwrap();
        let out = net.forward(&Matrix::from_vec(1, 2, vec![1.0, -1.0]).unwrap()).unwrap();
        assert_eq!(out.data, [1.0, 0.0]);
    }

    #[test]
    fn zero_weights_output_bias() {
        let net = Network::new(vec![layer(3, 2, &[0.0; 6], &[0.5, -1.0, 2.0], Activation::Identity)]).unwrap();
        let out = net.forward(&Matrix::from_vec(1, 2, vec![3.0, 4.0]).unwrap()).unwrap();
        assert_eq!(out.data, [0.5, -1.0, 2.0]);
    }

    #[test]
    fn two_layer_matches_scalar_loop() {
        let w1 = [0.3f32, -0.7, 1.1, 0.25];
        let b1 = [0.1f32, -0.2];
        let w2 = [-0.6f32, 0.9, 0.4, 0.35];
        let b2 = [0.05f32, 0.0];
        let net = Network::new(vec![
            layer(2, 2, &w1, &b1, Activation::Relu),
            layer(2, 2, &w2, &b2, Activation::Identity),
        ])
        .unwrap();
        let x = [0.8f32, 0.45];
        let out = net.forward(&Matrix::from_vec(1, 2, x.to_vec()).unwrap()).unwrap();
        let mut h = [0.0f64; 2];
        for o in 0..2 {
            let mut s = b1[o] as f64;
            for i in 0..2 {
                s += w1[o * 2 + i] as f64 * x[i] as f64;
            }
            h[o] = if s > 0.0 { s } else { 0.0 };
        }
        for o in 0..2 {
            let mut s = b2[o] as f64;
            for i in 0..2 {
                s += w2[o * 2 + i] as f64 * h[i];
            }
            assert!((out.data[o] - s).abs() < 1e-6);
        }
    }

    #[test]
    fn dims_are_validated() {
        assert_eq!(Network::new(vec![]), Err(NetError::Empty));
        assert_eq!(
            Network::new(vec![layer(1, 1, &[1.0], &[0.0], Activation::Relu)]),
            Err(NetError::FinalActivation)
        );
        let bad = Network::new(vec![
            layer(2, 3, &[0.0; 6], &[0.0; 2], Activation::Relu),
            layer(1, 3, &[0.0; 3], &[0.0], Activation::Identity),
        ]);
        assert!(matches!(bad, Err(NetError::DimMismatch { .. })));
        let net = Network::mlp(&[3, 2], 0).unwrap();
        assert!(net.forward(&Matrix::zeros(1, 4)).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0; 10]), 0);
    }

    #[test]
    fn perfect_and_constant_classifiers() {
        // identity net on one-hot inputs always predicts the label
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for i in 0..30u8 {
            let mut x = [0.0f32; 10];
            x[(i % 10) as usize] = 1.0;
            images.extend_from_slice(&x);
            labels.push(i % 10);
        }
        let data = Dataset::new(10, images, labels).unwrap();
        let mut eye = vec![0.0f32; 100];
        for i in 0..10 {
            eye[i * 11] = 1.0;
        }
        let net = Network::new(vec![layer(10, 10, &eye, &[0.0; 10], Activation::Identity)]).unwrap();
        assert_eq!(evaluate_top1(&net, &data).unwrap(), 1.0);

        let flat = Network::new(vec![layer(10, 10, &[0.0; 100], &[0.0; 10], Activation::Identity)]).unwrap();
        assert!((evaluate_top1(&flat, &data).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn mlp_init_is_seeded_and_bounded() {
        let a = Network::mlp(&[784, 300, 100, 10], 7).unwrap();
        let b = Network::mlp(&[784, 300, 100, 10], 7).unwrap();
        assert_eq!(a, b);
        let limit = (6.0f64 / 1084.0).sqrt() as f32;
        assert!(a.layer(0).weights.as_slice().iter().all(|w| w.abs() <= limit));
        assert_eq!(a.layer(2).activation, Activation::Identity);
        assert_eq!(a.parameter_count(), 784 * 300 + 300 + 300 * 100 + 100 + 100 * 10 + 10);
    }
}
