#![allow(dead_code)]

use std::path::Path;

use deepsz::idx::to_idx;
use deepsz_core::netmodel::{Dataset, Network};
use deepsz_core::pruner::{magnitude_mask, PrunedLayer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SIDE: u32 = 4;
pub const CLASSES: u8 = 3;

/// 4x4 images whose class lights up one of three pixel bands, plus noise.
pub fn synthetic(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = (SIDE * SIDE) as usize;
    let mut images = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let c = rng.random_range(0..CLASSES);
        for p in 0..dim {
            let lit = p % 3 == usize::from(c);
            let base: f32 = if lit { 0.8 } else { 0.1 };
            // quantize like IDX pixels so files round-trip exactly
            images.push(((base + rng.random_range(-0.1..0.1)) * 255.0).round() / 255.0);
        }
        labels.push(c);
    }
    Dataset::new(dim, images, labels).unwrap()
}

/// Writes train and test IDX files into `dir` under the standard names.
pub fn write_mnist_like(dir: &Path) {
    for (name, n, seed) in [("train", 600, 1), ("t10k", 300, 2)] {
        let (img, lab) = to_idx(&synthetic(n, seed), SIDE, SIDE);
        std::fs::write(dir.join(format!("{name}-images-idx3-ubyte")), img).unwrap();
        std::fs::write(dir.join(format!("{name}-labels-idx1-ubyte")), lab).unwrap();
    }
}

/// Small network with every layer pruned to 30% of its weights.
pub fn pruned_net(seed: u64) -> (Network, Vec<PrunedLayer>) {
    let mut net = Network::mlp(&[64, 32, 10], seed).unwrap();
    for i in 0..net.layers().len() {
        let mut w = net.layer(i).weights.clone();
        magnitude_mask(&w, 0.3).unwrap().apply(&mut w);
        net.replace_weights(i, w).unwrap();
    }
    let sparse = deepsz::commands::sparse_layers(&net);
    (net, sparse)
}
