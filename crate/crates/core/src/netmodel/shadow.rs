use alloc::vec;
use alloc::vec::Vec;

use super::{Activation, DenseLayer, Matrix, Network};

/// `f64` copy of one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowLayer {
    pub out_dim: usize,
    pub in_dim: usize,
    /// Row-major `out_dim × in_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// 64-bit working copy of a [`Network`] used for all arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowNet {
    pub layers: Vec<ShadowLayer>,
}

/// Per-layer gradients of the mean loss, laid out like [`ShadowLayer`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

/// `c = a·b + beta·c` for row-major `c` (`m × n`) with strided `a` (`m × k`)
/// and `b` (`k × n`).
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
        assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    }
    // SAFETY: the assertions above keep every strided access in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl ShadowLayer {
    fn from_dense(l: &DenseLayer) -> Self {
        Self {
            out_dim: l.out_dim(),
            in_dim: l.in_dim(),
            weights: l.weights.as_slice().iter().map(|&v| f64::from(v)).collect(),
            bias: l.bias.iter().map(|&v| f64::from(v)).collect(),
            activation: l.activation,
        }
    }

    /// Pre-activations `z = x·Wᵀ + b` for `rows` inputs.
    fn affine(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let mut z = Vec::with_capacity(rows * self.out_dim);
        for _ in 0..rows {
            z.extend_from_slice(&self.bias);
        }
        gemm(
            rows,
            self.in_dim,
            self.out_dim,
            x,
            (self.in_dim, 1),
            &self.weights,
            (1, self.in_dim),
            1.0,
            &mut z,
        );
        z
    }
}

impl ShadowNet {
    pub fn from_network(net: &Network) -> Self {
        Self { layers: net.layers().iter().map(ShadowLayer::from_dense).collect() }
    }

    /// Rounds the parameters back to `f32`.
    pub fn to_network(&self) -> Network {
        let layers = self
            .layers
            .iter()
            .map(|l| DenseLayer {
                weights: Matrix {
                    rows: l.out_dim,
                    cols: l.in_dim,
                    data: l.weights.iter().map(|&v| v as f32).collect(),
                },
                bias: l.bias.iter().map(|&v| v as f32).collect(),
                activation: l.activation,
            })
            .collect();
        Network { layers }
    }

    /// Logits (row-major `rows × classes`).
    pub fn forward(&self, input: &[f64], rows: usize) -> Vec<f64> {
        let mut x = input.to_vec();
        for l in &self.layers {
            let mut z = l.affine(&x, rows);
            if l.activation == Activation::Relu {
                z.iter_mut().for_each(|v| *v = l.activation.apply(*v));
            }
            x = z;
        }
        x
    }

    /// Post-activation outputs of every layer, input first.
    fn forward_all(&self, input: &[f64], rows: usize) -> Vec<Vec<f64>> {
        let mut outs = Vec::with_capacity(self.layers.len() + 1);
        outs.push(input.to_vec());
        for l in &self.layers {
            let mut z = l.affine(outs.last().unwrap(), rows);
            if l.activation == Activation::Relu {
                z.iter_mut().for_each(|v| *v = l.activation.apply(*v));
            }
            outs.push(z);
        }
        outs
    }

    /// Mean softmax cross-entropy over the batch.
    pub fn loss(&self, input: &[f64], labels: &[u8]) -> f64 {
        let logits = self.forward(input, labels.len());
        let classes = self.layers.last().map_or(0, |l| l.out_dim);
        let mut total = 0.0;
        for (row, &y) in logits.chunks_exact(classes).zip(labels) {
            total += log_sum_exp(row) - row[y as usize];
        }
        total / labels.len() as f64
    }

    /// Mean loss and its gradients with respect to every parameter.
    pub fn loss_and_gradients(&self, input: &[f64], labels: &[u8]) -> (f64, Gradients) {
        let rows = labels.len();
        let outs = self.forward_all(input, rows);
        let classes = self.layers.last().map_or(0, |l| l.out_dim);
        let inv = 1.0 / rows as f64;

        // dL/dz for the logit layer: (softmax - onehot) / rows
        let logits = outs.last().unwrap();
        let mut loss = 0.0;
        let mut dz = vec![0.0; rows * classes];
        for ((row, d), &y) in logits.chunks_exact(classes).zip(dz.chunks_exact_mut(classes)).zip(labels) {
            let lse = log_sum_exp(row);
            loss += lse - row[y as usize];
            for (di, &zi) in d.iter_mut().zip(row) {
                *di = libm::exp(zi - lse) * inv;
            }
            d[y as usize] -= inv;
        }

        let n = self.layers.len();
        let mut gw = vec![Vec::new(); n];
        let mut gb = vec![Vec::new(); n];
        for li in (0..n).rev() {
            let l = &self.layers[li];
            let x = &outs[li];
            // dW = dzᵀ · x
            let mut w = vec![0.0; l.out_dim * l.in_dim];
            gemm(l.out_dim, rows, l.in_dim, &dz, (1, l.out_dim), x, (l.in_dim, 1), 0.0, &mut w);
            let mut b = vec![0.0; l.out_dim];
            for d in dz.chunks_exact(l.out_dim) {
                for (bi, di) in b.iter_mut().zip(d) {
                    *bi += di;
                }
            }
            gw[li] = w;
            gb[li] = b;
            if li > 0 {
                // dx = dz · W, then through the previous layer's activation
                let mut dx = vec![0.0; rows * l.in_dim];
                gemm(rows, l.out_dim, l.in_dim, &dz, (l.out_dim, 1), &l.weights, (l.in_dim, 1), 0.0, &mut dx);
                if self.layers[li - 1].activation == Activation::Relu {
                    for (d, &a) in dx.iter_mut().zip(x) {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    }
                }
                dz = dx;
            }
        }
        (loss * inv, Gradients { weights: gw, bias: gb })
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().map(|&v| libm::exp(v - max)).sum();
    max + libm::log(sum)
}
