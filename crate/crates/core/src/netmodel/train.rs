use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Mask, NetError, Network, ShadowNet};

/// Mini-batch SGD settings; `seed` fixes the shuffling order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// L2 penalty added to the weight gradients (not the biases).
    pub weight_decay: f64,
    /// Learning-rate multiplier applied after every epoch.
    pub lr_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            momentum: 0.0,
            batch_size: 64,
            epochs: 20,
            seed: 1,
            weight_decay: 0.0,
            lr_decay: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(NetError::InvalidConfig("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(NetError::InvalidConfig("momentum must be in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(NetError::InvalidConfig("batch size must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(NetError::InvalidConfig("weight decay must be non-negative"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return Err(NetError::InvalidConfig("lr decay must be positive"));
        }
        Ok(())
    }
}

/// Trains a copy of `net` with softmax cross-entropy and momentum SGD.
///
/// With `masks`, weight gradients are multiplied by the 0/1 mask before the
/// update, so masked-out weights never change. `on_epoch` receives the epoch
/// index and mean training loss.
pub fn train_sgd(
    net: &Network,
    data: &Dataset,
    cfg: &TrainConfig,
    masks: Option<&[Mask]>,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Network, NetError> {
    cfg.validate()?;
    if data.dim() != net.input_dim() {
        return Err(NetError::DimMismatch { expected: net.input_dim(), got: data.dim() });
    }
    let classes = net.output_dim();
    if let Some(&label) = data.labels().iter().find(|&&l| l as usize >= classes) {
        return Err(NetError::LabelOutOfRange { label, classes });
    }
    let masks: Option<Vec<Vec<f64>>> = match masks {
        None => None,
        Some(ms) => {
            if ms.len() != net.layers().len() {
                return Err(NetError::DimMismatch { expected: net.layers().len(), got: ms.len() });
            }
            let mut out = Vec::with_capacity(ms.len());
            for (m, l) in ms.iter().zip(net.layers()) {
                if m.rows() != l.out_dim() || m.cols() != l.in_dim() {
                    return Err(NetError::DimMismatch { expected: l.weights.len(), got: m.as_slice().len() });
                }
                out.push(m.as_slice().iter().map(|&k| if k { 1.0 } else { 0.0 }).collect());
            }
            Some(out)
        }
    };

    let mut shadow = ShadowNet::from_network(net);
    let mut vel_w: Vec<Vec<f64>> = shadow.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect();
    let mut vel_b: Vec<Vec<f64>> = shadow.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let dim = data.dim();
    let mut batch = Vec::with_capacity(cfg.batch_size * dim);
    let mut labels = Vec::with_capacity(cfg.batch_size);
    let mut lr = cfg.learning_rate;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            labels.clear();
            for &i in chunk {
                batch.extend(data.image(i).iter().map(|&v| f64::from(v)));
                labels.push(data.labels()[i]);
            }
            let (loss, grads) = shadow.loss_and_gradients(&batch, &labels);
            if !loss.is_finite() {
                return Err(NetError::Diverged { epoch });
            }
            epoch_loss += loss;
            batches += 1;

            for (li, layer) in shadow.layers.iter_mut().enumerate() {
                let mask = masks.as_ref().map(|m| &m[li]);
                for (j, (w, g)) in layer.weights.iter_mut().zip(&grads.weights[li]).enumerate() {
                    let mut g = g + cfg.weight_decay * *w;
                    if let Some(m) = mask {
                        g *= m[j];
                    }
                    let v = &mut vel_w[li][j];
                    *v = cfg.momentum * *v + g;
                    *w -= lr * *v;
                }
                for ((b, g), v) in layer.bias.iter_mut().zip(&grads.bias[li]).zip(&mut vel_b[li]) {
                    *v = cfg.momentum * *v + g;
                    *b -= lr * *v;
                }
            }
        }
        let mean = if batches > 0 { epoch_loss / batches as f64 } else { 0.0 };
        if !mean.is_finite() {
            return Err(NetError::Diverged { epoch });
        }
        on_epoch(epoch, mean);
        lr *= cfg.lr_decay;
    }
    Ok(shadow.to_network())
}
