//! Per-layer error-bound assessment.
//!
//! Each FC layer is round-tripped through the lossy codec on its own while
//! the others stay exact, and the resulting accuracy drop and compressed
//! size are recorded. A coarse scan finds the first bound `β` that distorts
//! the network; a fine scan then walks `β/10, 2β/10, …, β, 2β, …` until the
//! drop exceeds the expected loss.

use alloc::vec::Vec;

use crate::codec::{self, CodecError, DEFAULT_QUANT_BINS};
use crate::lossless::LosslessBackend;
use crate::netmodel::{count_correct, Dataset, NetError, Network};
use crate::pruner::{from_sparse, PruneError, PrunedLayer};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AssessError {
    #[error("invalid assessment config: {0}")]
    InvalidConfig(&'static str),
    #[error("bound {0} is not of the form d x 10^e")]
    UnalignedBound(f64),
    #[error("layer {layer} out of range ({count} layers)")]
    LayerOutOfRange { layer: usize, count: usize },
    #[error("sparse layer {0} does not match the network shape")]
    ShapeMismatch(usize),
    #[error("empty test set")]
    EmptyTestSet,
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Prune(#[from] PruneError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// One tested `(layer, eb)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssessmentRecord {
    pub layer_id: usize,
    pub eb: f64,
    /// Accuracy drop in percentage points; negative when accuracy improves.
    pub delta: f64,
    /// Serialized size of the compressed data array in bytes.
    pub sigma: usize,
}

impl AssessmentRecord {
    /// Degradation as seen by the planner (gains count as zero loss).
    pub fn planning_delta(&self) -> f64 {
        self.delta.max(0.0)
    }
}

/// Result of a single probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub delta: f64,
    pub sigma: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssessConfig {
    pub coarse_grid: Vec<f64>,
    /// Drop (percentage points) that ends the coarse scan.
    pub distortion_criterion: f64,
    /// Expected accuracy loss ε⋆ (percentage points) that ends the fine scan.
    pub expected_loss: f64,
    pub quant_bins: u32,
    /// Largest bound ever tested.
    pub max_bound: f64,
}

impl Default for AssessConfig {
    fn default() -> Self {
        Self {
            coarse_grid: alloc::vec![1e-3, 1e-2, 1e-1],
            distortion_criterion: 0.1,
            expected_loss: 0.2,
            quant_bins: DEFAULT_QUANT_BINS,
            max_bound: 1.0,
        }
    }
}

impl AssessConfig {
    pub fn validate(&self) -> Result<(), AssessError> {
        if self.coarse_grid.is_empty() {
            return Err(AssessError::InvalidConfig("coarse grid is empty"));
        }
        if self.coarse_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AssessError::InvalidConfig("coarse grid must be strictly increasing"));
        }
        for &b in &self.coarse_grid {
            if !(b > 0.0 && b <= self.max_bound) {
                return Err(AssessError::InvalidConfig("coarse bounds must lie in (0, max_bound]"));
            }
            GridBound::from_f64(b)?;
        }
        if !(self.distortion_criterion >= 0.0 && self.distortion_criterion.is_finite()) {
            return Err(AssessError::InvalidConfig("distortion criterion must be finite and >= 0"));
        }
        if !(self.expected_loss > 0.0 && self.expected_loss.is_finite()) {
            return Err(AssessError::InvalidConfig("expected loss must be finite and > 0"));
        }
        if !self.max_bound.is_finite() {
            return Err(AssessError::InvalidConfig("max bound must be finite"));
        }
        Ok(())
    }
}

/// A bound `mantissa × 10^exponent`, kept in integer form so scan steps
/// land exactly on decimal values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct GridBound {
    mantissa: u64,
    exponent: i32,
}

impl GridBound {
    fn value(self) -> f64 {
        let p = libm::pow(10.0, f64::from(self.exponent.abs()));
        if self.exponent >= 0 {
            self.mantissa as f64 * p
        } else {
            self.mantissa as f64 / p
        }
    }

    fn from_f64(x: f64) -> Result<Self, AssessError> {
        if x > 0.0 && x.is_finite() {
            for exponent in (-30..=10).rev() {
                let scaled = if exponent >= 0 {
                    x / libm::pow(10.0, f64::from(exponent))
                } else {
                    x * libm::pow(10.0, f64::from(-exponent))
                };
                let m = libm::round(scaled);
                if (1.0..1e6).contains(&m) {
                    let g = GridBound { mantissa: m as u64, exponent };
                    if g.value() == x {
                        return Ok(g);
                    }
                }
            }
        }
        Err(AssessError::UnalignedBound(x))
    }
}

/// Source of `(Δ, σ)` measurements for one layer at one bound.
pub trait Probe {
    type Error: From<AssessError>;
    fn measure(&mut self, layer_id: usize, eb: f64) -> Result<Measurement, Self::Error>;
}

/// Outcome of [`assess_layer`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerAssessment {
    pub layer_id: usize,
    /// First coarse bound whose drop exceeded the distortion criterion.
    pub beta: Option<f64>,
    /// No tested bound up to the cap distorted the layer.
    pub insensitive: bool,
    pub records: Vec<AssessmentRecord>,
}

/// Fine-scan bounds starting at `beta / 10`, with the step growing tenfold
/// each time the bound reaches ten steps. Stops before exceeding `max_bound`.
pub fn scan_grid(beta: f64, max_bound: f64) -> Result<impl Iterator<Item = f64>, AssessError> {
    let b = GridBound::from_f64(beta)?;
    let exponent = b.exponent - 1;
    let mut k = b.mantissa;
    let mut step = b.mantissa;
    let unit = move |k: u64| GridBound { mantissa: k, exponent }.value();
    Ok(core::iter::from_fn(move || {
        let v = unit(k);
        if v > max_bound {
            return None;
        }
        k += step;
        if k == 10 * step {
            step *= 10;
        }
        Some(v)
    }))
}

/// Runs the coarse and fine scans for one layer.
pub fn assess_layer<P: Probe>(
    probe: &mut P,
    layer_id: usize,
    cfg: &AssessConfig,
) -> Result<LayerAssessment, P::Error> {
    cfg.validate()?;
    let mut seen: Vec<(u64, Measurement)> = Vec::new();
    let mut measure = |probe: &mut P, eb: f64| -> Result<Measurement, P::Error> {
        if let Some((_, m)) = seen.iter().find(|(bits, _)| *bits == eb.to_bits()) {
            return Ok(*m);
        }
        let m = probe.measure(layer_id, eb)?;
        seen.push((eb.to_bits(), m));
        Ok(m)
    };

    let mut grid = cfg.coarse_grid.clone();
    let mut next = GridBound::from_f64(*grid.last().expect("validated"))?;
    loop {
        next.exponent += 1;
        if next.value() > cfg.max_bound {
            break;
        }
        grid.push(next.value());
    }

    let mut beta = None;
    let mut last = None;
    for &eb in &grid {
        let m = measure(probe, eb)?;
        last = Some((eb, m));
        if m.delta > cfg.distortion_criterion {
            beta = Some(eb);
            break;
        }
    }
    let Some(beta) = beta else {
        let (eb, m) = last.expect("grid is non-empty");
        let record = AssessmentRecord { layer_id, eb, delta: m.delta, sigma: m.sigma };
        return Ok(LayerAssessment { layer_id, beta: None, insensitive: true, records: alloc::vec![record] });
    };

    let mut records = Vec::new();
    for eb in scan_grid(beta, cfg.max_bound)? {
        let m = measure(probe, eb)?;
        records.push(AssessmentRecord { layer_id, eb, delta: m.delta, sigma: m.sigma });
        if m.delta > cfg.expected_loss {
            break;
        }
    }
    Ok(LayerAssessment { layer_id, beta: Some(beta), insensitive: false, records })
}

/// Round-trips one sparse layer at `eb`, evaluates the network, then puts
/// the original weights back.
///
/// `baseline_correct` is the number of test samples the untouched network
/// classifies correctly.
#[allow(clippy::too_many_arguments)]
pub fn degradation(
    net: &mut Network,
    sparse: &PrunedLayer,
    layer_id: usize,
    eb: f64,
    test_set: &Dataset,
    baseline_correct: usize,
    quant_bins: u32,
    backends: &[&dyn LosslessBackend],
) -> Result<AssessmentRecord, AssessError> {
    let count = net.layers().len();
    if layer_id >= count {
        return Err(AssessError::LayerOutOfRange { layer: layer_id, count });
    }
    let layer = net.layer(layer_id);
    if layer.out_dim() != sparse.out_dim || layer.in_dim() != sparse.in_dim {
        return Err(AssessError::ShapeMismatch(layer_id));
    }
    if test_set.is_empty() {
        return Err(AssessError::EmptyTestSet);
    }
    let block = codec::compress(&sparse.data, eb, quant_bins, backends)?;
    let sigma = block.serialized_len();
    let decoded = codec::decompress(&block, backends)?;
    let rebuilt = from_sparse(&sparse.with_data(decoded)?)?;
    let original = net.replace_weights(layer_id, rebuilt)?;
    let correct = count_correct(net, test_set);
    net.replace_weights(layer_id, original)?;
    let correct = correct?;
    let delta = 100.0 * (baseline_correct as f64 - correct as f64) / test_set.len() as f64;
    Ok(AssessmentRecord { layer_id, eb, delta, sigma })
}

/// [`Probe`] backed by a real network and its sparse layers.
#[derive(Clone)]
pub struct NetworkProbe<'a> {
    net: Network,
    sparse: &'a [PrunedLayer],
    test_set: &'a Dataset,
    baseline_correct: usize,
    quant_bins: u32,
    backends: &'a [&'a dyn LosslessBackend],
}

impl<'a> NetworkProbe<'a> {
    pub fn new(
        net: &Network,
        sparse: &'a [PrunedLayer],
        test_set: &'a Dataset,
        quant_bins: u32,
        backends: &'a [&'a dyn LosslessBackend],
    ) -> Result<Self, AssessError> {
        if sparse.len() != net.layers().len() {
            return Err(AssessError::LayerOutOfRange { layer: sparse.len(), count: net.layers().len() });
        }
        if test_set.is_empty() {
            return Err(AssessError::EmptyTestSet);
        }
        let baseline_correct = count_correct(net, test_set)?;
        Ok(Self { net: net.clone(), sparse, test_set, baseline_correct, quant_bins, backends })
    }

    pub fn baseline_correct(&self) -> usize {
        self.baseline_correct
    }
}

impl Probe for NetworkProbe<'_> {
    type Error = AssessError;

    fn measure(&mut self, layer_id: usize, eb: f64) -> Result<Measurement, AssessError> {
        let sparse = self
            .sparse
            .get(layer_id)
            .ok_or(AssessError::LayerOutOfRange { layer: layer_id, count: self.sparse.len() })?;
        let r = degradation(
            &mut self.net,
            sparse,
            layer_id,
            eb,
            self.test_set,
            self.baseline_correct,
            self.quant_bins,
            self.backends,
        )?;
        Ok(Measurement { delta: r.delta, sigma: r.sigma })
    }
}

/// Assesses every layer in order.
pub fn assess_network(
    net: &Network,
    sparse: &[PrunedLayer],
    cfg: &AssessConfig,
    test_set: &Dataset,
    backends: &[&dyn LosslessBackend],
) -> Result<Vec<LayerAssessment>, AssessError> {
    let mut probe = NetworkProbe::new(net, sparse, test_set, cfg.quant_bins, backends)?;
    (0..sparse.len()).map(|i| assess_layer(&mut probe, i, cfg)).collect()
}
