//! The compressed-model container.
//!
//! Layout (little-endian): magic `DSZ1`, u16 format version, u16 layer
//! count, then per layer:
//!
//! | field | type |
//! |---|---|
//! | kind (0 = compressed FC, 1 = passthrough) | u8 |
//! | out_dim, in_dim | u32, u32 |
//! | error bound | f64 |
//! | index lossless tag | u8 |
//! | index length + bytes | u32 + bytes |
//! | block length + block | u32 + bytes |
//! | bias length in bytes + raw f32 biases | u32 + bytes |
//!
//! Compressed layers carry the lossy-coded data array as a `SZB1` block and
//! the gap array after best-of lossless selection. Passthrough layers carry
//! raw row-major f32 weights in the block field and no index. Hidden layers
//! decode with ReLU and the last layer with identity.

use std::path::Path;

use deepsz_core::codec::{self, CodecError, CompressedBlock};
use deepsz_core::lossless::{decode_lossless, select_lossless, LosslessError};
use deepsz_core::netmodel::{Activation, DenseLayer, Matrix, NetError, Network};
use deepsz_core::planner::BoundPlan;
use deepsz_core::pruner::{from_sparse, PruneError, PrunedLayer, MAX_GAP};

use crate::checkpoint::{put_f32s, read_file, write_file, Cursor};
use crate::{backends, Error, FormatError};

pub const CONTAINER_MAGIC: [u8; 4] = *b"DSZ1";
pub const CONTAINER_VERSION: u16 = 1;
/// Bytes before the first layer record.
pub const FILE_HEADER_BYTES: usize = 8;
/// Fixed bytes of each layer record outside its three variable fields.
pub const LAYER_HEADER_BYTES: usize = 1 + 4 + 4 + 8 + 1 + 4 + 4 + 4;

const KIND_COMPRESSED: u8 = 0;
const KIND_PASSTHROUGH: u8 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ContainerError {
    #[error("plan covers {plan} layers but the model has {model}")]
    PlanMismatch { plan: usize, model: usize },
    #[error("sparse layer {0} does not match the network shape")]
    ShapeMismatch(usize),
    #[error("layer {0} is too large for the container")]
    TooLarge(usize),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Lossless(#[from] LosslessError),
    #[error(transparent)]
    Prune(#[from] PruneError),
    #[error(transparent)]
    Net(#[from] NetError),
}

impl ContainerError {
    /// True when the bytes themselves are malformed (as opposed to bad
    /// encoder inputs).
    pub fn is_format(&self) -> bool {
        !matches!(self, Self::PlanMismatch { .. } | Self::ShapeMismatch(_) | Self::TooLarge(_))
    }
}

/// How one layer is stored.
#[derive(Debug, Clone, Copy)]
pub enum LayerChoice<'a> {
    Compressed { sparse: &'a PrunedLayer, eb: f64 },
    Passthrough,
}

/// Byte breakdown of one layer record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerStats {
    pub out_dim: usize,
    pub in_dim: usize,
    pub block_bytes: usize,
    pub index_bytes: usize,
    pub index_tag: u8,
    pub bias_bytes: usize,
}

impl LayerStats {
    pub fn total(&self) -> usize {
        LAYER_HEADER_BYTES + self.block_bytes + self.index_bytes + self.bias_bytes
    }

    /// Dense f32 size of the weight matrix.
    pub fn raw_weight_bytes(&self) -> usize {
        4 * self.out_dim * self.in_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedModel {
    pub bytes: Vec<u8>,
    pub layers: Vec<LayerStats>,
}

impl EncodedModel {
    /// Everything after the file header.
    pub fn payload_bytes(&self) -> usize {
        self.layers.iter().map(LayerStats::total).sum()
    }

    pub fn raw_weight_bytes(&self) -> usize {
        self.layers.iter().map(LayerStats::raw_weight_bytes).sum()
    }

    /// Dense FC weight bytes over container payload bytes.
    pub fn compression_ratio(&self) -> f64 {
        self.raw_weight_bytes() as f64 / self.payload_bytes() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedModel {
    pub network: Network,
    /// Decoded sparse form of each compressed layer (`None` for passthrough).
    pub sparse: Vec<Option<PrunedLayer>>,
    /// Error bound of each layer (0 for passthrough).
    pub ebs: Vec<f64>,
}

fn len_u32(n: usize, layer: usize) -> Result<[u8; 4], ContainerError> {
    u32::try_from(n).map(u32::to_le_bytes).map_err(|_| ContainerError::TooLarge(layer))
}

/// Encodes every layer as compressed FC at the plan's bound.
pub fn encode_model(
    net: &Network,
    sparse: &[PrunedLayer],
    plan: &BoundPlan,
    quant_bins: u32,
) -> Result<EncodedModel, ContainerError> {
    if plan.ebs.len() != net.layers().len() || sparse.len() != net.layers().len() {
        return Err(ContainerError::PlanMismatch { plan: plan.ebs.len().min(sparse.len()), model: net.layers().len() });
    }
    let choices: Vec<LayerChoice> =
        sparse.iter().zip(&plan.ebs).map(|(s, &eb)| LayerChoice::Compressed { sparse: s, eb }).collect();
    encode_layers(net, &choices, quant_bins)
}

pub fn encode_layers(
    net: &Network,
    choices: &[LayerChoice],
    quant_bins: u32,
) -> Result<EncodedModel, ContainerError> {
    if choices.len() != net.layers().len() {
        return Err(ContainerError::PlanMismatch { plan: choices.len(), model: net.layers().len() });
    }
    let count = u16::try_from(choices.len()).map_err(|_| ContainerError::TooLarge(choices.len()))?;
    let all = backends::all();
    let mut out = Vec::new();
    out.extend_from_slice(&CONTAINER_MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    let mut stats = Vec::with_capacity(choices.len());
    for (i, (layer, choice)) in net.layers().iter().zip(choices).enumerate() {
        let (kind, eb, tag, index, block) = match *choice {
            LayerChoice::Compressed { sparse, eb } => {
                if sparse.out_dim != layer.out_dim() || sparse.in_dim != layer.in_dim() {
                    return Err(ContainerError::ShapeMismatch(i));
                }
                let block = codec::compress_to_bytes(&sparse.data, eb, quant_bins, &all)?;
                let (tag, index) = select_lossless(&sparse.index, &all);
                (KIND_COMPRESSED, eb, tag, index, block)
            }
            LayerChoice::Passthrough => {
                let mut raw = Vec::with_capacity(layer.weights.len() * 4);
                put_f32s(&mut raw, layer.weights.as_slice());
                (KIND_PASSTHROUGH, 0.0, 0, Vec::new(), raw)
            }
        };
        out.push(kind);
        out.extend_from_slice(&len_u32(layer.out_dim(), i)?);
        out.extend_from_slice(&len_u32(layer.in_dim(), i)?);
        out.extend_from_slice(&eb.to_le_bytes());
        out.push(tag);
        out.extend_from_slice(&len_u32(index.len(), i)?);
        out.extend_from_slice(&index);
        out.extend_from_slice(&len_u32(block.len(), i)?);
        out.extend_from_slice(&block);
        out.extend_from_slice(&len_u32(layer.bias.len() * 4, i)?);
        put_f32s(&mut out, &layer.bias);
        stats.push(LayerStats {
            out_dim: layer.out_dim(),
            in_dim: layer.in_dim(),
            block_bytes: block.len(),
            index_bytes: index.len(),
            index_tag: tag,
            bias_bytes: layer.bias.len() * 4,
        });
    }
    Ok(EncodedModel { bytes: out, layers: stats })
}

/// Recomputes how many entries are genuine weights rather than fillers.
fn count_genuine(index: &[u8], data: &[f32]) -> usize {
    index.iter().zip(data).filter(|(&g, &v)| !(usize::from(g) == MAX_GAP && v == 0.0)).count()
}

pub fn decode_model(bytes: &[u8]) -> Result<DecodedModel, ContainerError> {
    let all = backends::all();
    let mut c = Cursor::new(bytes);
    c.magic(CONTAINER_MAGIC)?;
    let version = c.u16()?;
    if version != CONTAINER_VERSION {
        return Err(FormatError::Version(version).into());
    }
    let count = c.u16()? as usize;
    let mut layers = Vec::with_capacity(count);
    let mut sparse_layers = Vec::with_capacity(count);
    let mut ebs = Vec::with_capacity(count);
    for i in 0..count {
        let kind = c.u8()?;
        let out_dim = c.u32()? as usize;
        let in_dim = c.u32()? as usize;
        let eb = c.f64()?;
        let tag = c.u8()?;
        let index_len = c.u32()? as usize;
        let index_bytes = c.take(index_len)?;
        let block_len = c.u32()? as usize;
        let block_bytes = c.take(block_len)?;
        let bias_len = c.u32()? as usize;
        if bias_len != out_dim * 4 {
            return Err(FormatError::Invalid("bias length").into());
        }
        let bias = c.f32s(out_dim)?;
        let cells = out_dim.checked_mul(in_dim).ok_or(FormatError::Invalid("layer shape"))?;
        let (weights, sparse) = match kind {
            KIND_COMPRESSED => {
                let index = decode_lossless(tag, index_bytes, &all)?;
                let block = CompressedBlock::from_bytes(block_bytes)?;
                if block.error_bound.to_bits() != eb.to_bits() {
                    return Err(FormatError::Invalid("block error bound differs from layer header").into());
                }
                if block.element_count as usize != index.len() {
                    return Err(FormatError::Invalid("data and index array lengths differ").into());
                }
                let data = codec::decompress(&block, &all)?;
                let nnz_true = count_genuine(&index, &data);
                let layer = PrunedLayer { out_dim, in_dim, data, index, nnz_true };
                (from_sparse(&layer)?, Some(layer))
            }
            KIND_PASSTHROUGH => {
                if tag != 0 || index_len != 0 || block_len != cells * 4 {
                    return Err(FormatError::Invalid("passthrough layer record").into());
                }
                let raw = Cursor::new(block_bytes).f32s(cells)?;
                (Matrix::from_vec(out_dim, in_dim, raw)?, None)
            }
            _ => return Err(FormatError::Invalid("layer kind").into()),
        };
        let activation = if i + 1 == count { Activation::Identity } else { Activation::Relu };
        layers.push(DenseLayer::new(weights, bias, activation)?);
        sparse_layers.push(sparse);
        ebs.push(eb);
    }
    c.finish()?;
    Ok(DecodedModel { network: Network::new(layers)?, sparse: sparse_layers, ebs })
}

pub fn save_container(path: &Path, model: &EncodedModel) -> Result<(), Error> {
    write_file(path, &model.bytes)
}

pub fn load_container(path: &Path) -> Result<DecodedModel, Error> {
    let bytes = read_file(path)?;
    decode_model(&bytes).map_err(|e| Error::container(path, e))
}

/// True when `bytes` start with the container magic.
pub fn is_container(bytes: &[u8]) -> bool {
    bytes.starts_with(&CONTAINER_MAGIC)
}
