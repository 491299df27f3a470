//! Variational autoencoder assembled from Chebyshev convolutions and
//! edge-contraction pooling.
//!
//! The architecture string over {C, P} drives both directions: the encoder
//! runs the string left to right (tanh after every convolution except the
//! final one, which is linear), flattens the coarsest level, and maps it to a
//! mean and a deviation vector through two fully-connected layers (linear and
//! sigmoid respectively). The decoder mirrors the string in reverse with
//! de-pooling in place of pooling, tanh everywhere, decoder convolution
//! weights initialized as transposes of their encoder counterparts (then
//! trained independently), and the decoder's fully-connected map tied to the
//! transpose of the encoder mean map.

mod io;
mod model;
mod train;

pub use io::{load_params, save_params, CKPT_MAGIC, CKPT_VERSION};
pub use model::{build_model, decode, encode, reparameterize, LatentCode};
pub use train::{
    adam_step, adam_update_tensor, kl_divergence, loss_and_grads, train, AdamState, EpochLog,
    LossParts,
};

use ndarray::Array2;
use thiserror::Error;

use crate::gconv::Activation;
use crate::hierarchy::Hierarchy;
use crate::laplacian::{estimate_lambda_max, normalized_laplacian};
use crate::pooling::{build_pool_operator, PoolOperator};
use crate::simplify::half_target;
use crate::sparse::SparseMatrix;

pub const INPUT_DIM: usize = crate::features::FEATURE_DIM;

#[derive(Debug, Error)]
pub enum VaeError {
    #[error("architecture string {0:?} is invalid: {1}")]
    BadArch(String, String),
    #[error("architecture needs {needed} pooling levels but the hierarchy has {available}")]
    NotEnoughLevels { needed: usize, available: usize },
    #[error("input has shape {got}, expected {expected}")]
    ShapeMismatch { got: String, expected: String },
    #[error("label {label} out of range for condition dimension {condition}")]
    LabelOutOfRange { label: usize, condition: usize },
    #[error("model is unconditional; a condition label was supplied")]
    UnexpectedLabel,
    #[error("conditional model requires a label")]
    MissingLabel,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: bad magic (expected MVAE-CKPT)")]
    BadMagic { path: String },
    #[error("{path}: unsupported version {version}")]
    BadVersion { path: String, version: u32 },
    #[error("{path}: truncated or inconsistent checkpoint")]
    Truncated { path: String },
    #[error("checkpoint was trained on a different hierarchy:\n  checkpoint {checkpoint}\n  current    {current}")]
    HierarchyMismatch { checkpoint: String, current: String },
    #[error(transparent)]
    Mesh(#[from] crate::mesh::MeshError),
    #[error(transparent)]
    Pool(#[from] crate::pooling::PoolError),
    #[error(transparent)]
    Gconv(#[from] crate::gconv::GconvError),
}

/// Architecture description: layer string, channel width, latent size,
/// Chebyshev order, and the one-hot condition dimension (0 = unconditional).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchSpec {
    pub layers: String,
    pub width: usize,
    pub latent: usize,
    pub order: usize,
    pub condition: usize,
}

impl Default for ArchSpec {
    fn default() -> Self {
        ArchSpec {
            layers: "CCPC".to_string(),
            width: 9,
            latent: 128,
            order: 3,
            condition: 0,
        }
    }
}

impl ArchSpec {
    pub fn with_layers(layers: &str) -> Self {
        ArchSpec {
            layers: layers.to_string(),
            ..ArchSpec::default()
        }
    }

    pub fn validate(&self) -> Result<(), VaeError> {
        let bad = |msg: &str| VaeError::BadArch(self.layers.clone(), msg.to_string());
        if self.layers.is_empty() {
            return Err(bad("empty layer string"));
        }
        if !self.layers.chars().all(|c| c == 'C' || c == 'P') {
            return Err(bad("only 'C' and 'P' layers are supported"));
        }
        if !self.layers.ends_with('C') {
            return Err(bad("the last layer must be a convolution"));
        }
        if self.width == 0 || self.latent == 0 || self.order == 0 {
            return Err(bad("width, latent, and order must be positive"));
        }
        Ok(())
    }

    pub fn pool_count(&self) -> usize {
        self.layers.chars().filter(|&c| c == 'P').count()
    }

    pub fn conv_count(&self) -> usize {
        self.layers.chars().filter(|&c| c == 'C').count()
    }

    /// In/out channel widths of each encoder convolution, in order.
    pub(crate) fn encoder_conv_shapes(&self) -> Vec<(usize, usize)> {
        (0..self.conv_count())
            .map(|i| {
                let c_in = if i == 0 {
                    INPUT_DIM + self.condition
                } else {
                    self.width
                };
                (c_in, self.width)
            })
            .collect()
    }

    /// Decoder convolution shapes: transposes of the encoder's, in reverse
    /// order, with the final one emitting the 9 feature channels (condition
    /// columns are not reconstructed).
    pub(crate) fn decoder_conv_shapes(&self) -> Vec<(usize, usize)> {
        let enc = self.encoder_conv_shapes();
        (0..enc.len())
            .map(|i| {
                let (enc_in, enc_out) = enc[enc.len() - 1 - i];
                let out = if i == enc.len() - 1 { INPUT_DIM } else { enc_in };
                (enc_out, out)
            })
            .collect()
    }
}

/// One step of the encoder pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum EncStep {
    Conv {
        level: usize,
        idx: usize,
        act: Activation,
    },
    Pool {
        map: usize,
    },
}

/// One step of the decoder pipeline (every convolution uses tanh).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum DecStep {
    Conv { level: usize, idx: usize },
    Depool { map: usize },
}

pub(crate) fn encoder_plan(arch: &ArchSpec) -> Vec<EncStep> {
    let conv_count = arch.conv_count();
    let mut level = 0usize;
    let mut conv_idx = 0usize;
    let mut plan = Vec::new();
    for c in arch.layers.chars() {
        match c {
            'C' => {
                let act = if conv_idx + 1 == conv_count {
                    Activation::Linear
                } else {
                    Activation::Tanh
                };
                plan.push(EncStep::Conv {
                    level,
                    idx: conv_idx,
                    act,
                });
                conv_idx += 1;
            }
            'P' => {
                plan.push(EncStep::Pool { map: level });
                level += 1;
            }
            _ => unreachable!("validated arch string"),
        }
    }
    plan
}

pub(crate) fn decoder_plan(arch: &ArchSpec) -> Vec<DecStep> {
    let conv_count = arch.conv_count();
    let mut level = arch.pool_count();
    let mut conv_idx = 0usize;
    let mut plan = Vec::new();
    for c in arch.layers.chars().rev() {
        match c {
            'C' => {
                plan.push(DecStep::Conv {
                    level,
                    idx: conv_idx,
                });
                conv_idx += 1;
            }
            'P' => {
                level -= 1;
                plan.push(DecStep::Depool { map: level });
            }
            _ => unreachable!("validated arch string"),
        }
    }
    debug_assert_eq!(conv_idx, conv_count);
    debug_assert_eq!(level, 0);
    plan
}

/// Per-level operators shared by every forward pass: the rescaled Laplacian
/// of each hierarchy level in use and the pooling operators between them.
pub struct ModelContext {
    pub vertex_counts: Vec<usize>,
    pub laplacians: Vec<SparseMatrix>,
    pub lambda_maxes: Vec<f64>,
    pub pools: Vec<PoolOperator>,
    pub hierarchy_hash: [u8; 32],
}

impl ModelContext {
    /// Builds operators for the levels an architecture needs.
    pub fn from_hierarchy(hierarchy: &Hierarchy, arch: &ArchSpec) -> Result<Self, VaeError> {
        arch.validate()?;
        let needed = arch.pool_count();
        if needed > hierarchy.depth() {
            return Err(VaeError::NotEnoughLevels {
                needed,
                available: hierarchy.depth(),
            });
        }
        let mut laplacians = Vec::with_capacity(needed + 1);
        let mut lambda_maxes = Vec::with_capacity(needed + 1);
        let mut vertex_counts = Vec::with_capacity(needed + 1);
        for level in &hierarchy.levels[..=needed] {
            let l = normalized_laplacian(&level.adjacency)?;
            let lambda_max = estimate_lambda_max(&l);
            laplacians.push(crate::gconv::scale_laplacian(&l, lambda_max)?);
            lambda_maxes.push(lambda_max);
            vertex_counts.push(level.mesh.vertex_count());
        }
        let pools = hierarchy.maps[..needed]
            .iter()
            .map(build_pool_operator)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ModelContext {
            vertex_counts,
            laplacians,
            lambda_maxes,
            pools,
            hierarchy_hash: crate::hierarchy::content_hash(hierarchy),
        })
    }

    /// Vertex count at the coarsest level the encoder reaches.
    pub fn pooled_vertex_count(&self) -> usize {
        *self.vertex_counts.last().expect("at least one level")
    }
}

/// All trainable tensors plus the architecture that shaped them.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeParams {
    pub arch: ArchSpec,
    pub seed: u64,
    pub hierarchy_hash: [u8; 32],
    /// Per encoder convolution: H stacked C_in x C_out coefficient matrices.
    pub enc_convs: Vec<Vec<Array2<f64>>>,
    /// (V_p * width) x latent; also applied transposed as the decoder's
    /// fully-connected map.
    pub fc_mean: Array2<f64>,
    pub fc_dev: Array2<f64>,
    /// Decoder stacks, transposed-initialized from the encoder and trained
    /// independently.
    pub dec_convs: Vec<Vec<Array2<f64>>>,
    /// Condition block of the decoder's fully-connected map (condition x D).
    pub cond_decoder: Option<Array2<f64>>,
}

impl VaeParams {
    pub fn flat_dim(&self) -> usize {
        self.fc_mean.nrows()
    }

    /// Trainable tensors in declaration order (the checkpoint layout).
    pub fn tensor_list(&self) -> Vec<&Array2<f64>> {
        let mut out: Vec<&Array2<f64>> = Vec::new();
        for conv in &self.enc_convs {
            out.extend(conv.iter());
        }
        out.push(&self.fc_mean);
        out.push(&self.fc_dev);
        for conv in &self.dec_convs {
            out.extend(conv.iter());
        }
        if let Some(c) = &self.cond_decoder {
            out.push(c);
        }
        out
    }

    pub fn tensor_list_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out: Vec<&mut Array2<f64>> = Vec::new();
        for conv in &mut self.enc_convs {
            out.extend(conv.iter_mut());
        }
        out.push(&mut self.fc_mean);
        out.push(&mut self.fc_dev);
        for conv in &mut self.dec_convs {
            out.extend(conv.iter_mut());
        }
        if let Some(c) = &mut self.cond_decoder {
            out.push(c);
        }
        out
    }
}

/// Gradients with the same tensor layout as [`VaeParams`].
#[derive(Debug, Clone)]
pub struct Grads {
    pub enc_convs: Vec<Vec<Array2<f64>>>,
    pub fc_mean: Array2<f64>,
    pub fc_dev: Array2<f64>,
    pub dec_convs: Vec<Vec<Array2<f64>>>,
    pub cond_decoder: Option<Array2<f64>>,
}

impl Grads {
    pub fn zeros_like(params: &VaeParams) -> Self {
        let zero_stack = |convs: &Vec<Vec<Array2<f64>>>| {
            convs
                .iter()
                .map(|stack| stack.iter().map(|t| Array2::zeros(t.raw_dim())).collect())
                .collect()
        };
        Grads {
            enc_convs: zero_stack(&params.enc_convs),
            fc_mean: Array2::zeros(params.fc_mean.raw_dim()),
            fc_dev: Array2::zeros(params.fc_dev.raw_dim()),
            dec_convs: zero_stack(&params.dec_convs),
            cond_decoder: params
                .cond_decoder
                .as_ref()
                .map(|c| Array2::zeros(c.raw_dim())),
        }
    }

    pub fn tensor_list(&self) -> Vec<&Array2<f64>> {
        let mut out: Vec<&Array2<f64>> = Vec::new();
        for conv in &self.enc_convs {
            out.extend(conv.iter());
        }
        out.push(&self.fc_mean);
        out.push(&self.fc_dev);
        for conv in &self.dec_convs {
            out.extend(conv.iter());
        }
        if let Some(c) = &self.cond_decoder {
            out.push(c);
        }
        out
    }
}

/// Total trainable scalar count by direct enumeration. The decoder's
/// fully-connected map is the tied transpose of `fc_mean` and is not counted.
pub fn count_parameters(params: &VaeParams) -> usize {
    params.tensor_list().iter().map(|t| t.len()).sum()
}

/// Parameter count from the architecture alone, without building tensors.
/// Matches [`count_parameters`] on a built model.
pub fn count_parameters_for(arch: &ArchSpec, fine_vertices: usize) -> usize {
    let mut v_p = fine_vertices;
    for _ in 0..arch.pool_count() {
        v_p = half_target(v_p);
    }
    let conv: usize = arch
        .encoder_conv_shapes()
        .iter()
        .chain(arch.decoder_conv_shapes().iter())
        .map(|&(c_in, c_out)| arch.order * c_in * c_out)
        .sum();
    let d = v_p * arch.width;
    conv + 2 * d * arch.latent + arch.condition * d
}

/// Training hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub alpha: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub l2: f64,
    pub epochs: usize,
    /// 0 means full batch.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.3,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            l2: 1e-5,
            epochs: 100,
            batch_size: 0,
            seed: 0,
        }
    }
}
