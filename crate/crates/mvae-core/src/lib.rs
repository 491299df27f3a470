//! Mesh variational autoencoder with edge-contraction pooling.
//!
//! The crate covers the full pipeline: triangle meshes and OBJ I/O, a
//! modified quadric-error-metric simplifier that builds mesh hierarchies,
//! average pooling / de-pooling operators derived from the contraction maps,
//! per-vertex deformation features with a sparse reconstruction solver,
//! Chebyshev spectral graph convolutions with exact gradients, and the
//! variational autoencoder assembled from those pieces.

pub mod features;
pub mod gconv;
pub mod hierarchy;
pub mod laplacian;
pub mod mesh;
pub mod pooling;
pub mod reconstruct;
pub mod simplify;
pub mod sparse;
pub mod synth;
pub mod vae;

pub use features::{
    decode_features, encode_features, polar_decompose, rotation_exp, rotation_log,
    DeformGradient, FeatureError, FeatureSet, ScaleParams,
};
pub use hierarchy::{build_hierarchy, content_hash, load_hierarchy, save_hierarchy, Hierarchy};
pub use pooling::{build_pool_operator, PoolError, PoolOperator};
pub use reconstruct::{reconstruct_positions, ReconstructError};
pub use laplacian::{estimate_lambda_max, normalized_laplacian};
pub use mesh::{
    build_adjacency, parse_obj, validate_same_connectivity, write_obj, Adjacency,
    ConnectivityCheck, Mesh, MeshError,
};
pub use simplify::{
    optimal_position, simplify_to, vertex_quadric, ContractionMap, Decimator, Quadric,
    SimplifyError, SimplifyOutcome, SimplifyStatus,
};
pub use sparse::{SparseBuilder, SparseError, SparseMatrix};
pub use vae::{
    adam_step, build_model, count_parameters, count_parameters_for, decode, encode, load_params,
    loss_and_grads, reparameterize, save_params, train, AdamState, ArchSpec, EpochLog, Grads,
    LatentCode, LossParts, ModelContext, TrainConfig, VaeError, VaeParams,
};
