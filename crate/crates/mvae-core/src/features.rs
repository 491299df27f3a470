//! Per-vertex deformation features.
//!
//! Each vertex of a deformed shape carries a 3x3 deformation gradient: the
//! affine map that best explains how its one-ring edges moved relative to the
//! base mesh. Polar decomposition splits it into a rotation and a symmetric
//! scale/shear part; the rotation's axis-angle log (3 values) and the upper
//! triangle of the symmetric part (6 values) form the 9-dimensional feature.
//! A dataset-wide affine scaling maps every feature column into
//! [-0.95, 0.95] so tanh activations can represent the data.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Point3, Vector3};
use ndarray::{Array2, ArrayView2};
use thiserror::Error;

use crate::mesh::{cotangent_edge_weights, Adjacency, EdgeWeights, Mesh};

pub const FEAT_MAGIC: &[u8; 9] = b"MVAE-FEAT";
pub const FEAT_VERSION: u32 = 1;
pub const FEATURE_DIM: usize = 9;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("shape {shape} has {got} vertices, expected {expected}")]
    ShapeSizeMismatch {
        shape: usize,
        got: usize,
        expected: usize,
    },
    #[error("feature matrix has {got} columns, expected 9")]
    ColumnMismatch { got: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: bad magic (expected MVAE-FEAT)")]
    BadMagic { path: String },
    #[error("{path}: unsupported version {version}")]
    BadVersion { path: String, version: u32 },
    #[error("{path}: truncated or inconsistent feature file")]
    Truncated { path: String },
}

/// Deformation gradient with its polar factors: `t = r * s`, `r` a proper
/// rotation, `s` symmetric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeformGradient {
    pub t: Matrix3<f64>,
    pub r: Matrix3<f64>,
    pub s: Matrix3<f64>,
}

impl DeformGradient {
    pub fn from_matrix(t: Matrix3<f64>) -> Self {
        let (r, s) = polar_decompose(&t);
        DeformGradient { t, r, s }
    }
}

/// Polar decomposition via SVD: always returns a proper rotation, even for
/// reflections or rank-deficient input (the smallest singular direction
/// absorbs the sign).
pub fn polar_decompose(t: &Matrix3<f64>) -> (Matrix3<f64>, Matrix3<f64>) {
    let svd = t.svd(true, true);
    let u = svd.u.expect("svd with u");
    let v_t = svd.v_t.expect("svd with v_t");
    let sv = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let mut u2 = Matrix3::zeros();
    let mut v2 = Matrix3::zeros();
    let mut s2 = Vector3::zeros();
    for (k, &i) in order.iter().enumerate() {
        u2.set_column(k, &u.column(i));
        v2.set_column(k, &v_t.row(i).transpose());
        s2[k] = sv[i];
    }
    let sign = if (u2 * v2.transpose()).determinant() < 0.0 {
        -1.0
    } else {
        1.0
    };
    let d = Vector3::new(1.0, 1.0, sign);
    let r = u2 * Matrix3::from_diagonal(&d) * v2.transpose();
    let s = v2 * Matrix3::from_diagonal(&d.component_mul(&s2)) * v2.transpose();
    let s = (s + s.transpose()) * 0.5;
    (r, s)
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Principal-branch axis-angle log of a proper rotation: the returned vector
/// has norm theta in [0, pi].
pub fn rotation_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos_theta = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    let w = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    ) * 0.5; // = sin(theta) * axis
    if theta < 1e-8 {
        return w;
    }
    if theta < std::f64::consts::PI - 1e-4 {
        return w * (theta / theta.sin());
    }
    // Near pi the skew part loses the axis; recover it from the symmetric
    // part, where (R_sym + I) / 2 approaches the outer product of the axis.
    // Symmetrizing first removes the sin(theta) skew contamination.
    let r_sym = (r + r.transpose()) * 0.5;
    let m = (r_sym + Matrix3::identity()) * 0.5;
    let diag = [m[(0, 0)], m[(1, 1)], m[(2, 2)]];
    let k = diag
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let col = m.column(k);
    let mut axis = Vector3::new(col[0], col[1], col[2]);
    let norm = axis.norm();
    if norm > 0.0 {
        axis /= norm;
    } else {
        axis = Vector3::x();
    }
    let w_dot = axis.dot(&w);
    if w_dot < 0.0 {
        axis = -axis;
    } else if w_dot == 0.0 {
        // theta == pi exactly: both signs are valid; pick the one whose first
        // nonzero component is positive.
        for k in 0..3 {
            if axis[k] != 0.0 {
                if axis[k] < 0.0 {
                    axis = -axis;
                }
                break;
            }
        }
    }
    axis * theta
}

/// Rodrigues exponential of an axis-angle vector.
pub fn rotation_exp(v: &Vector3<f64>) -> Matrix3<f64> {
    let theta = v.norm();
    let k = skew(v);
    if theta < 1e-12 {
        return Matrix3::identity() + k;
    }
    let half = 0.5 * theta;
    let a = theta.sin() / theta;
    let b = 2.0 * half.sin() * half.sin() / (theta * theta);
    Matrix3::identity() + k * a + (k * k) * b
}

/// Per-vertex deformation gradients plus the indices of vertices whose
/// normal equations needed regularization.
#[derive(Debug, Clone)]
pub struct GradientReport {
    pub gradients: Vec<Matrix3<f64>>,
    pub regularized: Vec<usize>,
}

/// Least-squares fit of a 3x3 affine map per vertex: minimizes the weighted
/// squared mismatch between deformed and mapped one-ring edges. Cotangent
/// weights (clamped below) are used for interior vertices; boundary vertices
/// fall back to uniform weights.
pub fn deformation_gradients(
    base: &Mesh,
    deformed: &[Point3<f64>],
    adj: &Adjacency,
    weights: &EdgeWeights,
) -> Result<GradientReport, FeatureError> {
    let v = base.vertex_count();
    if deformed.len() != v {
        return Err(FeatureError::ShapeSizeMismatch {
            shape: 0,
            got: deformed.len(),
            expected: v,
        });
    }
    let mut gradients = Vec::with_capacity(v);
    let mut regularized = Vec::new();
    for i in 0..v {
        let mut a = Matrix3::<f64>::zeros();
        let mut b = Matrix3::<f64>::zeros();
        for &j in &adj.one_rings[i] {
            let w = if weights.boundary[i] {
                1.0
            } else {
                weights.weights[&(i.min(j), i.max(j))]
            };
            let d = base.positions[i] - base.positions[j];
            let d_def = deformed[i] - deformed[j];
            a += w * d * d.transpose();
            b += w * d_def * d.transpose();
        }
        let scale = a.trace() / 3.0;
        let singular = !(scale > 0.0) || a.determinant().abs() < 1e-12 * scale * scale * scale;
        if singular {
            let bump = 1e-8 * a.trace().max(1e-300);
            a += Matrix3::identity() * bump;
            regularized.push(i);
        }
        let inv = a.try_inverse().unwrap_or_else(|| {
            // Pathological one-ring even after regularization.
            (a + Matrix3::identity() * (1e-6 * a.trace().abs().max(1.0)))
                .try_inverse()
                .expect("regularized normal matrix is invertible")
        });
        gradients.push(b * inv);
    }
    Ok(GradientReport {
        gradients,
        regularized,
    })
}

/// Feature row of one deformation gradient: rotation log then the upper
/// triangle of the symmetric factor (s11, s12, s13, s22, s23, s33).
pub fn gradient_to_feature(t: &Matrix3<f64>) -> [f64; FEATURE_DIM] {
    let (r, s) = polar_decompose(t);
    let log = rotation_log(&r);
    [
        log.x,
        log.y,
        log.z,
        s[(0, 0)],
        s[(0, 1)],
        s[(0, 2)],
        s[(1, 1)],
        s[(1, 2)],
        s[(2, 2)],
    ]
}

/// Inverse of [`gradient_to_feature`].
pub fn feature_to_gradient(row: &[f64]) -> Matrix3<f64> {
    let r = rotation_exp(&Vector3::new(row[0], row[1], row[2]));
    let s = Matrix3::new(
        row[3], row[4], row[5], row[4], row[6], row[7], row[5], row[7], row[8],
    );
    r * s
}

/// Raw (unscaled) V x 9 feature matrix of one deformed shape.
pub fn raw_features(
    base: &Mesh,
    deformed: &[Point3<f64>],
    adj: &Adjacency,
    weights: &EdgeWeights,
) -> Result<(Array2<f64>, Vec<usize>), FeatureError> {
    let report = deformation_gradients(base, deformed, adj, weights)?;
    let v = base.vertex_count();
    let mut q = Array2::zeros((v, FEATURE_DIM));
    for (i, t) in report.gradients.iter().enumerate() {
        let row = gradient_to_feature(t);
        for (j, &val) in row.iter().enumerate() {
            q[[i, j]] = val;
        }
    }
    Ok((q, report.regularized))
}

/// Per-column affine map `x -> a x + b` taking the training range of each
/// feature column onto [-0.95, 0.95].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleParams {
    pub coeffs: [(f64, f64); FEATURE_DIM],
}

impl ScaleParams {
    pub fn identity() -> Self {
        ScaleParams {
            coeffs: [(1.0, 0.0); FEATURE_DIM],
        }
    }

    /// Fits the map sending (min, max) of each column to (-0.95, 0.95). A
    /// column with range below 1e-12 maps to the constant 0 via a = 1,
    /// b = -min.
    pub fn fit(shapes: &[Array2<f64>]) -> Result<Self, FeatureError> {
        if shapes.is_empty() {
            return Err(FeatureError::EmptyDataset);
        }
        let mut coeffs = [(1.0, 0.0); FEATURE_DIM];
        for (j, coeff) in coeffs.iter_mut().enumerate() {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for q in shapes {
                for &x in q.column(j) {
                    lo = lo.min(x);
                    hi = hi.max(x);
                }
            }
            if hi - lo < 1e-12 {
                *coeff = (1.0, -lo);
            } else {
                let a = 1.9 / (hi - lo);
                *coeff = (a, -0.95 - a * lo);
            }
        }
        Ok(ScaleParams { coeffs })
    }

    pub fn apply(&self, raw: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = raw.to_owned();
        for (j, &(a, b)) in self.coeffs.iter().enumerate() {
            for x in out.column_mut(j) {
                *x = a * *x + b;
            }
        }
        out
    }

    pub fn invert(&self, scaled: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = scaled.to_owned();
        for (j, &(a, b)) in self.coeffs.iter().enumerate() {
            for x in out.column_mut(j) {
                *x = (*x - b) / a;
            }
        }
        out
    }
}

/// Scaled dataset features plus the scaling that produced them.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub vertex_count: usize,
    pub shapes: Vec<Array2<f64>>,
    pub scale: ScaleParams,
    pub reference: String,
}

/// Extracts and scales features for a whole dataset of deformed positions
/// sharing the base connectivity.
pub fn encode_features(
    base: &Mesh,
    shapes: &[Vec<Point3<f64>>],
    adj: &Adjacency,
    reference: &str,
) -> Result<FeatureSet, FeatureError> {
    if shapes.is_empty() {
        return Err(FeatureError::EmptyDataset);
    }
    let weights = cotangent_edge_weights(base);
    let mut raw = Vec::with_capacity(shapes.len());
    for (m, deformed) in shapes.iter().enumerate() {
        if deformed.len() != base.vertex_count() {
            return Err(FeatureError::ShapeSizeMismatch {
                shape: m,
                got: deformed.len(),
                expected: base.vertex_count(),
            });
        }
        let (q, _) = raw_features(base, deformed, adj, &weights)?;
        raw.push(q);
    }
    let scale = ScaleParams::fit(&raw)?;
    let scaled = raw.iter().map(|q| scale.apply(q.view())).collect();
    Ok(FeatureSet {
        vertex_count: base.vertex_count(),
        shapes: scaled,
        scale,
        reference: reference.to_string(),
    })
}

/// Features for held-out shapes under an existing training scaling.
pub fn encode_with_scale(
    base: &Mesh,
    shapes: &[Vec<Point3<f64>>],
    adj: &Adjacency,
    scale: &ScaleParams,
) -> Result<Vec<Array2<f64>>, FeatureError> {
    let weights = cotangent_edge_weights(base);
    let mut out = Vec::with_capacity(shapes.len());
    for (m, deformed) in shapes.iter().enumerate() {
        if deformed.len() != base.vertex_count() {
            return Err(FeatureError::ShapeSizeMismatch {
                shape: m,
                got: deformed.len(),
                expected: base.vertex_count(),
            });
        }
        let (q, _) = raw_features(base, deformed, adj, &weights)?;
        out.push(scale.apply(q.view()));
    }
    Ok(out)
}

/// Un-scales a V x 9 matrix and rebuilds one deformation gradient per vertex.
pub fn decode_features(scaled: ArrayView2<'_, f64>, scale: &ScaleParams) -> Vec<Matrix3<f64>> {
    let raw = scale.invert(scaled);
    raw.rows()
        .into_iter()
        .map(|row| feature_to_gradient(row.as_slice().expect("contiguous row")))
        .collect()
}

pub fn save_features(path: &Path, set: &FeatureSet) -> Result<(), FeatureError> {
    let io_err = |source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(FEAT_MAGIC);
    buf.extend_from_slice(&FEAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(set.vertex_count as u32).to_le_bytes());
    buf.extend_from_slice(&(FEATURE_DIM as u32).to_le_bytes());
    buf.extend_from_slice(&(set.shapes.len() as u32).to_le_bytes());
    for &(a, b) in &set.scale.coeffs {
        buf.extend_from_slice(&a.to_le_bytes());
        buf.extend_from_slice(&b.to_le_bytes());
    }
    for q in &set.shapes {
        for &x in q.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(&buf).map_err(io_err)?;
    Ok(())
}

/// Loads a feature file; the in-memory `reference` field is not part of the
/// format and is left for the caller to fill in.
pub fn load_features(path: &Path) -> Result<FeatureSet, FeatureError> {
    let io_err = |source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(io_err)?
        .read_to_end(&mut bytes)
        .map_err(io_err)?;
    let p = path.display().to_string();
    let truncated = || FeatureError::Truncated { path: p.clone() };
    let mut cursor = 0usize;
    let mut take = |n: usize| -> Result<&[u8], FeatureError> {
        if cursor + n > bytes.len() {
            return Err(truncated());
        }
        let s = &bytes[cursor..cursor + n];
        cursor += n;
        Ok(s)
    };
    if take(9)? != FEAT_MAGIC {
        return Err(FeatureError::BadMagic { path: p.clone() });
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != FEAT_VERSION {
        return Err(FeatureError::BadVersion {
            path: p.clone(),
            version,
        });
    }
    let v = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let c = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    if c != FEATURE_DIM {
        return Err(FeatureError::ColumnMismatch { got: c });
    }
    let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let mut coeffs = [(0.0, 0.0); FEATURE_DIM];
    for coeff in coeffs.iter_mut() {
        let a = f64::from_le_bytes(take(8)?.try_into().unwrap());
        let b = f64::from_le_bytes(take(8)?.try_into().unwrap());
        *coeff = (a, b);
    }
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let mut q = Array2::zeros((v, FEATURE_DIM));
        for i in 0..v {
            for j in 0..FEATURE_DIM {
                q[[i, j]] = f64::from_le_bytes(take(8)?.try_into().unwrap());
            }
        }
        shapes.push(q);
    }
    if cursor != bytes.len() {
        return Err(truncated());
    }
    Ok(FeatureSet {
        vertex_count: v,
        shapes,
        scale: ScaleParams { coeffs },
        reference: String::new(),
    })
}
