//! Model construction and the forward/backward passes.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::gconv::{cheb_apply, gconv_backward, gconv_forward_cached, Activation};

use super::{
    decoder_plan, encoder_plan, ArchSpec, DecStep, EncStep, Grads, ModelContext, VaeError,
    VaeParams, INPUT_DIM,
};

/// Encoder output: posterior mean and deviation, plus the sample when one
/// was drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub mean: Array1<f64>,
    pub deviation: Array1<f64>,
    pub sample: Option<Array1<f64>>,
}

/// `z = mu + sigma .* eps`.
pub fn reparameterize(mu: &Array1<f64>, sigma: &Array1<f64>, eps: &Array1<f64>) -> Array1<f64> {
    mu + &(sigma * eps)
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-s..=s))
}

/// Initializes all trainable tensors for `arch` on the hierarchy behind
/// `ctx`. Decoder stacks start as transposes of their encoder counterparts;
/// the first encoder convolution's condition rows are dropped when slicing
/// the final decoder stack.
pub fn build_model(ctx: &ModelContext, arch: &ArchSpec, seed: u64) -> Result<VaeParams, VaeError> {
    arch.validate()?;
    if arch.pool_count() + 1 > ctx.vertex_counts.len() {
        return Err(VaeError::NotEnoughLevels {
            needed: arch.pool_count(),
            available: ctx.vertex_counts.len().saturating_sub(1),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enc_shapes = arch.encoder_conv_shapes();
    let mut enc_convs = Vec::with_capacity(enc_shapes.len());
    for &(c_in, c_out) in &enc_shapes {
        let stack: Vec<Array2<f64>> = (0..arch.order)
            .map(|_| glorot(&mut rng, c_in, c_out, c_in * arch.order, c_out))
            .collect();
        enc_convs.push(stack);
    }
    let d = ctx.pooled_vertex_count() * arch.width;
    let fc_mean = glorot(&mut rng, d, arch.latent, d, arch.latent);
    let fc_dev = glorot(&mut rng, d, arch.latent, d, arch.latent);
    let n_conv = enc_convs.len();
    let dec_convs: Vec<Vec<Array2<f64>>> = (0..n_conv)
        .map(|i| {
            let enc = &enc_convs[n_conv - 1 - i];
            enc.iter()
                .map(|theta| {
                    let t = theta.t().to_owned();
                    if i == n_conv - 1 && arch.condition > 0 {
                        // strip condition columns: reconstruct features only
                        t.slice(ndarray::s![.., ..INPUT_DIM]).to_owned()
                    } else {
                        t
                    }
                })
                .collect()
        })
        .collect();
    let cond_decoder = if arch.condition > 0 {
        Some(glorot(&mut rng, arch.condition, d, arch.condition, d))
    } else {
        None
    };
    Ok(VaeParams {
        arch: arch.clone(),
        seed,
        hierarchy_hash: ctx.hierarchy_hash,
        enc_convs,
        fc_mean,
        fc_dev,
        dec_convs,
        cond_decoder,
    })
}

fn one_hot(label: usize, dim: usize) -> Result<Array1<f64>, VaeError> {
    if label >= dim {
        return Err(VaeError::LabelOutOfRange {
            label,
            condition: dim,
        });
    }
    let mut v = Array1::zeros(dim);
    v[label] = 1.0;
    Ok(v)
}

fn check_label(arch: &ArchSpec, label: Option<usize>) -> Result<(), VaeError> {
    match (arch.condition, label) {
        (0, Some(_)) => Err(VaeError::UnexpectedLabel),
        (c, None) if c > 0 => Err(VaeError::MissingLabel),
        _ => Ok(()),
    }
}

/// Appends the one-hot condition as constant columns to every vertex row.
pub(crate) fn with_condition_columns(
    x: ArrayView2<'_, f64>,
    arch: &ArchSpec,
    label: Option<usize>,
) -> Result<Array2<f64>, VaeError> {
    check_label(arch, label)?;
    if arch.condition == 0 {
        return Ok(x.to_owned());
    }
    let label = label.expect("validated above");
    let hot = one_hot(label, arch.condition)?;
    let mut out = Array2::zeros((x.nrows(), x.ncols() + arch.condition));
    out.slice_mut(ndarray::s![.., ..x.ncols()]).assign(&x);
    for (j, &h) in hot.iter().enumerate() {
        out.column_mut(x.ncols() + j).fill(h);
    }
    Ok(out)
}

pub(crate) struct EncCache {
    /// Per convolution: Chebyshev stack of its input and its post-activation
    /// output (the output feeds the tanh backward rule).
    pub stacks: Vec<Vec<Array2<f64>>>,
    pub outputs: Vec<Array2<f64>>,
    pub flat: Array1<f64>,
    pub mu: Array1<f64>,
    pub sigma: Array1<f64>,
}

pub(crate) fn encode_full(
    ctx: &ModelContext,
    params: &VaeParams,
    x_cond: &Array2<f64>,
) -> Result<EncCache, VaeError> {
    let arch = &params.arch;
    let expect_cols = INPUT_DIM + arch.condition;
    if x_cond.nrows() != ctx.vertex_counts[0] || x_cond.ncols() != expect_cols {
        return Err(VaeError::ShapeMismatch {
            got: format!("{}x{}", x_cond.nrows(), x_cond.ncols()),
            expected: format!("{}x{}", ctx.vertex_counts[0], expect_cols),
        });
    }
    let mut stacks = Vec::new();
    let mut outputs = Vec::new();
    let mut cur = x_cond.clone();
    for step in encoder_plan(arch) {
        match step {
            EncStep::Conv { level, idx, act } => {
                let stack = cheb_apply(&ctx.laplacians[level], cur.view(), arch.order)?;
                let pre = gconv_forward_cached(&stack, &params.enc_convs[idx], cur.ncols())?;
                let out = act.apply(&pre);
                stacks.push(stack);
                outputs.push(out.clone());
                cur = out;
            }
            EncStep::Pool { map } => {
                cur = ctx.pools[map].pool(cur.view())?;
            }
        }
    }
    let flat = Array1::from_iter(cur.iter().copied());
    let mu = flat.dot(&params.fc_mean);
    let sig_pre = flat.dot(&params.fc_dev);
    let sigma = sig_pre.mapv(|v| 1.0 / (1.0 + (-v).exp()));
    Ok(EncCache {
        stacks,
        outputs,
        flat,
        mu,
        sigma,
    })
}

pub(crate) struct DecCache {
    pub z_latent: Array1<f64>,
    pub cond: Option<Array1<f64>>,
    pub fc_out: Array1<f64>,
    pub stacks: Vec<Vec<Array2<f64>>>,
    pub outputs: Vec<Array2<f64>>,
    pub xhat: Array2<f64>,
}

pub(crate) fn decode_full(
    ctx: &ModelContext,
    params: &VaeParams,
    z: &Array1<f64>,
    label: Option<usize>,
) -> Result<DecCache, VaeError> {
    let arch = &params.arch;
    check_label(arch, label)?;
    if z.len() != arch.latent {
        return Err(VaeError::ShapeMismatch {
            got: format!("latent {}", z.len()),
            expected: format!("latent {}", arch.latent),
        });
    }
    let cond = match label {
        Some(l) if arch.condition > 0 => Some(one_hot(l, arch.condition)?),
        _ => None,
    };
    // Tied decoder fc: transpose of fc_mean on z, plus the trainable
    // condition block on the one-hot part.
    let mut u_pre = params.fc_mean.dot(z);
    if let (Some(c), Some(w)) = (&cond, &params.cond_decoder) {
        u_pre += &c.dot(w);
    }
    let fc_out = u_pre.mapv(f64::tanh);
    let v_p = ctx.pooled_vertex_count();
    let mut cur = fc_out
        .clone()
        .into_shape_with_order((v_p, arch.width))
        .expect("flat dimension matches");
    let mut stacks = Vec::new();
    let mut outputs = Vec::new();
    for step in decoder_plan(arch) {
        match step {
            DecStep::Conv { level, idx } => {
                let stack = cheb_apply(&ctx.laplacians[level], cur.view(), arch.order)?;
                let pre = gconv_forward_cached(&stack, &params.dec_convs[idx], cur.ncols())?;
                let out = Activation::Tanh.apply(&pre);
                stacks.push(stack);
                outputs.push(out.clone());
                cur = out;
            }
            DecStep::Depool { map } => {
                cur = ctx.pools[map].depool(cur.view())?;
            }
        }
    }
    Ok(DecCache {
        z_latent: z.clone(),
        cond,
        fc_out,
        stacks,
        outputs,
        xhat: cur.clone(),
    })
}

/// Posterior of one shape: mean (linear fc) and deviation (sigmoid fc).
pub fn encode(
    ctx: &ModelContext,
    params: &VaeParams,
    x: ArrayView2<'_, f64>,
    label: Option<usize>,
) -> Result<LatentCode, VaeError> {
    let x_cond = with_condition_columns(x, &params.arch, label)?;
    let cache = encode_full(ctx, params, &x_cond)?;
    Ok(LatentCode {
        mean: cache.mu,
        deviation: cache.sigma,
        sample: None,
    })
}

/// Decodes a latent vector to scaled features in (-1, 1).
pub fn decode(
    ctx: &ModelContext,
    params: &VaeParams,
    z: &Array1<f64>,
    label: Option<usize>,
) -> Result<Array2<f64>, VaeError> {
    Ok(decode_full(ctx, params, z, label)?.xhat)
}

/// Backpropagates through the decoder into gradients and the latent
/// gradient. `d_xhat` is the upstream gradient on the decoder output.
pub(crate) fn backward_decoder(
    ctx: &ModelContext,
    params: &VaeParams,
    cache: &DecCache,
    d_xhat: &Array2<f64>,
    grads: &mut Grads,
) -> Result<Array1<f64>, VaeError> {
    let arch = &params.arch;
    let mut d_cur = d_xhat.clone();
    let mut conv_seen = 0usize;
    let plan = decoder_plan(arch);
    let n_convs = arch.conv_count();
    for step in plan.iter().rev() {
        match *step {
            DecStep::Conv { level, idx } => {
                conv_seen += 1;
                let cache_idx = n_convs - conv_seen;
                let out = &cache.outputs[cache_idx];
                let d_pre = Activation::Tanh.backward_from_output(out, &d_cur);
                let (dx, dtheta) = gconv_backward(
                    &ctx.laplacians[level],
                    &cache.stacks[cache_idx],
                    &params.dec_convs[idx],
                    d_pre.view(),
                )?;
                for (g, d) in grads.dec_convs[idx].iter_mut().zip(dtheta) {
                    *g += &d;
                }
                d_cur = dx;
            }
            DecStep::Depool { map } => {
                d_cur = ctx.pools[map].depool_backprop(d_cur.view())?;
            }
        }
    }
    let d_fc_out = Array1::from_iter(d_cur.iter().copied());
    let d_u_pre = &d_fc_out * &cache.fc_out.mapv(|y| 1.0 - y * y);
    // Tied fc: contributes to fc_mean through the decoder path.
    grads.fc_mean += &outer(&d_u_pre, &cache.z_latent);
    if let (Some(c), Some(g)) = (&cache.cond, grads.cond_decoder.as_mut()) {
        *g += &outer(c, &d_u_pre);
    }
    let dz = params.fc_mean.t().dot(&d_u_pre);
    Ok(dz)
}

/// Backpropagates through the encoder given gradients on mu and sigma.
pub(crate) fn backward_encoder(
    ctx: &ModelContext,
    params: &VaeParams,
    cache: &EncCache,
    d_mu: &Array1<f64>,
    d_sigma: &Array1<f64>,
    grads: &mut Grads,
) -> Result<(), VaeError> {
    let arch = &params.arch;
    let d_sig_pre = d_sigma * &cache.sigma.mapv(|s| s * (1.0 - s));
    grads.fc_dev += &outer(&cache.flat, &d_sig_pre);
    grads.fc_mean += &outer(&cache.flat, d_mu);
    let d_flat = params.fc_dev.dot(&d_sig_pre) + params.fc_mean.dot(d_mu);
    let v_p = ctx.pooled_vertex_count();
    let mut d_cur = d_flat
        .into_shape_with_order((v_p, arch.width))
        .expect("flat dimension matches");
    let plan = encoder_plan(arch);
    for step in plan.iter().rev() {
        match *step {
            EncStep::Conv { level, idx, act } => {
                let out = &cache.outputs[idx];
                let d_pre = act.backward_from_output(out, &d_cur);
                let (dx, dtheta) = gconv_backward(
                    &ctx.laplacians[level],
                    &cache.stacks[idx],
                    &params.enc_convs[idx],
                    d_pre.view(),
                )?;
                for (g, d) in grads.enc_convs[idx].iter_mut().zip(dtheta) {
                    *g += &d;
                }
                d_cur = dx;
            }
            EncStep::Pool { map } => {
                d_cur = ctx.pools[map].pool_backprop(d_cur.view())?;
            }
        }
    }
    Ok(())
}

pub(crate) fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let a2 = a.view().insert_axis(Axis(1));
    let b2 = b.view().insert_axis(Axis(0));
    a2.dot(&b2)
}
