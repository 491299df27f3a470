//! Loss, gradients, Adam, and the training loop.

use ndarray::{Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::model::{
    backward_decoder, backward_encoder, decode_full, encode_full, with_condition_columns,
    LatentCode,
};
use super::{Grads, ModelContext, TrainConfig, VaeError, VaeParams};

const SIGMA_FLOOR: f64 = 1e-6;

/// Loss components; `total = recon + alpha * kl + l2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub recon: f64,
    pub kl: f64,
    pub l2: f64,
    pub total: f64,
}

/// Closed-form KL divergence of N(mu, sigma^2) from N(0, I), with sigma
/// clamped away from zero before the log.
pub fn kl_divergence(mu: &Array1<f64>, sigma: &Array1<f64>) -> f64 {
    mu.iter()
        .zip(sigma)
        .map(|(&m, &s)| {
            let sc = s.max(SIGMA_FLOOR);
            0.5 * (m * m + s * s - (sc * sc).ln() - 1.0)
        })
        .sum()
}

/// Mean-squared reconstruction loss over a batch with the KL term, plus
/// exact reverse-mode gradients through decoder, reparameterization, and
/// encoder. `eps` carries one recorded noise vector per shape so the same
/// loss is reproducible (and finite-difference checkable). The L2 value is
/// reported here; its gradient is applied inside the Adam step.
pub fn loss_and_grads(
    ctx: &ModelContext,
    params: &VaeParams,
    batch: &[ArrayView2<'_, f64>],
    labels: Option<&[usize]>,
    eps: &[Array1<f64>],
    alpha: f64,
    l2: f64,
) -> Result<(LossParts, Grads, Vec<LatentCode>), VaeError> {
    assert_eq!(batch.len(), eps.len(), "one eps vector per shape");
    let m = batch.len() as f64;
    let mut grads = Grads::zeros_like(params);
    let mut recon_sum = 0.0;
    let mut kl_sum = 0.0;
    let mut codes = Vec::with_capacity(batch.len());
    for (i, x) in batch.iter().enumerate() {
        let label = labels.map(|l| l[i]);
        let x_cond = with_condition_columns(*x, &params.arch, label)?;
        let enc = encode_full(ctx, params, &x_cond)?;
        check_finite(&enc.mu, || format!("mu of shape {i}"))?;
        check_finite(&enc.sigma, || format!("sigma of shape {i}"))?;
        let z = &enc.mu + &(&enc.sigma * &eps[i]);
        let dec = decode_full(ctx, params, &z, label)?;
        check_finite_arr2(&dec.xhat, || format!("decoder output of shape {i}"))?;

        let diff = &dec.xhat - x;
        recon_sum += diff.iter().map(|d| d * d).sum::<f64>();
        kl_sum += kl_divergence(&enc.mu, &enc.sigma);

        let d_xhat = diff.mapv(|d| d / m);
        let dz = backward_decoder(ctx, params, &dec, &d_xhat, &mut grads)?;
        let kl_w = alpha / m;
        let d_mu = &dz + &enc.mu.mapv(|v| kl_w * v);
        let d_sigma_kl = enc.sigma.mapv(|s| {
            if s > SIGMA_FLOOR {
                kl_w * (s - 1.0 / s)
            } else {
                kl_w * s
            }
        });
        let d_sigma = &(&dz * &eps[i]) + &d_sigma_kl;
        backward_encoder(ctx, params, &enc, &d_mu, &d_sigma, &mut grads)?;

        codes.push(LatentCode {
            mean: enc.mu,
            deviation: enc.sigma,
            sample: Some(z),
        });
    }
    let recon = recon_sum / (2.0 * m);
    let kl = kl_sum / m;
    let l2_value = if l2 > 0.0 {
        l2 * params
            .tensor_list()
            .iter()
            .map(|t| t.iter().map(|w| w * w).sum::<f64>())
            .sum::<f64>()
    } else {
        0.0
    };
    let total = recon + alpha * kl + l2_value;
    if !total.is_finite() {
        return Err(VaeError::NonFinite("total loss".to_string()));
    }
    Ok((
        LossParts {
            recon,
            kl,
            l2: l2_value,
            total,
        },
        grads,
        codes,
    ))
}

fn check_finite(a: &Array1<f64>, what: impl Fn() -> String) -> Result<(), VaeError> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(VaeError::NonFinite(what()));
    }
    Ok(())
}

fn check_finite_arr2(a: &Array2<f64>, what: impl Fn() -> String) -> Result<(), VaeError> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(VaeError::NonFinite(what()));
    }
    Ok(())
}

/// First/second-moment state for every trainable tensor, in declaration
/// order.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &VaeParams) -> Self {
        let zeros: Vec<Array2<f64>> = params
            .tensor_list()
            .iter()
            .map(|t| Array2::zeros(t.raw_dim()))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// Bias-corrected Adam update of one tensor. L2 regularization enters as a
/// gradient term `2 * l2 * w`.
pub fn adam_update_tensor(
    w: &mut Array2<f64>,
    g: &Array2<f64>,
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    t: u64,
    cfg: &TrainConfig,
) {
    let b1 = cfg.beta1;
    let b2 = cfg.beta2;
    let bc1 = 1.0 - b1.powi(t as i32);
    let bc2 = 1.0 - b2.powi(t as i32);
    ndarray::Zip::from(w)
        .and(g)
        .and(m)
        .and(v)
        .for_each(|w, &g, m, v| {
            let g = g + 2.0 * cfg.l2 * *w;
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        });
}

/// One optimizer step over all tensors.
pub fn adam_step(
    params: &mut VaeParams,
    grads: &Grads,
    state: &mut AdamState,
    cfg: &TrainConfig,
) {
    state.t += 1;
    let t = state.t;
    let gs = grads.tensor_list();
    let ws = params.tensor_list_mut();
    assert_eq!(ws.len(), gs.len());
    for (k, (w, g)) in ws.into_iter().zip(gs).enumerate() {
        adam_update_tensor(w, g, &mut state.m[k], &mut state.v[k], t, cfg);
    }
}

/// One loss-log record per epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub recon: f64,
    pub kl: f64,
    pub total: f64,
}

/// Deterministic training: shapes iterate in dataset order, batches are
/// sequential chunks, and the noise stream comes from the seeded generator.
pub fn train(
    ctx: &ModelContext,
    params: &mut VaeParams,
    shapes: &[Array2<f64>],
    labels: Option<&[usize]>,
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>, VaeError> {
    assert!(!shapes.is_empty(), "training set is empty");
    if let Some(l) = labels {
        assert_eq!(l.len(), shapes.len(), "one label per shape");
    }
    let m_total = shapes.len();
    let batch = if cfg.batch_size == 0 || cfg.batch_size > m_total {
        m_total
    } else {
        cfg.batch_size
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(params);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut recon_weighted = 0.0;
        let mut kl_weighted = 0.0;
        let mut l2_last = 0.0;
        for chunk in (0..m_total).collect::<Vec<_>>().chunks(batch) {
            let views: Vec<ArrayView2<'_, f64>> =
                chunk.iter().map(|&i| shapes[i].view()).collect();
            let chunk_labels: Option<Vec<usize>> =
                labels.map(|l| chunk.iter().map(|&i| l[i]).collect());
            let eps: Vec<Array1<f64>> = chunk
                .iter()
                .map(|_| {
                    Array1::from_iter(
                        (0..params.arch.latent).map(|_| StandardNormal.sample(&mut rng)),
                    )
                })
                .collect();
            let (parts, grads, _) = loss_and_grads(
                ctx,
                params,
                &views,
                chunk_labels.as_deref(),
                &eps,
                cfg.alpha,
                cfg.l2,
            )?;
            adam_step(params, &grads, &mut state, cfg);
            let w = chunk.len() as f64 / m_total as f64;
            recon_weighted += parts.recon * w;
            kl_weighted += parts.kl * w;
            l2_last = parts.l2;
        }
        log.push(EpochLog {
            epoch,
            recon: recon_weighted,
            kl: kl_weighted,
            total: recon_weighted + cfg.alpha * kl_weighted + l2_last,
        });
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::build_hierarchy;
    use crate::synth;
    use crate::vae::{build_model, ArchSpec};
    use ndarray::Array2;

    fn toy() -> (ModelContext, VaeParams, Vec<Array2<f64>>) {
        let mesh = synth::icosphere(1); // 42 vertices
        let h = build_hierarchy(&mesh, 1, 0.001).unwrap();
        let arch = ArchSpec {
            latent: 6,
            ..ArchSpec::default()
        };
        let ctx = ModelContext::from_hierarchy(&h, &arch).unwrap();
        let params = build_model(&ctx, &arch, 3).unwrap();
        let shapes: Vec<Array2<f64>> = (0..4)
            .map(|s| {
                Array2::from_shape_fn((42, 9), |(i, j)| {
                    0.5 * ((i * 9 + j + s * 100) as f64).sin()
                })
            })
            .collect();
        (ctx, params, shapes)
    }

    #[test]
    fn kl_closed_form_values() {
        let mu = Array1::ones(128);
        let sigma = Array1::ones(128);
        assert!((kl_divergence(&mu, &sigma) - 64.0).abs() < 1e-12);
        let mu = Array1::zeros(5);
        let sigma = Array1::ones(5);
        assert_eq!(kl_divergence(&mu, &sigma), 0.0);
    }

    #[test]
    fn kl_non_negative_over_domain() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let mu = Array1::from_shape_fn(8, |_| rng.random_range(-3.0..3.0));
            let sigma = Array1::from_shape_fn(8, |_| rng.random_range(1e-9..1.0));
            assert!(kl_divergence(&mu, &sigma) >= -1e-12);
        }
    }

    #[test]
    fn perfect_reconstruction_zero_loss() {
        // With mu = 0, sigma = 1 and xhat = x the loss vanishes; emulate by
        // checking the loss formula pieces directly.
        let mu = Array1::zeros(4);
        let sigma = Array1::ones(4);
        assert_eq!(kl_divergence(&mu, &sigma), 0.0);
    }

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        let cfg = TrainConfig {
            l2: 0.0,
            ..TrainConfig::default()
        };
        let mut w = ndarray::arr2(&[[1.0, -2.0]]);
        let g = ndarray::arr2(&[[0.3, -0.7]]);
        let mut m = Array2::zeros((1, 2));
        let mut v = Array2::zeros((1, 2));
        adam_update_tensor(&mut w, &g, &mut m, &mut v, 1, &cfg);
        // First step: update = -lr * g / (|g| + eps) ~ -lr * sign(g).
        assert!((w[[0, 0]] - (1.0 - 0.001)).abs() < 1e-6);
        assert!((w[[0, 1]] - (-2.0 + 0.001)).abs() < 1e-6);
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let cfg = TrainConfig {
            l2: 0.0,
            ..TrainConfig::default()
        };
        let mut w = ndarray::arr2(&[[1.5]]);
        let g = Array2::zeros((1, 1));
        let mut m = Array2::zeros((1, 1));
        let mut v = Array2::zeros((1, 1));
        for t in 1..=10 {
            adam_update_tensor(&mut w, &g, &mut m, &mut v, t, &cfg);
        }
        assert_eq!(w[[0, 0]], 1.5);
    }

    #[test]
    fn adam_converges_on_quadratic() {
        // Minimize w^2 / 2: gradient is w itself.
        let cfg = TrainConfig {
            learning_rate: 0.05,
            l2: 0.0,
            ..TrainConfig::default()
        };
        let mut w = ndarray::arr2(&[[1.0]]);
        let mut m = Array2::zeros((1, 1));
        let mut v = Array2::zeros((1, 1));
        for t in 1..=100 {
            let g = w.clone();
            adam_update_tensor(&mut w, &g, &mut m, &mut v, t, &cfg);
        }
        assert!(w[[0, 0]].abs() < 1e-2, "w = {}", w[[0, 0]]);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters_and_loss() {
        let (ctx, mut params, shapes) = toy();
        let before = params.clone();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 1,
            seed: 5,
            ..TrainConfig::default()
        };
        let log = train(&ctx, &mut params, &shapes, None, &cfg).unwrap();
        assert_eq!(params, before);
        assert_eq!(log.len(), 1);
    }

    #[test]
    fn training_is_bit_deterministic() {
        let (ctx, params, shapes) = toy();
        let cfg = TrainConfig {
            epochs: 10,
            seed: 42,
            ..TrainConfig::default()
        };
        let mut p1 = params.clone();
        let log1 = train(&ctx, &mut p1, &shapes, None, &cfg).unwrap();
        let mut p2 = params.clone();
        let log2 = train(&ctx, &mut p2, &shapes, None, &cfg).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(log1, log2);
    }

    #[test]
    fn loss_decreases_during_overfit() {
        let (ctx, mut params, shapes) = toy();
        let cfg = TrainConfig {
            epochs: 100,
            seed: 1,
            l2: 0.0,
            ..TrainConfig::default()
        };
        let log = train(&ctx, &mut params, &shapes, None, &cfg).unwrap();
        assert!(
            log[99].total < log[0].total,
            "loss did not decrease: {} -> {}",
            log[0].total,
            log[99].total
        );
    }

    #[test]
    fn minibatch_covers_all_shapes() {
        let (ctx, mut params, shapes) = toy();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 3,
            seed: 9,
            ..TrainConfig::default()
        };
        let log = train(&ctx, &mut params, &shapes, None, &cfg).unwrap();
        assert_eq!(log.len(), 2);
        assert!(log.iter().all(|e| e.total.is_finite()));
    }
}
