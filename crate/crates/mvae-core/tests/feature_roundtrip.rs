//! End-to-end feature pipeline: gradients -> polar -> log -> scale ->
//! unscale -> exp -> reconstruct. Deformations that are affine over the
//! whole mesh are exactly representable by per-vertex gradients, so the
//! round trip must recover positions to solver precision.

use mvae_core::features::{decode_features, encode_features, rotation_exp};
use mvae_core::mesh::build_adjacency;
use mvae_core::reconstruct::reconstruct_positions;
use mvae_core::synth;
use nalgebra::{Matrix3, Point3, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_affine(rng: &mut ChaCha8Rng) -> (Matrix3<f64>, Vector3<f64>) {
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    )
    .normalize();
    let angle = rng.random_range(0.1..2.5);
    let r = rotation_exp(&(axis * angle));
    let mut s = Matrix3::from_fn(|_, _| rng.random_range(-0.15..0.15));
    s = (s + s.transpose()) * 0.5 + Matrix3::identity();
    let t = Vector3::new(
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
    );
    (r * s, t)
}

#[test]
fn affine_deformations_round_trip_through_features() {
    // ~500-vertex cylinder, 5 affine deformations.
    let base = synth::cylinder_tube(63, 8, 0.3, 2.0);
    assert_eq!(base.vertex_count(), 504);
    let adj = build_adjacency(&base).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut shapes = Vec::new();
    let mut maps = Vec::new();
    for _ in 0..5 {
        let (m, t) = random_affine(&mut rng);
        shapes.push(synth::affine_deformed(&base, &m, &t));
        maps.push((m, t));
    }
    let set = encode_features(&base, &shapes, &adj, "cylinder").unwrap();
    let bbox = base.bbox_diagonal();
    for (k, scaled) in set.shapes.iter().enumerate() {
        let gradients = decode_features(scaled.view(), &set.scale);
        let anchor = (0usize, shapes[k][0]);
        let recon = reconstruct_positions(&base, &gradients, &adj, anchor).unwrap();
        let max_err = recon
            .iter()
            .zip(&shapes[k])
            .map(|(p, q)| (p - q).norm())
            .fold(0.0, f64::max);
        assert!(
            max_err < 1e-6 * bbox,
            "shape {k}: max reconstruction error {max_err} vs bbox {bbox}"
        );
    }
}

#[test]
fn bent_shapes_round_trip_within_feature_accuracy() {
    // Non-affine bends are only approximately representable; the pipeline
    // should still reconstruct well within a fraction of the bbox.
    let base = synth::cylinder_tube(63, 8, 0.3, 2.0);
    let adj = build_adjacency(&base).unwrap();
    let (_, family) = synth::bent_cylinder_family(63, 8, 6, 0.7);
    let set = encode_features(&base, &family, &adj, "cylinder").unwrap();
    let bbox = base.bbox_diagonal();
    for (k, scaled) in set.shapes.iter().enumerate() {
        let gradients = decode_features(scaled.view(), &set.scale);
        let recon =
            reconstruct_positions(&base, &gradients, &adj, (0, family[k][0])).unwrap();
        let rms = (recon
            .iter()
            .zip(&family[k])
            .map(|(p, q)| (p - q).norm_squared())
            .sum::<f64>()
            / recon.len() as f64)
            .sqrt();
        assert!(rms < 0.01 * bbox, "shape {k}: rms {rms} vs bbox {bbox}");
    }
}

#[test]
fn reconstruction_energy_dominated_by_perturbations() {
    let base = synth::cylinder_tube(20, 8, 0.3, 2.0);
    let adj = build_adjacency(&base).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (m, t) = random_affine(&mut rng);
    let deformed = synth::affine_deformed(&base, &m, &t);
    let grads = vec![m; base.vertex_count()];
    let solution = reconstruct_positions(&base, &grads, &adj, (0, deformed[0])).unwrap();
    let e0 = mvae_core::reconstruct::reconstruction_energy(&base, &grads, &solution);
    for _ in 0..10 {
        let perturbed: Vec<Point3<f64>> = solution
            .iter()
            .map(|p| {
                Point3::new(
                    p.x + rng.random_range(-1e-4..1e-4),
                    p.y + rng.random_range(-1e-4..1e-4),
                    p.z + rng.random_range(-1e-4..1e-4),
                )
            })
            .collect();
        let e = mvae_core::reconstruct::reconstruction_energy(&base, &grads, &perturbed);
        assert!(e >= e0);
    }
}
