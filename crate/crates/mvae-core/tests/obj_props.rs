//! Property tests for OBJ round-tripping and adjacency determinism.

use mvae_core::mesh::{build_adjacency, parse_obj, write_obj, Mesh};
use nalgebra::Point3;
use proptest::prelude::*;

fn arb_position() -> impl Strategy<Value = Point3<f64>> {
    (
        -1e6f64..1e6f64,
        prop::num::f64::NORMAL.prop_filter("finite", |v| v.is_finite() && v.abs() < 1e12),
        -1e-3f64..1e-3f64,
    )
        .prop_map(|(x, y, z)| Point3::new(x, y, z))
}

/// Positions plus faces over those vertices with no repeated index.
fn arb_mesh() -> impl Strategy<Value = Mesh> {
    (3usize..20).prop_flat_map(|v| {
        let positions = prop::collection::vec(arb_position(), v);
        let face = (0..v, 0..v, 0..v).prop_filter_map("distinct indices", |(a, b, c)| {
            if a != b && b != c && a != c {
                Some([a, b, c])
            } else {
                None
            }
        });
        let faces = prop::collection::vec(face, 0..12);
        (positions, faces).prop_map(|(positions, faces)| Mesh { positions, faces })
    })
}

proptest! {
    #[test]
    fn parse_write_round_trip(mesh in arb_mesh()) {
        let text = write_obj(&mesh);
        let back = parse_obj(&text).unwrap();
        prop_assert_eq!(back, mesh);
    }

    #[test]
    fn adjacency_ignores_face_order(mesh in arb_mesh(), seed in 0u64..1000) {
        let Ok(adj) = build_adjacency(&mesh) else {
            return Ok(()); // random faces may be non-manifold
        };
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut shuffled = mesh.clone();
        shuffled.faces.shuffle(&mut rng);
        let adj2 = build_adjacency(&shuffled).unwrap();
        prop_assert_eq!(adj, adj2);
    }
}
