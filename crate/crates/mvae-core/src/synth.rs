//! Procedural meshes and toy deformation datasets used by the tests, the
//! benchmarks, and the `synth` CLI command.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Point3, Vector3};

use crate::mesh::Mesh;

/// Icosphere with `10 * 4^subdivisions + 2` vertices (642 at 3 subdivisions).
pub fn icosphere(subdivisions: usize) -> Mesh {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut positions: Vec<Point3<f64>> = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Point3::new(p[0], p[1], p[2]))
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut next_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0usize; 3];
            for (k, (a, b)) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])].into_iter().enumerate() {
                let key = (a.min(b), a.max(b));
                mid[k] = *midpoints.entry(key).or_insert_with(|| {
                    let p = nalgebra::center(&positions[a], &positions[b]);
                    positions.push(p);
                    positions.len() - 1
                });
            }
            next_faces.push([f[0], mid[0], mid[2]]);
            next_faces.push([f[1], mid[1], mid[0]]);
            next_faces.push([f[2], mid[2], mid[1]]);
            next_faces.push([mid[0], mid[1], mid[2]]);
        }
        faces = next_faces;
    }
    for p in &mut positions {
        let n = p.coords.norm();
        p.coords /= n;
    }
    Mesh::new(positions, faces).expect("icosphere is valid")
}

/// Closed torus grid with exactly `rings * segments` vertices. Useful when a
/// specific vertex count is needed (for example 53 x 130 = 6890).
pub fn torus_grid(rings: usize, segments: usize, major_radius: f64, minor_radius: f64) -> Mesh {
    assert!(rings >= 3 && segments >= 3);
    let mut positions = Vec::with_capacity(rings * segments);
    for i in 0..rings {
        let u = 2.0 * std::f64::consts::PI * (i as f64) / (rings as f64);
        for j in 0..segments {
            let v = 2.0 * std::f64::consts::PI * (j as f64) / (segments as f64);
            let w = major_radius + minor_radius * v.cos();
            positions.push(Point3::new(
                w * u.cos(),
                w * u.sin(),
                minor_radius * v.sin(),
            ));
        }
    }
    let idx = |i: usize, j: usize| (i % rings) * segments + (j % segments);
    let mut faces = Vec::with_capacity(2 * rings * segments);
    for i in 0..rings {
        for j in 0..segments {
            let a = idx(i, j);
            let b = idx(i + 1, j);
            let c = idx(i + 1, j + 1);
            let d = idx(i, j + 1);
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    Mesh::new(positions, faces).expect("torus grid is valid")
}

/// Open cylinder along the z axis: `rings` circles of `segments` vertices,
/// spanning z in [0, length]. Boundary rings stay open (no caps).
pub fn cylinder_tube(rings: usize, segments: usize, radius: f64, length: f64) -> Mesh {
    assert!(rings >= 2 && segments >= 3);
    let mut positions = Vec::with_capacity(rings * segments);
    for i in 0..rings {
        let z = length * (i as f64) / ((rings - 1) as f64);
        for j in 0..segments {
            let t = 2.0 * std::f64::consts::PI * (j as f64) / (segments as f64);
            positions.push(Point3::new(radius * t.cos(), radius * t.sin(), z));
        }
    }
    let idx = |i: usize, j: usize| i * segments + (j % segments);
    let mut faces = Vec::new();
    for i in 0..rings - 1 {
        for j in 0..segments {
            let a = idx(i, j);
            let b = idx(i, j + 1);
            let c = idx(i + 1, j + 1);
            let d = idx(i + 1, j);
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    Mesh::new(positions, faces).expect("cylinder tube is valid")
}

/// Planar grid in the xy-plane whose column spacing grows geometrically so
/// edge lengths span roughly `ratio` from shortest to longest.
pub fn graded_grid(nx: usize, ny: usize, ratio: f64) -> Mesh {
    assert!(nx >= 2 && ny >= 2);
    let growth = ratio.powf(1.0 / ((nx - 2).max(1) as f64));
    let mut xs = vec![0.0f64];
    let mut step = 1.0;
    for _ in 1..nx {
        xs.push(xs.last().unwrap() + step);
        step *= growth;
    }
    let mut positions = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            positions.push(Point3::new(xs[i], j as f64, 0.0));
        }
    }
    let idx = |i: usize, j: usize| j * nx + i;
    let mut faces = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let a = idx(i, j);
            let b = idx(i + 1, j);
            let c = idx(i + 1, j + 1);
            let d = idx(i, j + 1);
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    Mesh::new(positions, faces).expect("graded grid is valid")
}

/// Applies `p -> linear * p + translation` to every vertex.
pub fn affine_deformed(base: &Mesh, linear: &Matrix3<f64>, translation: &Vector3<f64>) -> Vec<Point3<f64>> {
    base.positions
        .iter()
        .map(|p| Point3::from(linear * p.coords + translation))
        .collect()
}

/// Bends positions around the x axis: each point rotates by `angle * z / length`.
pub fn bend_positions(base: &Mesh, angle: f64, length: f64, direction: f64) -> Vec<Point3<f64>> {
    base.positions
        .iter()
        .map(|p| {
            let t = direction * angle * p.z / length;
            let (s, c) = t.sin_cos();
            Point3::new(p.x, c * p.y - s * p.z, s * p.y + c * p.z)
        })
        .collect()
}

/// A family of bent cylinders sharing the tube's connectivity. Shape 0 is the
/// undeformed tube; the rest bend by angles spread over ±`max_angle`.
pub fn bent_cylinder_family(
    rings: usize,
    segments: usize,
    shapes: usize,
    max_angle: f64,
) -> (Mesh, Vec<Vec<Point3<f64>>>) {
    let length = 2.0;
    let base = cylinder_tube(rings, segments, 0.3, length);
    let mut family = Vec::with_capacity(shapes);
    for m in 0..shapes {
        if m == 0 {
            family.push(base.positions.clone());
            continue;
        }
        let t = (m as f64) / ((shapes - 1) as f64);
        let angle = max_angle * (2.0 * t - 1.0);
        family.push(bend_positions(&base, angle, length, 1.0));
    }
    (base, family)
}

/// Cyclic family: the tube tip wobbles around a cone, so the sequence of
/// shapes forms a closed loop in shape space.
pub fn bar_cycle_family(
    rings: usize,
    segments: usize,
    frames: usize,
    tilt: f64,
) -> (Mesh, Vec<Vec<Point3<f64>>>) {
    let length = 2.0;
    let base = cylinder_tube(rings, segments, 0.25, length);
    let mut family = Vec::with_capacity(frames);
    for k in 0..frames {
        let phase = 2.0 * std::f64::consts::PI * (k as f64) / (frames as f64);
        let axis = Vector3::new(phase.cos(), phase.sin(), 0.0);
        family.push(
            base.positions
                .iter()
                .map(|p| {
                    // blend from identity at the root to the full tilt at the tip
                    let w = p.z / length;
                    let rot = nalgebra::Rotation3::new(axis * (tilt * w));
                    Point3::from(rot * p.coords)
                })
                .collect(),
        );
    }
    (base, family)
}

/// Two-class toy set: class 0 shapes are slim tubes, class 1 are inflated,
/// each class with a small spread of bend angles.
pub fn two_class_family(
    rings: usize,
    segments: usize,
    per_class: usize,
) -> (Mesh, Vec<Vec<Point3<f64>>>, Vec<usize>) {
    let length = 2.0;
    let base = cylinder_tube(rings, segments, 0.3, length);
    let mut shapes = Vec::new();
    let mut labels = Vec::new();
    for class in 0..2usize {
        let scale = if class == 0 { 0.6 } else { 1.6 };
        for m in 0..per_class {
            let t = if per_class > 1 {
                (m as f64) / ((per_class - 1) as f64)
            } else {
                0.5
            };
            let angle = 0.3 * (2.0 * t - 1.0);
            let bent = bend_positions(&base, angle, length, 1.0);
            shapes.push(
                bent.iter()
                    .map(|p| Point3::new(p.x * scale, p.y * scale, p.z))
                    .collect(),
            );
            labels.push(class);
        }
    }
    (base, shapes, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_adjacency;

    #[test]
    fn icosphere_vertex_counts() {
        assert_eq!(icosphere(0).vertex_count(), 12);
        assert_eq!(icosphere(1).vertex_count(), 42);
        assert_eq!(icosphere(3).vertex_count(), 642);
    }

    #[test]
    fn icosphere_is_manifold() {
        let m = icosphere(2);
        let adj = build_adjacency(&m).unwrap();
        // Closed surface: E = 3/2 F, Euler characteristic 2.
        assert_eq!(2 * adj.edges.len(), 3 * m.face_count());
        assert_eq!(
            m.vertex_count() as i64 - adj.edges.len() as i64 + m.face_count() as i64,
            2
        );
    }

    #[test]
    fn torus_exact_counts() {
        let m = torus_grid(53, 130, 2.0, 0.5);
        assert_eq!(m.vertex_count(), 6890);
        let adj = build_adjacency(&m).unwrap();
        assert!(adj.degrees.iter().all(|&d| d == 6));
    }

    #[test]
    fn cylinder_has_boundary() {
        let m = cylinder_tube(8, 8, 0.3, 2.0);
        assert_eq!(m.vertex_count(), 64);
        let w = crate::mesh::cotangent_edge_weights(&m);
        assert!(w.boundary.iter().take(8).all(|&b| b));
        assert!(!w.boundary[2 * 8 + 1]);
    }

    #[test]
    fn graded_grid_edge_span() {
        let m = graded_grid(12, 6, 10.0);
        let adj = build_adjacency(&m).unwrap();
        let mut lens: Vec<f64> = adj
            .edges
            .iter()
            .map(|&(a, b)| (m.positions[a] - m.positions[b]).norm())
            .collect();
        lens.sort_by(f64::total_cmp);
        let span = lens.last().unwrap() / lens.first().unwrap();
        assert!(span > 8.0, "span {span}");
    }

    #[test]
    fn families_share_connectivity() {
        let (base, shapes) = bent_cylinder_family(12, 8, 5, 0.5);
        assert_eq!(shapes.len(), 5);
        assert!(shapes.iter().all(|s| s.len() == base.vertex_count()));
        assert_eq!(shapes[0], base.positions);
    }
}
