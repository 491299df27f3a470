//! Triangle meshes, Wavefront OBJ I/O, connectivity validation, and adjacency.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Point3, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("line {line}: malformed numeric field {field:?}")]
    MalformedNumber { line: usize, field: String },
    #[error("line {line}: face index {index} out of range (have {vertices} vertices)")]
    FaceIndexOutOfRange {
        line: usize,
        index: i64,
        vertices: usize,
    },
    #[error("line {line}: face has {count} vertices; only triangles are accepted")]
    NonTriangularFace { line: usize, count: usize },
    #[error("line {line}: malformed record {record:?}")]
    MalformedRecord { line: usize, record: String },
    #[error("face {face} repeats vertex {vertex}")]
    DegenerateFace { face: usize, vertex: usize },
    #[error("face {face} references vertex {vertex} but the mesh has {vertices} vertices")]
    IndexOutOfBounds {
        face: usize,
        vertex: usize,
        vertices: usize,
    },
    #[error("edge ({a}, {b}) is shared by {count} faces; mesh is not edge-manifold")]
    NonManifoldEdge { a: usize, b: usize, count: usize },
    #[error("vertex {vertex} is isolated (degree 0)")]
    IsolatedVertex { vertex: usize },
}

/// Shared-connectivity triangle mesh: positions in dataset units, faces as
/// ordered vertex triples.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub positions: Vec<Point3<f64>>,
    pub faces: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn new(positions: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let mesh = Mesh { positions, faces };
        mesh.check_faces()?;
        Ok(mesh)
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    fn check_faces(&self) -> Result<(), MeshError> {
        let v = self.positions.len();
        for (fi, f) in self.faces.iter().enumerate() {
            for &idx in f {
                if idx >= v {
                    return Err(MeshError::IndexOutOfBounds {
                        face: fi,
                        vertex: idx,
                        vertices: v,
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                let repeated = if f[0] == f[1] || f[0] == f[2] { f[0] } else { f[1] };
                return Err(MeshError::DegenerateFace {
                    face: fi,
                    vertex: repeated,
                });
            }
        }
        Ok(())
    }

    /// Diagonal of the axis-aligned bounding box; 0 for an empty mesh.
    pub fn bbox_diagonal(&self) -> f64 {
        if self.positions.is_empty() {
            return 0.0;
        }
        let mut lo = self.positions[0];
        let mut hi = self.positions[0];
        for p in &self.positions {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (hi - lo).norm()
    }
}

/// Parses `v` and `f` records; `f` entries may carry `/` texture/normal
/// suffixes which are stripped. Unknown record types are skipped.
pub fn parse_obj(text: &str) -> Result<Mesh, MeshError> {
    let mut positions: Vec<Point3<f64>> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let body = match raw.find('#') {
            Some(k) => &raw[..k],
            None => raw,
        };
        let mut fields = body.split_whitespace();
        let Some(keyword) = fields.next() else {
            continue;
        };
        match keyword {
            "v" => {
                let coords: Vec<&str> = fields.collect();
                if coords.len() != 3 {
                    return Err(MeshError::MalformedRecord {
                        line,
                        record: body.trim().to_string(),
                    });
                }
                let mut p = [0.0f64; 3];
                for (k, field) in coords.iter().enumerate() {
                    p[k] = field.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or(
                        MeshError::MalformedNumber {
                            line,
                            field: field.to_string(),
                        },
                    )?;
                }
                positions.push(Point3::new(p[0], p[1], p[2]));
            }
            "f" => {
                let entries: Vec<&str> = fields.collect();
                if entries.len() != 3 {
                    return Err(MeshError::NonTriangularFace {
                        line,
                        count: entries.len(),
                    });
                }
                let mut tri = [0usize; 3];
                for (k, entry) in entries.iter().enumerate() {
                    let first = entry.split('/').next().unwrap_or("");
                    let idx: i64 =
                        first
                            .parse()
                            .map_err(|_| MeshError::MalformedNumber {
                                line,
                                field: entry.to_string(),
                            })?;
                    // OBJ indices are 1-based; negative indices count back
                    // from the vertices defined so far.
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        positions.len() as i64 + idx
                    } else {
                        -1
                    };
                    if resolved < 0 || resolved as usize >= positions.len() {
                        return Err(MeshError::FaceIndexOutOfRange {
                            line,
                            index: idx,
                            vertices: positions.len(),
                        });
                    }
                    tri[k] = resolved as usize;
                }
                faces.push(tri);
            }
            _ => {}
        }
    }
    Mesh::new(positions, faces)
}

/// Serializes with 17 significant digits so positions round-trip bit-exactly.
pub fn write_obj(mesh: &Mesh) -> String {
    let mut out = String::new();
    for p in &mesh.positions {
        writeln!(out, "v {:.16e} {:.16e} {:.16e}", p.x, p.y, p.z).unwrap();
    }
    for f in &mesh.faces {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    out
}

/// Result of comparing two meshes for identical connectivity.
#[derive(Debug, Clone, PartialEq)]
pub enum ConnectivityCheck {
    Ok,
    Mismatch(String),
}

impl ConnectivityCheck {
    pub fn is_ok(&self) -> bool {
        matches!(self, ConnectivityCheck::Ok)
    }
}

/// Same connectivity means equal vertex counts and element-wise equal face
/// lists; positions are free to differ.
pub fn validate_same_connectivity(reference: &Mesh, other: &Mesh) -> ConnectivityCheck {
    if reference.vertex_count() != other.vertex_count() {
        return ConnectivityCheck::Mismatch(format!(
            "vertex count differs: reference has {}, other has {}",
            reference.vertex_count(),
            other.vertex_count()
        ));
    }
    if reference.face_count() != other.face_count() {
        return ConnectivityCheck::Mismatch(format!(
            "face count differs: reference has {}, other has {}",
            reference.face_count(),
            other.face_count()
        ));
    }
    for (fi, (a, b)) in reference.faces.iter().zip(&other.faces).enumerate() {
        if a != b {
            return ConnectivityCheck::Mismatch(format!(
                "face {fi} differs: reference {a:?}, other {b:?}"
            ));
        }
    }
    ConnectivityCheck::Ok
}

/// Undirected edge list, sorted one-rings, and vertex degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    pub edges: Vec<(usize, usize)>,
    pub one_rings: Vec<Vec<usize>>,
    pub degrees: Vec<usize>,
}

/// Builds adjacency from faces. One-rings are sorted ascending so iteration
/// order is independent of face ordering.
pub fn build_adjacency(mesh: &Mesh) -> Result<Adjacency, MeshError> {
    let v = mesh.vertex_count();
    let mut edge_faces: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for f in &mesh.faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            let key = (a.min(b), a.max(b));
            *edge_faces.entry(key).or_insert(0) += 1;
        }
    }
    for (&(a, b), &count) in &edge_faces {
        if count > 2 {
            return Err(MeshError::NonManifoldEdge { a, b, count });
        }
    }
    let mut one_rings = vec![Vec::new(); v];
    for &(a, b) in edge_faces.keys() {
        one_rings[a].push(b);
        one_rings[b].push(a);
    }
    for ring in &mut one_rings {
        ring.sort_unstable();
    }
    let degrees = one_rings.iter().map(Vec::len).collect();
    Ok(Adjacency {
        edges: edge_faces.into_keys().collect(),
        one_rings,
        degrees,
    })
}

/// Per-edge cotangent weights, clamped to at least `1e-6`, keyed by
/// `(min, max)` vertex pairs. Boundary edges take the single available
/// cotangent; `boundary[i]` marks vertices whose one-ring is open.
pub struct EdgeWeights {
    pub weights: BTreeMap<(usize, usize), f64>,
    pub boundary: Vec<bool>,
}

pub fn cotangent_edge_weights(mesh: &Mesh) -> EdgeWeights {
    let mut sums: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for f in &mesh.faces {
        for (i, j, k) in [
            (f[0], f[1], f[2]),
            (f[1], f[2], f[0]),
            (f[2], f[0], f[1]),
        ] {
            let u = mesh.positions[i] - mesh.positions[k];
            let v = mesh.positions[j] - mesh.positions[k];
            let cross = u.cross(&v).norm();
            let cot = if cross > 0.0 { u.dot(&v) / cross } else { 0.0 };
            let key = (i.min(j), i.max(j));
            let entry = sums.entry(key).or_insert((0.0, 0));
            entry.0 += cot;
            entry.1 += 1;
        }
    }
    let mut boundary = vec![false; mesh.vertex_count()];
    let mut weights = BTreeMap::new();
    for (&(a, b), &(sum, count)) in &sums {
        if count < 2 {
            boundary[a] = true;
            boundary[b] = true;
        }
        weights.insert((a, b), (0.5 * sum).max(1e-6));
    }
    EdgeWeights { weights, boundary }
}

/// Face normal scaled by twice the face area (unnormalized cross product).
pub fn face_normal(positions: &[Point3<f64>], face: &[usize; 3]) -> Vector3<f64> {
    let e1 = positions[face[1]] - positions[face[0]];
    let e2 = positions[face[2]] - positions[face[0]];
    e1.cross(&e2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_minimal_triangle() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        assert_eq!(m.vertex_count(), 3);
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn parse_strips_slash_suffixes() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3\n").unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn parse_rejects_out_of_range_face() {
        let err = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n").unwrap_err();
        assert!(matches!(err, MeshError::FaceIndexOutOfRange { index: 4, .. }));
    }

    #[test]
    fn parse_rejects_quads() {
        let err = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").unwrap_err();
        assert!(matches!(err, MeshError::NonTriangularFace { count: 4, .. }));
    }

    #[test]
    fn parse_rejects_bad_number() {
        let err = parse_obj("v 0 zero 0\n").unwrap_err();
        assert!(matches!(err, MeshError::MalformedNumber { .. }));
    }

    #[test]
    fn parse_resolves_negative_indices() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n").unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn parse_skips_comments_and_other_records() {
        let m = parse_obj("# header\nvn 0 0 1\nv 0 0 0\nv 1 0 0\nv 0 1 0\ns off\nf 1 2 3\n")
            .unwrap();
        assert_eq!(m.faces.len(), 1);
    }

    #[test]
    fn write_single_triangle_layout() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        let text = write_obj(&m);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[..3].iter().all(|l| l.starts_with("v ")));
        assert_eq!(lines[3], "f 1 2 3");
    }

    #[test]
    fn write_empty_mesh_is_empty_body() {
        let m = Mesh::new(Vec::new(), Vec::new()).unwrap();
        assert_eq!(write_obj(&m), "");
        assert_eq!(parse_obj("").unwrap(), m);
    }

    #[test]
    fn connectivity_ok_ignores_positions() {
        let a = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        let b = parse_obj("v 5 5 5\nv 6 5 5\nv 5 6 5\nf 1 2 3\n").unwrap();
        assert!(validate_same_connectivity(&a, &b).is_ok());
    }

    #[test]
    fn connectivity_reports_reordered_face() {
        let a = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        let b = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 3 2\n").unwrap();
        match validate_same_connectivity(&a, &b) {
            ConnectivityCheck::Mismatch(msg) => assert!(msg.contains("face 0"), "{msg}"),
            ConnectivityCheck::Ok => panic!("expected mismatch"),
        }
    }

    #[test]
    fn connectivity_reports_vertex_count() {
        let a = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        let b = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 2 2\nf 1 2 3\n").unwrap();
        match validate_same_connectivity(&a, &b) {
            ConnectivityCheck::Mismatch(msg) => assert!(msg.contains("vertex count"), "{msg}"),
            ConnectivityCheck::Ok => panic!("expected mismatch"),
        }
    }

    #[test]
    fn adjacency_single_triangle() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        let adj = build_adjacency(&m).unwrap();
        assert_eq!(adj.edges.len(), 3);
        assert_eq!(adj.degrees, vec![2, 2, 2]);
    }

    #[test]
    fn adjacency_shared_edge() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3\nf 2 4 3\n").unwrap();
        let adj = build_adjacency(&m).unwrap();
        assert_eq!(adj.edges.len(), 5);
        assert_eq!(adj.degrees[1], 3);
        assert_eq!(adj.degrees[2], 3);
        assert_eq!(adj.degrees[0], 2);
        assert_eq!(adj.degrees[3], 2);
    }

    #[test]
    fn adjacency_rejects_non_manifold_edge() {
        let m = parse_obj(
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nv 0 0 -1\nf 1 2 3\nf 1 2 4\nf 1 2 5\n",
        )
        .unwrap();
        let err = build_adjacency(&m).unwrap_err();
        assert!(matches!(err, MeshError::NonManifoldEdge { a: 0, b: 1, count: 3 }));
    }

    #[test]
    fn adjacency_invariant_to_face_order() {
        let a = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3\nf 2 4 3\n").unwrap();
        let b = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 2 4 3\nf 1 2 3\n").unwrap();
        assert_eq!(build_adjacency(&a).unwrap(), build_adjacency(&b).unwrap());
    }

    #[test]
    fn cot_weights_flag_boundary() {
        // One triangle: every vertex sits on the boundary.
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        let w = cotangent_edge_weights(&m);
        assert!(w.boundary.iter().all(|&b| b));
        // Right angle at vertex 0 is opposite edge (1,2): cot(90°)/2 = 0,
        // clamped to the floor.
        assert_eq!(w.weights[&(1, 2)], 1e-6);
    }
}
