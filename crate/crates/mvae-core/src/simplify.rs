//! Modified quadric-error-metric edge contraction.
//!
//! The contraction order is driven by the quadric error plus a weighted
//! penalty on the longest edge created around the new vertex, which keeps
//! triangle sizes even while the mesh coarsens. Contractions that would flip
//! a face normal or create a non-manifold configuration are skipped.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use nalgebra::{Matrix3, Matrix4, Point3, Vector3, Vector4};
use thiserror::Error;

use crate::mesh::{build_adjacency, face_normal, Mesh, MeshError};

#[derive(Debug, Error)]
pub enum SimplifyError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("target vertex count {target} invalid for a mesh with {vertices} vertices")]
    InvalidTarget { target: usize, vertices: usize },
    #[error("simplification stalled at {reached} vertices before reaching {target}")]
    Stalled { reached: usize, target: usize },
}

/// Symmetric 4x4 quadric; the error of a point `p` is `[p;1]ᵀ Q [p;1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadric {
    m: Matrix4<f64>,
}

impl Quadric {
    pub fn zero() -> Self {
        Quadric {
            m: Matrix4::zeros(),
        }
    }

    /// Fundamental quadric of the plane `normal · x + d = 0` (unit normal).
    pub fn from_plane(normal: Vector3<f64>, d: f64) -> Self {
        let p = Vector4::new(normal.x, normal.y, normal.z, d);
        Quadric { m: p * p.transpose() }
    }

    pub fn error(&self, p: &Point3<f64>) -> f64 {
        let v = Vector4::new(p.x, p.y, p.z, 1.0);
        v.dot(&(self.m * v))
    }

    fn a_block(&self) -> Matrix3<f64> {
        self.m.fixed_view::<3, 3>(0, 0).into_owned()
    }

    fn b_vec(&self) -> Vector3<f64> {
        Vector3::new(self.m[(0, 3)], self.m[(1, 3)], self.m[(2, 3)])
    }
}

impl std::ops::Add for Quadric {
    type Output = Quadric;
    fn add(self, rhs: Quadric) -> Quadric {
        Quadric { m: self.m + rhs.m }
    }
}

impl std::ops::AddAssign for Quadric {
    fn add_assign(&mut self, rhs: Quadric) {
        self.m += rhs.m;
    }
}

/// Sum of the fundamental error quadrics of the faces incident to `vertex`.
/// Faces with (near-)zero area contribute nothing and are logged.
pub fn vertex_quadric(mesh: &Mesh, vertex: usize) -> Quadric {
    let mut q = Quadric::zero();
    for (fi, f) in mesh.faces.iter().enumerate() {
        if !f.contains(&vertex) {
            continue;
        }
        match face_plane(mesh, f) {
            Some((n, d)) => q += Quadric::from_plane(n, d),
            None => log::warn!("face {fi} is degenerate; zero quadric contribution"),
        }
    }
    q
}

fn face_plane(mesh: &Mesh, f: &[usize; 3]) -> Option<(Vector3<f64>, f64)> {
    let n = face_normal(&mesh.positions, f);
    let norm = n.norm();
    let longest = [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])]
        .iter()
        .map(|&(a, b)| (mesh.positions[a] - mesh.positions[b]).norm())
        .fold(0.0f64, f64::max);
    if norm <= 1e-12 * longest * longest {
        return None;
    }
    let unit = n / norm;
    let d = -unit.dot(&mesh.positions[f[0]].coords);
    Some((unit, d))
}

/// How the contracted position was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// Solved the 3x3 quadric system.
    Optimal,
    /// Singular system: best of midpoint and the two endpoints.
    Fallback,
}

/// Position minimizing the quadric error, with endpoint/midpoint fallback
/// when the system is singular.
pub fn optimal_position(
    q_sum: &Quadric,
    v1: &Point3<f64>,
    v2: &Point3<f64>,
) -> (Point3<f64>, Placement) {
    let a = q_sum.a_block();
    let scale = a.trace() / 3.0;
    if scale > 0.0 {
        let det = a.determinant();
        if det.abs() >= 1e-10 * scale * scale * scale {
            if let Some(inv) = a.try_inverse() {
                let p = Point3::from(inv * (-q_sum.b_vec()));
                return (p, Placement::Optimal);
            }
        }
    }
    let mid = nalgebra::center(v1, v2);
    let mut best = (mid, q_sum.error(&mid));
    for cand in [v1, v2] {
        let e = q_sum.error(cand);
        if e < best.1 {
            best = (*cand, e);
        }
    }
    (best.0, Placement::Fallback)
}

/// Total contraction error: quadric term plus `lambda` times the longest new
/// edge from `v_bar` to the surviving neighbors.
pub fn modified_error<'a>(
    q_sum: &Quadric,
    v_bar: &Point3<f64>,
    new_neighbors: impl Iterator<Item = &'a Point3<f64>>,
    lambda: f64,
) -> f64 {
    let quadric = q_sum.error(v_bar);
    let max_len = new_neighbors
        .map(|p| (p - v_bar).norm())
        .fold(0.0f64, f64::max);
    quadric + lambda * max_len
}

#[derive(Debug, Clone, Copy)]
struct HeapEntry {
    error: f64,
    edge: (usize, usize),
    stamp: u64,
    position: Point3<f64>,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    // Min-first: reversed so the BinaryHeap max pops the smallest
    // (error, edge) pair. Ties break on the lexicographic edge key.
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then(self.edge.cmp(&other.edge))
            .reverse()
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct EdgeState {
    stamp: u64,
    blocked: bool,
}

/// One accepted contraction: `removed` merged into `kept` at `position`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contraction {
    pub kept: usize,
    pub removed: usize,
    pub position: Point3<f64>,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepResult {
    Contracted,
    Stalled,
}

/// Greedy edge-contraction engine over one mesh level. State is inspectable
/// so independent oracles can re-derive errors from the live faces.
pub struct Decimator {
    positions: Vec<Point3<f64>>,
    alive: Vec<bool>,
    neighbors: Vec<BTreeSet<usize>>,
    quadrics: Vec<Quadric>,
    faces: Vec<[usize; 3]>,
    face_alive: Vec<bool>,
    vertex_faces: Vec<BTreeSet<usize>>,
    heap: BinaryHeap<HeapEntry>,
    edge_state: HashMap<(usize, usize), EdgeState>,
    merged_into: Vec<Option<usize>>,
    log: Vec<Contraction>,
    live_count: usize,
    lambda: f64,
    stamp_counter: u64,
}

impl Decimator {
    pub fn new(mesh: &Mesh, lambda: f64) -> Result<Self, SimplifyError> {
        let adj = build_adjacency(mesh)?;
        let v = mesh.vertex_count();
        let neighbors: Vec<BTreeSet<usize>> = adj
            .one_rings
            .iter()
            .map(|ring| ring.iter().copied().collect())
            .collect();
        let mut vertex_faces = vec![BTreeSet::new(); v];
        for (fi, f) in mesh.faces.iter().enumerate() {
            for &vid in f {
                vertex_faces[vid].insert(fi);
            }
        }
        let quadrics = (0..v).map(|i| vertex_quadric(mesh, i)).collect();
        let mut d = Decimator {
            positions: mesh.positions.clone(),
            alive: vec![true; v],
            neighbors,
            quadrics,
            faces: mesh.faces.clone(),
            face_alive: vec![true; mesh.face_count()],
            vertex_faces,
            heap: BinaryHeap::new(),
            edge_state: HashMap::new(),
            merged_into: vec![None; v],
            log: Vec::new(),
            live_count: v,
            lambda,
            stamp_counter: 0,
        };
        for &(a, b) in &adj.edges {
            d.refresh_edge(a, b);
        }
        Ok(d)
    }

    pub fn live_vertex_count(&self) -> usize {
        self.live_count
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn is_alive(&self, v: usize) -> bool {
        self.alive[v]
    }

    pub fn position(&self, v: usize) -> Point3<f64> {
        self.positions[v]
    }

    pub fn quadric(&self, v: usize) -> &Quadric {
        &self.quadrics[v]
    }

    pub fn neighbors(&self, v: usize) -> &BTreeSet<usize> {
        &self.neighbors[v]
    }

    pub fn live_faces(&self) -> Vec<[usize; 3]> {
        self.faces
            .iter()
            .zip(&self.face_alive)
            .filter(|(_, &alive)| alive)
            .map(|(f, _)| *f)
            .collect()
    }

    pub fn live_edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for (i, ring) in self.neighbors.iter().enumerate() {
            if !self.alive[i] {
                continue;
            }
            for &j in ring.range(i + 1..) {
                edges.push((i, j));
            }
        }
        edges
    }

    pub fn contractions(&self) -> &[Contraction] {
        &self.log
    }

    /// Candidate position and total error for a live edge.
    pub fn edge_error(&self, i: usize, j: usize) -> Option<(f64, Point3<f64>, Placement)> {
        let (i, j) = (i.min(j), i.max(j));
        if !self.alive[i] || !self.alive[j] || !self.neighbors[i].contains(&j) {
            return None;
        }
        let q_sum = self.quadrics[i] + self.quadrics[j];
        let (v_bar, placement) = optimal_position(&q_sum, &self.positions[i], &self.positions[j]);
        let neighbor_points = self.neighbors[i]
            .iter()
            .filter(|&&m| m != j)
            .chain(self.neighbors[j].iter().filter(|&&n| n != i))
            .map(|&v| &self.positions[v]);
        let error = modified_error(&q_sum, &v_bar, neighbor_points, self.lambda);
        Some((error, v_bar, placement))
    }

    fn refresh_edge(&mut self, i: usize, j: usize) {
        let (i, j) = (i.min(j), i.max(j));
        if let Some((error, position, _)) = self.edge_error(i, j) {
            self.stamp_counter += 1;
            let stamp = self.stamp_counter;
            self.edge_state.insert((i, j), EdgeState { stamp, blocked: false });
            self.heap.push(HeapEntry {
                error,
                edge: (i, j),
                stamp,
                position,
            });
        }
    }

    /// Pops candidates until one passes the guards, then contracts it.
    pub fn step(&mut self) -> StepResult {
        while let Some(entry) = self.heap.pop() {
            let (i, j) = entry.edge;
            let state = match self.edge_state.get(&(i, j)) {
                Some(s) => *s,
                None => continue,
            };
            if state.stamp != entry.stamp || state.blocked {
                continue;
            }
            if !self.alive[i] || !self.alive[j] || !self.neighbors[i].contains(&j) {
                continue;
            }
            if !self.contraction_is_legal(i, j, &entry.position) {
                self.edge_state.get_mut(&(i, j)).unwrap().blocked = true;
                continue;
            }
            self.contract(i, j, entry.position, entry.error);
            return StepResult::Contracted;
        }
        StepResult::Stalled
    }

    fn contraction_is_legal(&self, i: usize, j: usize, v_bar: &Point3<f64>) -> bool {
        // Link condition: more than two shared neighbors pinches the surface.
        let common = self.neighbors[i].intersection(&self.neighbors[j]).count();
        if common > 2 {
            return false;
        }
        // Reject contractions that flip any surviving incident face.
        for &fi in self.vertex_faces[i].union(&self.vertex_faces[j]) {
            if !self.face_alive[fi] {
                continue;
            }
            let f = self.faces[fi];
            if f.contains(&i) && f.contains(&j) {
                continue; // face dies with the edge
            }
            let old_n = face_normal(&self.positions, &f);
            let moved: Vec<Point3<f64>> = f
                .iter()
                .map(|&v| if v == i || v == j { *v_bar } else { self.positions[v] })
                .collect();
            let new_n = (moved[1] - moved[0]).cross(&(moved[2] - moved[0]));
            if old_n.dot(&new_n) < 0.0 {
                return false;
            }
        }
        true
    }

    fn contract(&mut self, kept: usize, removed: usize, v_bar: Point3<f64>, error: f64) {
        self.log.push(Contraction {
            kept,
            removed,
            position: v_bar,
            error,
        });
        self.positions[kept] = v_bar;
        let q_removed = self.quadrics[removed];
        self.quadrics[kept] += q_removed;

        // Rewire faces of the removed vertex; faces on the contracted edge die.
        let removed_faces: Vec<usize> = self.vertex_faces[removed].iter().copied().collect();
        for fi in removed_faces {
            if !self.face_alive[fi] {
                continue;
            }
            let f = self.faces[fi];
            if f.contains(&kept) {
                self.face_alive[fi] = false;
                for &v in &f {
                    self.vertex_faces[v].remove(&fi);
                }
            } else {
                for slot in self.faces[fi].iter_mut() {
                    if *slot == removed {
                        *slot = kept;
                    }
                }
                self.vertex_faces[removed].remove(&fi);
                self.vertex_faces[kept].insert(fi);
            }
        }

        // Merge neighbor sets and drop stale edge bookkeeping.
        let removed_neighbors: Vec<usize> = self.neighbors[removed].iter().copied().collect();
        for n in removed_neighbors {
            let key = (n.min(removed), n.max(removed));
            self.edge_state.remove(&key);
            self.neighbors[n].remove(&removed);
            if n != kept {
                self.neighbors[n].insert(kept);
                self.neighbors[kept].insert(n);
            }
        }
        self.neighbors[removed].clear();
        self.neighbors[kept].remove(&removed);
        self.alive[removed] = false;
        self.merged_into[removed] = Some(kept);
        self.live_count -= 1;

        // Re-evaluate every edge whose error may have changed: positions and
        // neighbor sets of the kept vertex's ring feed into the max term.
        let mut affected: BTreeSet<(usize, usize)> = BTreeSet::new();
        let mut around: Vec<usize> = vec![kept];
        around.extend(self.neighbors[kept].iter().copied());
        for &a in &around {
            for &b in &self.neighbors[a] {
                affected.insert((a.min(b), a.max(b)));
            }
        }
        for (a, b) in affected {
            self.refresh_edge(a, b);
        }
    }

    /// Compacts surviving vertices (ascending index order) into the coarse
    /// mesh and contraction map.
    pub fn finish(self) -> (Mesh, ContractionMap) {
        let v = self.positions.len();
        let mut coarse_index = vec![usize::MAX; v];
        let mut coarse_positions = Vec::new();
        for i in 0..v {
            if self.alive[i] {
                coarse_index[i] = coarse_positions.len();
                coarse_positions.push(self.positions[i]);
            }
        }
        let mut parent = vec![0usize; v];
        for i in 0..v {
            let mut root = i;
            while let Some(next) = self.merged_into[root] {
                root = next;
            }
            parent[i] = coarse_index[root];
        }
        let faces: Vec<[usize; 3]> = self
            .faces
            .iter()
            .zip(&self.face_alive)
            .filter(|(_, &alive)| alive)
            .map(|(f, _)| [coarse_index[f[0]], coarse_index[f[1]], coarse_index[f[2]]])
            .collect();
        let coarse_count = coarse_positions.len();
        let mesh = Mesh {
            positions: coarse_positions.clone(),
            faces,
        };
        let map = ContractionMap {
            fine_count: v,
            coarse_count,
            parent,
            coarse_positions,
            contraction_log: self
                .log
                .iter()
                .map(|c| LogEntry {
                    kept: c.kept,
                    removed: c.removed,
                    position: c.position,
                })
                .collect(),
        };
        (mesh, map)
    }
}

/// One recorded contraction in fine-level vertex indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub kept: usize,
    pub removed: usize,
    pub position: Point3<f64>,
}

/// Fine-to-coarse assignment produced by a simplification run.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionMap {
    pub fine_count: usize,
    pub coarse_count: usize,
    pub parent: Vec<usize>,
    pub coarse_positions: Vec<Point3<f64>>,
    pub contraction_log: Vec<LogEntry>,
}

impl ContractionMap {
    /// Recomputes the parent assignment by replaying the contraction log.
    pub fn replay_parent(&self) -> Vec<usize> {
        let mut merged_into = vec![None; self.fine_count];
        for entry in &self.contraction_log {
            merged_into[entry.removed] = Some(entry.kept);
        }
        let mut coarse_index = vec![usize::MAX; self.fine_count];
        let mut next = 0;
        for (i, m) in merged_into.iter().enumerate() {
            if m.is_none() {
                coarse_index[i] = next;
                next += 1;
            }
        }
        (0..self.fine_count)
            .map(|i| {
                let mut root = i;
                while let Some(next) = merged_into[root] {
                    root = next;
                }
                coarse_index[root]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimplifyStatus {
    Completed,
    Stalled { reached: usize },
}

#[derive(Debug, Clone)]
pub struct SimplifyOutcome {
    pub mesh: Mesh,
    pub map: ContractionMap,
    pub status: SimplifyStatus,
}

/// Greedy simplification down to `target_count` vertices. A mesh that runs
/// out of legal contractions is returned with a `Stalled` status rather than
/// an error.
pub fn simplify_to(
    mesh: &Mesh,
    target_count: usize,
    lambda: f64,
) -> Result<SimplifyOutcome, SimplifyError> {
    let v = mesh.vertex_count();
    if target_count < 1 || target_count >= v {
        return Err(SimplifyError::InvalidTarget {
            target: target_count,
            vertices: v,
        });
    }
    let mut d = Decimator::new(mesh, lambda)?;
    while d.live_vertex_count() > target_count {
        if d.step() == StepResult::Stalled {
            break;
        }
    }
    let reached = d.live_vertex_count();
    let (coarse, map) = d.finish();
    let status = if reached == target_count {
        SimplifyStatus::Completed
    } else {
        log::warn!("simplification stalled at V={reached} (target {target_count})");
        SimplifyStatus::Stalled { reached }
    };
    Ok(SimplifyOutcome {
        mesh: coarse,
        map,
        status,
    })
}

/// Coarse target for one halving step: `ceil((v + 1) / 2)`.
pub fn half_target(v: usize) -> usize {
    (v + 2) / 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::parse_obj;
    use crate::synth;

    fn plane_quadric(axis: usize, offset: f64) -> Quadric {
        let mut n = Vector3::zeros();
        n[axis] = 1.0;
        Quadric::from_plane(n, -offset)
    }

    #[test]
    fn quadric_zero_on_plane() {
        // Planar patch: error vanishes anywhere on the plane z = 0.
        let m = parse_obj(
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nv -1 -1 0\nf 1 2 3\nf 1 4 2\nf 1 3 4\n",
        )
        .unwrap();
        let q = vertex_quadric(&m, 0);
        assert!(q.error(&Point3::new(0.3, -0.2, 0.0)).abs() < 1e-15);
        assert!(q.error(&Point3::new(0.0, 0.0, 1.0)) > 1.0);
    }

    #[test]
    fn quadric_cube_corner() {
        let q = plane_quadric(0, 0.0) + plane_quadric(1, 0.0) + plane_quadric(2, 0.0);
        let e = q.error(&Point3::new(0.5, 0.5, 0.5));
        assert!((e - 0.75).abs() < 1e-15);
    }

    #[test]
    fn degenerate_face_contributes_zero() {
        // Second face is collinear; only the first contributes.
        let m = Mesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(2.0, 0.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 1, 3]],
        )
        .unwrap();
        let q = vertex_quadric(&m, 0);
        let expected = vertex_quadric(
            &Mesh::new(m.positions.clone(), vec![[0, 1, 2]]).unwrap(),
            0,
        );
        assert_eq!(q, expected);
    }

    #[test]
    fn optimal_position_parallel_planes_falls_back_to_midpoint() {
        let q = plane_quadric(2, 0.0) + plane_quadric(2, 1.0);
        let v1 = Point3::new(0.0, 0.0, 0.0);
        let v2 = Point3::new(1.0, 1.0, 1.0);
        let (p, placement) = optimal_position(&q, &v1, &v2);
        assert_eq!(placement, Placement::Fallback);
        assert!((p.z - 0.5).abs() < 1e-15);
        assert_eq!(p, nalgebra::center(&v1, &v2));
    }

    #[test]
    fn optimal_position_corner_intersection() {
        let q = plane_quadric(0, 1.0) + plane_quadric(1, 2.0) + plane_quadric(2, 3.0);
        let (p, placement) =
            optimal_position(&q, &Point3::new(1.0, 2.0, 0.0), &Point3::new(1.0, 0.0, 3.0));
        assert_eq!(placement, Placement::Optimal);
        assert!((p - Point3::new(1.0, 2.0, 3.0)).norm() < 1e-9);
    }

    #[test]
    fn optimal_position_zero_quadric_midpoint() {
        let q = Quadric::zero();
        let (p, placement) =
            optimal_position(&q, &Point3::new(0.0, 0.0, 0.0), &Point3::new(2.0, 0.0, 0.0));
        assert_eq!(placement, Placement::Fallback);
        assert_eq!(p, Point3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn modified_error_reduces_to_quadric_when_lambda_zero() {
        let q = plane_quadric(2, 0.0);
        let v_bar = Point3::new(0.0, 0.0, 0.7);
        let pts = [Point3::new(5.0, 0.0, 0.0)];
        let e = modified_error(&q, &v_bar, pts.iter(), 0.0);
        assert_eq!(e, q.error(&v_bar));
    }

    #[test]
    fn modified_error_max_term() {
        // Quadric error 0, new edge lengths {1, 1.5, 2}: E = lambda * 2.
        let v_bar = Point3::new(0.0, 0.0, 0.0);
        let pts = [
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.5, 0.0),
            Point3::new(0.0, 0.0, 2.0),
        ];
        let e = modified_error(&Quadric::zero(), &v_bar, pts.iter(), 0.001);
        assert!((e - 0.002).abs() < 1e-15);
    }

    #[test]
    fn modified_error_isolated_pair_max_is_zero() {
        let e = modified_error(&Quadric::zero(), &Point3::origin(), [].iter(), 5.0);
        assert_eq!(e, 0.0);
    }

    #[test]
    fn first_contraction_is_global_minimum_at_lambda_zero() {
        let mesh = synth::icosphere(1);
        let d = Decimator::new(&mesh, 0.0).unwrap();
        let best = d
            .live_edges()
            .into_iter()
            .map(|(i, j)| (d.edge_error(i, j).unwrap().0, (i, j)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .unwrap();
        let out = simplify_to(&mesh, mesh.vertex_count() - 1, 0.0).unwrap();
        let first = &out.map.contraction_log[0];
        assert_eq!((first.kept, first.removed), best.1);
    }

    #[test]
    fn icosphere_halves_and_stays_manifold() {
        let mesh = synth::icosphere(2); // 162 vertices
        let out = simplify_to(&mesh, half_target(162), 0.001).unwrap();
        assert_eq!(out.status, SimplifyStatus::Completed);
        assert_eq!(out.mesh.vertex_count(), 82);
        // Validation: in-range faces, no degenerate faces, edge-manifold.
        crate::mesh::build_adjacency(&out.mesh).unwrap();
    }

    #[test]
    fn replay_reproduces_parent() {
        let mesh = synth::icosphere(1);
        let out = simplify_to(&mesh, 21, 0.001).unwrap();
        assert_eq!(out.map.replay_parent(), out.map.parent);
        assert_eq!(
            out.map.coarse_count,
            out.map.fine_count - out.map.contraction_log.len()
        );
        // Parent is surjective onto the coarse index range.
        let mut seen = vec![false; out.map.coarse_count];
        for &p in &out.map.parent {
            seen[p] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn determinism_bit_identical() {
        let mesh = synth::icosphere(2);
        let a = simplify_to(&mesh, 81, 0.001).unwrap();
        let b = simplify_to(&mesh, 81, 0.001).unwrap();
        assert_eq!(a.mesh, b.mesh);
        assert_eq!(a.map, b.map);
    }

    #[test]
    fn invalid_target_rejected() {
        let mesh = synth::icosphere(0);
        assert!(matches!(
            simplify_to(&mesh, 12, 0.0),
            Err(SimplifyError::InvalidTarget { .. })
        ));
        assert!(matches!(
            simplify_to(&mesh, 0, 0.0),
            Err(SimplifyError::InvalidTarget { .. })
        ));
    }

    #[test]
    fn half_target_rounding() {
        assert_eq!(half_target(6890), 3446);
        assert_eq!(half_target(3573), 1787);
        assert_eq!(half_target(642), 322);
        assert_eq!(half_target(322), 162);
        assert_eq!(half_target(4), 3);
    }
}
