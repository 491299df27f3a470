//! Rebuilding vertex positions from per-vertex deformation gradients.
//!
//! The solver minimizes, over all undirected edges (i, j),
//! `c_ij * || (p'_i - p'_j) - (T_i + T_j)/2 * (p_i - p_j) ||^2`
//! with one anchored vertex fixing the translation gauge. The normal
//! equations form a weighted graph Laplacian, solved densely below 5000
//! vertices and by Jacobi-preconditioned conjugate gradients above.

use nalgebra::{DMatrix, DVector, Matrix3, Point3};
use thiserror::Error;

use crate::mesh::{cotangent_edge_weights, Adjacency, Mesh};
use crate::sparse::SparseBuilder;

const DENSE_LIMIT: usize = 5000;
const CG_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ReconstructError {
    #[error("need one gradient per vertex: got {got}, expected {expected}")]
    GradientCount { got: usize, expected: usize },
    #[error("anchor vertex {anchor} out of range for {vertices} vertices")]
    AnchorOutOfRange { anchor: usize, vertices: usize },
    #[error("conjugate gradients did not converge: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("dense factorization failed; the edge graph may be disconnected")]
    SingularSystem,
}

/// Solves for deformed positions given one gradient per vertex and an anchor
/// `(vertex, position)` fixing the global translation.
pub fn reconstruct_positions(
    base: &Mesh,
    gradients: &[Matrix3<f64>],
    adj: &Adjacency,
    anchor: (usize, Point3<f64>),
) -> Result<Vec<Point3<f64>>, ReconstructError> {
    let v = base.vertex_count();
    if gradients.len() != v {
        return Err(ReconstructError::GradientCount {
            got: gradients.len(),
            expected: v,
        });
    }
    let (anchor_idx, anchor_pos) = anchor;
    if anchor_idx >= v {
        return Err(ReconstructError::AnchorOutOfRange {
            anchor: anchor_idx,
            vertices: v,
        });
    }
    if v == 1 {
        return Ok(vec![anchor_pos]);
    }
    let weights = cotangent_edge_weights(base);

    // Reduced index map skipping the anchor.
    let reduced: Vec<usize> = (0..v).filter(|&i| i != anchor_idx).collect();
    let mut reduced_of = vec![usize::MAX; v];
    for (r, &i) in reduced.iter().enumerate() {
        reduced_of[i] = r;
    }
    let n = v - 1;

    let mut diag = vec![0.0f64; n];
    let mut rhs = vec![[0.0f64; 3]; n];
    let mut off = SparseBuilder::new(n, n);
    for &(i, j) in &adj.edges {
        let w = weights.weights[&(i, j)];
        let d = base.positions[i] - base.positions[j];
        let b = (gradients[i] + gradients[j]) * d * 0.5;
        for (from, to, sign) in [(i, j, 1.0), (j, i, -1.0)] {
            if from == anchor_idx {
                continue;
            }
            let r = reduced_of[from];
            diag[r] += w;
            for k in 0..3 {
                rhs[r][k] += w * sign * b[k];
            }
            if to == anchor_idx {
                for k in 0..3 {
                    rhs[r][k] += w * anchor_pos[k];
                }
            } else {
                off.push(r, reduced_of[to], -w);
            }
        }
    }

    let solution = if n < DENSE_LIMIT {
        solve_dense(n, &diag, off, &rhs)?
    } else {
        solve_cg(n, &diag, off, &rhs)?
    };

    let mut out = vec![anchor_pos; v];
    for (r, &i) in reduced.iter().enumerate() {
        out[i] = Point3::new(solution[r][0], solution[r][1], solution[r][2]);
    }
    Ok(out)
}

fn solve_dense(
    n: usize,
    diag: &[f64],
    off: SparseBuilder,
    rhs: &[[f64; 3]],
) -> Result<Vec<[f64; 3]>, ReconstructError> {
    let off = off.finalize().expect("valid reduced system");
    let mut a = DMatrix::zeros(n, n);
    for (r, c, w) in off.triplets() {
        a[(r, c)] = w;
    }
    for (r, &d) in diag.iter().enumerate() {
        a[(r, r)] = d;
    }
    let chol = a.cholesky().ok_or(ReconstructError::SingularSystem)?;
    let mut out = vec![[0.0f64; 3]; n];
    for k in 0..3 {
        let b = DVector::from_fn(n, |r, _| rhs[r][k]);
        let x = chol.solve(&b);
        for r in 0..n {
            out[r][k] = x[r];
        }
    }
    Ok(out)
}

fn solve_cg(
    n: usize,
    diag: &[f64],
    off: SparseBuilder,
    rhs: &[[f64; 3]],
) -> Result<Vec<[f64; 3]>, ReconstructError> {
    let off = off.finalize().expect("valid reduced system");
    let apply = |x: &[f64], y: &mut [f64]| {
        let ax = off.matvec(x).expect("square system");
        for r in 0..n {
            y[r] = ax[r] + diag[r] * x[r];
        }
    };
    let max_iters = 10 * (n + 1);
    let mut out = vec![[0.0f64; 3]; n];
    for k in 0..3 {
        let b: Vec<f64> = rhs.iter().map(|r| r[k]).collect();
        let b_norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if b_norm == 0.0 {
            continue;
        }
        let mut x = vec![0.0f64; n];
        let mut r = b.clone();
        let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, d)| ri / d).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut ap = vec![0.0f64; n];
        let mut converged = false;
        for iter in 0..max_iters {
            apply(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r_norm <= CG_TOL * b_norm {
                converged = true;
                break;
            }
            for i in 0..n {
                z[i] = r[i] / diag[i];
            }
            let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
            if iter + 1 == max_iters {
                return Err(ReconstructError::NoConvergence {
                    residual: r_norm / b_norm,
                    iterations: max_iters,
                });
            }
        }
        if !converged {
            let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            return Err(ReconstructError::NoConvergence {
                residual: r_norm / b_norm,
                iterations: max_iters,
            });
        }
        for i in 0..n {
            out[i][k] = x[i];
        }
    }
    Ok(out)
}

/// Energy of a candidate solution under the reconstruction objective; used
/// by tests to confirm the solver sits at a minimum.
pub fn reconstruction_energy(
    base: &Mesh,
    gradients: &[Matrix3<f64>],
    positions: &[Point3<f64>],
) -> f64 {
    let weights = cotangent_edge_weights(base);
    let mut energy = 0.0;
    for (&(i, j), &w) in &weights.weights {
        let d = base.positions[i] - base.positions[j];
        let b = (gradients[i] + gradients[j]) * d * 0.5;
        let e = (positions[i] - positions[j]) - b;
        energy += w * e.norm_squared();
    }
    energy
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::rotation_exp;
    use crate::mesh::build_adjacency;
    use crate::synth;
    use nalgebra::Vector3;
    use rand::Rng;
    use rand::SeedableRng;

    fn setup() -> (Mesh, Adjacency) {
        let mesh = synth::cylinder_tube(10, 8, 0.3, 2.0);
        let adj = build_adjacency(&mesh).unwrap();
        (mesh, adj)
    }

    #[test]
    fn identity_gradients_reproduce_base() {
        let (mesh, adj) = setup();
        let grads = vec![Matrix3::identity(); mesh.vertex_count()];
        let out =
            reconstruct_positions(&mesh, &grads, &adj, (0, mesh.positions[0])).unwrap();
        for (p, q) in out.iter().zip(&mesh.positions) {
            assert!((p - q).norm() < 1e-10);
        }
    }

    #[test]
    fn constant_rotation_rotates_rigidly() {
        let (mesh, adj) = setup();
        let r0 = rotation_exp(&Vector3::new(0.2, 0.7, -0.3));
        let grads = vec![r0; mesh.vertex_count()];
        let anchor_pos = nalgebra::Point3::from(r0 * mesh.positions[0].coords);
        let out = reconstruct_positions(&mesh, &grads, &adj, (0, anchor_pos)).unwrap();
        for (p, q) in out.iter().zip(&mesh.positions) {
            let expected = nalgebra::Point3::from(r0 * q.coords);
            assert!((p - expected).norm() < 1e-8);
        }
    }

    #[test]
    fn anchor_out_of_range_rejected() {
        let (mesh, adj) = setup();
        let grads = vec![Matrix3::identity(); mesh.vertex_count()];
        assert!(matches!(
            reconstruct_positions(&mesh, &grads, &adj, (10_000, Point3::origin())),
            Err(ReconstructError::AnchorOutOfRange { .. })
        ));
    }

    #[test]
    fn solution_is_local_minimum() {
        let (mesh, adj) = setup();
        let bent = synth::bend_positions(&mesh, 0.5, 2.0, 1.0);
        let weights = crate::mesh::cotangent_edge_weights(&mesh);
        let report =
            crate::features::deformation_gradients(&mesh, &bent, &adj, &weights).unwrap();
        let out =
            reconstruct_positions(&mesh, &report.gradients, &adj, (0, bent[0])).unwrap();
        let e0 = reconstruction_energy(&mesh, &report.gradients, &out);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let perturbed: Vec<Point3<f64>> = out
                .iter()
                .map(|p| {
                    Point3::new(
                        p.x + rng.random_range(-1e-3..1e-3),
                        p.y + rng.random_range(-1e-3..1e-3),
                        p.z + rng.random_range(-1e-3..1e-3),
                    )
                })
                .collect();
            assert!(reconstruction_energy(&mesh, &report.gradients, &perturbed) >= e0);
        }
    }

    #[test]
    fn cg_path_matches_dense_path() {
        // Force both solvers over the same small system by calling the
        // internals through the public API twice would need a size switch;
        // instead check the CG solver directly on the reduced system of a
        // small mesh against the dense solution.
        let (mesh, adj) = setup();
        let r0 = rotation_exp(&Vector3::new(0.0, 0.3, 0.4));
        let grads = vec![r0; mesh.vertex_count()];
        let anchor = (3, nalgebra::Point3::from(r0 * mesh.positions[3].coords));
        let dense = reconstruct_positions(&mesh, &grads, &adj, anchor).unwrap();

        // Rebuild the reduced system the same way and run CG.
        let v = mesh.vertex_count();
        let weights = crate::mesh::cotangent_edge_weights(&mesh);
        let reduced: Vec<usize> = (0..v).filter(|&i| i != anchor.0).collect();
        let mut reduced_of = vec![usize::MAX; v];
        for (r, &i) in reduced.iter().enumerate() {
            reduced_of[i] = r;
        }
        let n = v - 1;
        let mut diag = vec![0.0f64; n];
        let mut rhs = vec![[0.0f64; 3]; n];
        let mut off = SparseBuilder::new(n, n);
        for (&(i, j), &w) in &weights.weights {
            let d = mesh.positions[i] - mesh.positions[j];
            let b = (grads[i] + grads[j]) * d * 0.5;
            for (from, to, sign) in [(i, j, 1.0), (j, i, -1.0)] {
                if from == anchor.0 {
                    continue;
                }
                let r = reduced_of[from];
                diag[r] += w;
                for k in 0..3 {
                    rhs[r][k] += w * sign * b[k];
                }
                if to == anchor.0 {
                    for k in 0..3 {
                        rhs[r][k] += w * anchor.1[k];
                    }
                } else {
                    off.push(r, reduced_of[to], -w);
                }
            }
        }
        let cg = solve_cg(n, &diag, off, &rhs).unwrap();
        for (r, &i) in reduced.iter().enumerate() {
            let p = Point3::new(cg[r][0], cg[r][1], cg[r][2]);
            assert!((p - dense[i]).norm() < 1e-7);
        }
    }
}
