//! Normalized graph Laplacian and largest-eigenvalue estimation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::mesh::{Adjacency, MeshError};
use crate::sparse::{SparseBuilder, SparseMatrix};

/// `L = I - D^{-1/2} A D^{-1/2}` with unit edge weights. Exactly symmetric:
/// each off-diagonal value is computed once per undirected edge and stored in
/// both triangles. Errors on isolated vertices; warns when disconnected.
pub fn normalized_laplacian(adj: &Adjacency) -> Result<SparseMatrix, MeshError> {
    let n = adj.degrees.len();
    for (v, &d) in adj.degrees.iter().enumerate() {
        if d == 0 {
            return Err(MeshError::IsolatedVertex { vertex: v });
        }
    }
    if !is_connected(adj) {
        log::warn!("graph is disconnected; Laplacian spectrum has repeated zeros");
    }
    let mut builder = SparseBuilder::new(n, n);
    for i in 0..n {
        builder.push(i, i, 1.0);
    }
    for &(a, b) in &adj.edges {
        let w = -1.0 / ((adj.degrees[a] as f64) * (adj.degrees[b] as f64)).sqrt();
        builder.push(a, b, w);
        builder.push(b, a, w);
    }
    Ok(builder.finalize().expect("valid Laplacian triplets"))
}

fn is_connected(adj: &Adjacency) -> bool {
    let n = adj.one_rings.len();
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &w in &adj.one_rings[v] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                stack.push(w);
            }
        }
    }
    count == n
}

/// Power iteration for the largest eigenvalue of a symmetric PSD matrix.
/// Stops at relative tolerance `1e-8` or 200 iterations; returns the
/// normalized-Laplacian upper bound 2 if the iteration cannot make progress.
pub fn estimate_lambda_max(l: &SparseMatrix) -> f64 {
    const TOL: f64 = 1e-8;
    const MAX_ITERS: usize = 200;
    const FALLBACK: f64 = 2.0;

    let n = l.rows();
    if n == 0 {
        return FALLBACK;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x4d56_4145);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    normalize(&mut v);
    let mut lambda = 0.0f64;
    for _ in 0..MAX_ITERS {
        let y = l.matvec(&v).expect("square matrix");
        let rayleigh: f64 = v.iter().zip(&y).map(|(a, b)| a * b).sum();
        let norm = y.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return FALLBACK;
        }
        let converged = (rayleigh - lambda).abs() <= TOL * rayleigh.abs().max(1e-300);
        lambda = rayleigh;
        v = y;
        normalize(&mut v);
        if converged {
            return lambda;
        }
    }
    FALLBACK
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}
