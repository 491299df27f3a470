//! Chebyshev spectral graph convolution and the network's activations.
//!
//! A convolution with order-H coefficients applies
//! `Y = sum_h T_h(L~) X theta_h`, where `T_h` follows the three-term
//! Chebyshev recurrence on the rescaled Laplacian `L~ = 2 L / lambda_max - I`.
//! Only sparse matrix products are needed, and the rescaled Laplacian's
//! symmetry makes the input gradient another Chebyshev filter.

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

use crate::sparse::{SparseBuilder, SparseMatrix};

#[derive(Debug, Error)]
pub enum GconvError {
    #[error("lambda_max must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("input has {got} columns, layer expects {expected}")]
    ChannelMismatch { got: usize, expected: usize },
    #[error("input has {got} rows, graph has {expected} vertices")]
    VertexMismatch { got: usize, expected: usize },
    #[error("order H must be at least 1")]
    ZeroOrder,
}

/// `L~ = (2 / lambda_max) L - I`, sparse and symmetric.
pub fn scale_laplacian(l: &SparseMatrix, lambda_max: f64) -> Result<SparseMatrix, GconvError> {
    if !(lambda_max > 0.0) {
        return Err(GconvError::NonPositiveLambda(lambda_max));
    }
    let n = l.rows();
    let factor = 2.0 / lambda_max;
    let mut builder = SparseBuilder::new(n, n);
    let mut has_diag = vec![false; n];
    for (r, c, v) in l.triplets() {
        if r == c {
            has_diag[r] = true;
            builder.push(r, c, factor * v - 1.0);
        } else {
            builder.push(r, c, factor * v);
        }
    }
    for (r, present) in has_diag.iter().enumerate() {
        if !present {
            builder.push(r, r, -1.0);
        }
    }
    Ok(builder.finalize().expect("valid scaled Laplacian"))
}

/// The stack `[T_0(L~) X, ..., T_{H-1}(L~) X]` via the recurrence
/// `T_h = 2 L~ T_{h-1} - T_{h-2}`.
pub fn cheb_apply(
    lt: &SparseMatrix,
    x: ArrayView2<'_, f64>,
    order: usize,
) -> Result<Vec<Array2<f64>>, GconvError> {
    if order == 0 {
        return Err(GconvError::ZeroOrder);
    }
    if x.nrows() != lt.rows() {
        return Err(GconvError::VertexMismatch {
            got: x.nrows(),
            expected: lt.rows(),
        });
    }
    let mut stack = Vec::with_capacity(order);
    stack.push(x.to_owned());
    if order > 1 {
        let t1 = lt.matmul_dense(x).expect("conforming shapes");
        stack.push(t1);
    }
    for h in 2..order {
        let prev = lt
            .matmul_dense(stack[h - 1].view())
            .expect("conforming shapes");
        let next = 2.0 * &prev - &stack[h - 2];
        stack.push(next);
    }
    Ok(stack)
}

/// Forward convolution: `Y = sum_h T_h(L~) X theta_h`. No bias term.
pub fn gconv_forward(
    lt: &SparseMatrix,
    x: ArrayView2<'_, f64>,
    theta: &[Array2<f64>],
) -> Result<Array2<f64>, GconvError> {
    let stack = cheb_apply(lt, x, theta.len())?;
    gconv_forward_cached(&stack, theta, x.ncols())
}

/// Forward pass reusing a cached Chebyshev stack.
pub fn gconv_forward_cached(
    stack: &[Array2<f64>],
    theta: &[Array2<f64>],
    in_channels: usize,
) -> Result<Array2<f64>, GconvError> {
    if theta[0].nrows() != in_channels {
        return Err(GconvError::ChannelMismatch {
            got: in_channels,
            expected: theta[0].nrows(),
        });
    }
    let v = stack[0].nrows();
    let out_channels = theta[0].ncols();
    let mut y = Array2::zeros((v, out_channels));
    for (t_h, th) in stack.iter().zip(theta) {
        y += &t_h.dot(th);
    }
    Ok(y)
}

/// Reverse-mode gradients. `dtheta_h = (T_h X)ᵀ dY`; the input gradient uses
/// the symmetry `T_h(L~)ᵀ = T_h(L~)`, so it is the Chebyshev filter applied
/// to `dY theta_hᵀ`.
pub fn gconv_backward(
    lt: &SparseMatrix,
    stack: &[Array2<f64>],
    theta: &[Array2<f64>],
    dy: ArrayView2<'_, f64>,
) -> Result<(Array2<f64>, Vec<Array2<f64>>), GconvError> {
    let dtheta: Vec<Array2<f64>> = stack
        .iter()
        .map(|t_h| t_h.t().dot(&dy))
        .collect();
    // dX = sum_h T_h(L~) (dY theta_hᵀ); evaluate with a second recurrence on
    // the per-order right-hand sides.
    let rhs: Vec<Array2<f64>> = theta.iter().map(|th| dy.dot(&th.t())).collect();
    let mut dx = rhs[0].clone();
    for (h, r) in rhs.iter().enumerate().skip(1) {
        let mut t_km1 = r.clone(); // T_0 r
        let mut t_k = lt.matmul_dense(r.view()).expect("conforming"); // T_1 r
        for _ in 2..=h {
            let next = 2.0 * &lt.matmul_dense(t_k.view()).expect("conforming") - &t_km1;
            t_km1 = t_k;
            t_k = next;
        }
        dx += &t_k;
    }
    Ok((dx, dtheta))
}

/// Elementwise activations used by the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Linear,
}

impl Activation {
    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Tanh => x.mapv(f64::tanh),
            Activation::Sigmoid => x.mapv(|v| 1.0 / (1.0 + (-v).exp())),
            Activation::Linear => x.clone(),
        }
    }

    /// Upstream gradient times the derivative, expressed through the
    /// activation's own output.
    pub fn backward_from_output(&self, output: &Array2<f64>, upstream: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Tanh => upstream * &output.mapv(|y| 1.0 - y * y),
            Activation::Sigmoid => upstream * &output.mapv(|y| y * (1.0 - y)),
            Activation::Linear => upstream.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplacian::normalized_laplacian;
    use crate::mesh::{build_adjacency, parse_obj};
    use ndarray::arr2;

    fn k3_scaled() -> SparseMatrix {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        let l = normalized_laplacian(&build_adjacency(&m).unwrap()).unwrap();
        scale_laplacian(&l, 1.5).unwrap()
    }

    #[test]
    fn k3_scaled_entries() {
        let lt = k3_scaled();
        for i in 0..3 {
            assert!((lt.get(i, i) - 1.0 / 3.0).abs() < 1e-15);
            for j in 0..3 {
                if i != j {
                    assert!((lt.get(i, j) + 2.0 / 3.0).abs() < 1e-15);
                }
            }
        }
        assert!(lt.is_symmetric());
    }

    #[test]
    fn k3_scaled_eigenvalues() {
        let lt = k3_scaled();
        let dense = nalgebra::DMatrix::from_fn(3, 3, |i, j| lt.get(i, j));
        let mut eig: Vec<f64> = dense.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        assert!((eig[0] + 1.0).abs() < 1e-12);
        assert!((eig[1] - 1.0).abs() < 1e-12);
        assert!((eig[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_two_gives_l_minus_i() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        let l = normalized_laplacian(&build_adjacency(&m).unwrap()).unwrap();
        let lt = scale_laplacian(&l, 2.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = l.get(i, j) - if i == j { 1.0 } else { 0.0 };
                assert!((lt.get(i, j) - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn non_positive_lambda_rejected() {
        let l = SparseMatrix::identity(2);
        assert!(scale_laplacian(&l, 0.0).is_err());
        assert!(scale_laplacian(&l, -1.0).is_err());
    }

    #[test]
    fn cheb_order_one_returns_input() {
        let lt = k3_scaled();
        let x = arr2(&[[1.0], [0.0], [0.0]]);
        let stack = cheb_apply(&lt, x.view(), 1).unwrap();
        assert_eq!(stack.len(), 1);
        assert_eq!(stack[0], x);
    }

    #[test]
    fn cheb_t1_on_k3_indicator() {
        let lt = k3_scaled();
        let x = arr2(&[[1.0], [0.0], [0.0]]);
        let stack = cheb_apply(&lt, x.view(), 2).unwrap();
        let t1 = &stack[1];
        assert!((t1[[0, 0]] - 1.0 / 3.0).abs() < 1e-15);
        assert!((t1[[1, 0]] + 2.0 / 3.0).abs() < 1e-15);
        assert!((t1[[2, 0]] + 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn forward_identity_filter() {
        let lt = k3_scaled();
        let x = arr2(&[[0.3, -1.0], [2.0, 0.5], [0.0, 4.0]]);
        let theta = vec![ndarray::Array2::eye(2)];
        let y = gconv_forward(&lt, x.view(), &theta).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn forward_sum_of_first_two_orders() {
        // theta = (1, 1, 0) on scalar channel: Y = X + L~ X.
        let lt = k3_scaled();
        let x = arr2(&[[1.0], [0.0], [0.0]]);
        let theta = vec![
            arr2(&[[1.0]]),
            arr2(&[[1.0]]),
            arr2(&[[0.0]]),
        ];
        let y = gconv_forward(&lt, x.view(), &theta).unwrap();
        assert!((y[[0, 0]] - 4.0 / 3.0).abs() < 1e-15);
        assert!((y[[1, 0]] + 2.0 / 3.0).abs() < 1e-15);
        assert!((y[[2, 0]] + 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn forward_zero_theta_gives_zero() {
        let lt = k3_scaled();
        let x = arr2(&[[1.0], [2.0], [3.0]]);
        let theta = vec![Array2::zeros((1, 4)); 3];
        let y = gconv_forward(&lt, x.view(), &theta).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_order_one_closed_form() {
        let lt = k3_scaled();
        let x = arr2(&[[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]]);
        let theta = vec![arr2(&[[1.0, 0.5], [0.25, -2.0]])];
        let dy = arr2(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let stack = cheb_apply(&lt, x.view(), 1).unwrap();
        let (dx, dtheta) = gconv_backward(&lt, &stack, &theta, dy.view()).unwrap();
        assert_eq!(dtheta[0], x.t().dot(&dy));
        assert_eq!(dx, dy.dot(&theta[0].t()));
    }

    #[test]
    fn backward_zero_upstream_gives_zeros() {
        let lt = k3_scaled();
        let x = arr2(&[[1.0], [2.0], [3.0]]);
        let theta = vec![arr2(&[[0.7]]); 3];
        let stack = cheb_apply(&lt, x.view(), 3).unwrap();
        let dy = Array2::zeros((3, 1));
        let (dx, dtheta) = gconv_backward(&lt, &stack, &theta, dy.view()).unwrap();
        assert!(dx.iter().all(|&v| v == 0.0));
        assert!(dtheta.iter().all(|t| t.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn activation_values_and_derivatives() {
        let x = arr2(&[[0.0, 1.0], [-1.0, 2.0]]);
        assert_eq!(Activation::Tanh.apply(&x)[[0, 0]], 0.0);
        assert_eq!(Activation::Sigmoid.apply(&x)[[0, 0]], 0.5);
        assert_eq!(Activation::Linear.apply(&x), x);
        let ones = Array2::ones((2, 2));
        let tanh_out = Activation::Tanh.apply(&x);
        let grad = Activation::Tanh.backward_from_output(&tanh_out, &ones);
        assert_eq!(grad[[0, 0]], 1.0); // tanh' at 0
    }

    #[test]
    fn linearity_in_input_and_theta() {
        use rand::Rng;
        use rand::SeedableRng;
        let lt = k3_scaled();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let rand_mat = |rng: &mut rand_chacha::ChaCha8Rng, r: usize, c: usize| {
            Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
        };
        let theta: Vec<Array2<f64>> = (0..3).map(|_| rand_mat(&mut rng, 2, 2)).collect();
        let x1 = rand_mat(&mut rng, 3, 2);
        let x2 = rand_mat(&mut rng, 3, 2);
        let lhs = gconv_forward(&lt, (2.0 * &x1 - 0.5 * &x2).view(), &theta).unwrap();
        let rhs = 2.0 * &gconv_forward(&lt, x1.view(), &theta).unwrap()
            - 0.5 * &gconv_forward(&lt, x2.view(), &theta).unwrap();
        let err = (&lhs - &rhs).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(err < 1e-13);
    }
}
