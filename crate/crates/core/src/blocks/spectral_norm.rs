//! Operator-norm estimation for convolutions by power iteration, and the
//! soft normalization that rescales a kernel only when its estimated norm
//! exceeds the target coefficient.

use rand::Rng;

use crate::error::Result;
use crate::tensor::conv::{conv2d_input_grad, conv2d_raw, Padding};
use crate::tensor::Tensor;

/// Persistent power-iteration state for one convolution.
///
/// `u_vec` is shaped like the convolution's input; warm-starting it across
/// estimates makes one iteration per training step enough to track slowly
/// moving kernels.
#[derive(Debug, Clone)]
pub struct SpectralNormState {
    u_vec: Tensor,
    sigma_hat: f64,
}

impl SpectralNormState {
    /// `input_shape` is the (1, C, H, W) shape the operator norm is taken
    /// against; the norm of a convolution depends on it.
    pub fn new<R: Rng>(input_shape: &[usize], rng: &mut R) -> SpectralNormState {
        let u = Tensor::randn(input_shape, rng);
        SpectralNormState {
            u_vec: u.normalized().expect("random vector is nonzero"),
            sigma_hat: 0.0,
        }
    }

    pub fn sigma_hat(&self) -> f64 {
        self.sigma_hat
    }

    pub fn input_shape(&self) -> &[usize] {
        self.u_vec.shape()
    }
}

/// Runs `n_iters` rounds of `v <- normalize(K^T K v)` with the stride-1
/// convolution `K` and its adjoint, then reports `sigma_hat = ||K v||`.
///
/// The estimate is a monotonically improving lower bound on the true operator
/// norm. A zero kernel yields `sigma_hat = 0` without error.
pub fn estimate_sigma(
    kernel: &Tensor,
    state: &mut SpectralNormState,
    padding: Padding,
    n_iters: usize,
) -> Result<f64> {
    for _ in 0..n_iters.max(1) {
        let forward = conv2d_raw(&state.u_vec, kernel, 1, padding)?;
        let back = conv2d_input_grad(&forward, kernel, 1, padding, state.u_vec.shape())?;
        let norm = back.norm();
        if norm < 1e-300 {
            state.sigma_hat = 0.0;
            return Ok(0.0);
        }
        state.u_vec = back.scaled(1.0 / norm);
    }
    let response = conv2d_raw(&state.u_vec, kernel, 1, padding)?;
    state.sigma_hat = response.norm();
    Ok(state.sigma_hat)
}

/// Scales the kernel by `min(1, c / sigma_hat)`: kernels already inside the
/// ball are left untouched. `c = None` disables normalization entirely.
/// Returns the factor applied.
pub fn apply_spectral_norm(kernel: &mut Tensor, state: &mut SpectralNormState, c: Option<f64>) -> f64 {
    let c = match c {
        Some(c) => c,
        None => return 1.0,
    };
    if state.sigma_hat <= c || state.sigma_hat == 0.0 {
        return 1.0;
    }
    let factor = c / state.sigma_hat;
    for v in kernel.data_mut() {
        *v *= factor;
    }
    state.sigma_hat *= factor;
    factor
}

/// Materializes the stride-1 convolution as a dense matrix (columns are the
/// responses to input basis vectors). Test-scale oracle for the estimator.
pub fn conv_operator_matrix(
    kernel: &Tensor,
    input_shape: &[usize],
    padding: Padding,
) -> Result<nalgebra::DMatrix<f64>> {
    let n: usize = input_shape.iter().product();
    let probe = conv2d_raw(&Tensor::zeros(input_shape), kernel, 1, padding)?;
    let m = probe.numel();
    let mut mat = nalgebra::DMatrix::zeros(m, n);
    for j in 0..n {
        let mut e = Tensor::zeros(input_shape);
        e.data_mut()[j] = 1.0;
        let col = conv2d_raw(&e, kernel, 1, padding)?;
        for (i, v) in col.data().iter().enumerate() {
            mat[(i, j)] = *v;
        }
    }
    Ok(mat)
}
