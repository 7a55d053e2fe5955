//! Marginalized BKMR likelihood.
//!
//! With the surface integrated out, the outcome is multivariate normal:
//! `y ~ N(C beta, sigma^2 (I + lambda K))`. Everything the sampler and the
//! posterior surface need from that covariance flows through one Cholesky
//! factorization of `V = I + lambda K`, wrapped here.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::Result;
use crate::linalg;
use crate::model::{kernel_matrix, KernelState, TrainingData};

const LN_2PI: f64 = 1.8378770664093453;

/// Cholesky factorization of `V = I + lambda K` with its log-determinant.
#[derive(Debug, Clone)]
pub struct VFactor {
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
    lambda: f64,
}

impl VFactor {
    pub fn new(k: &DMatrix<f64>, lambda: f64) -> Result<Self> {
        let n = k.nrows();
        let mut v = k * lambda;
        for i in 0..n {
            v[(i, i)] += 1.0;
        }
        let chol = linalg::cholesky_spd(&v)?;
        let log_det = linalg::log_det(&chol);
        Ok(Self { chol, log_det, lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `L^-1 b`, the half-solve used for quadratic forms.
    pub fn whiten(&self, b: &DVector<f64>) -> DVector<f64> {
        linalg::solve_lower(&self.chol, b)
    }

    /// `L^-1 B` column-wise.
    pub fn whiten_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        linalg::solve_lower_mat(&self.chol, b)
    }

    /// Full solve `V^-1 b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// Full solve `V^-1 B`.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// `b^T V^-1 b`.
    pub fn quad_form(&self, b: &DVector<f64>) -> f64 {
        self.whiten(b).norm_squared()
    }
}

/// Log density of `N(0, sigma^2 V)` evaluated through a prepared factor,
/// given the quadratic form `resid^T V^-1 resid`.
pub(crate) fn loglik_from_parts(n: usize, sigma2: f64, log_det: f64, qform: f64) -> f64 {
    -0.5 * (n as f64 * (LN_2PI + sigma2.ln()) + log_det + qform / sigma2)
}

/// Log marginal likelihood of the training response under
/// `y ~ N(C beta, sigma^2 (I + lambda K))` with `K` built from `state`.
///
/// `lambda = 0` is allowed and reduces to an iid normal likelihood.
pub fn marginal_loglik(
    train: &TrainingData,
    beta: &DVector<f64>,
    sigma2: f64,
    lambda: f64,
    state: &KernelState,
) -> Result<f64> {
    use crate::error::Error;
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::InvalidInput(format!("sigma2 must be > 0, got {sigma2}")));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
    }
    if beta.len() != train.p() {
        return Err(Error::InvalidInput(format!(
            "beta has length {}, expected {}",
            beta.len(),
            train.p()
        )));
    }
    let resid = if train.p() > 0 { &train.y - &train.c * beta } else { train.y.clone() };
    let n = train.n();
    if lambda == 0.0 {
        return Ok(loglik_from_parts(n, sigma2, 0.0, resid.norm_squared()));
    }
    let k = kernel_matrix(&train.x, state)?;
    let factor = VFactor::new(&k, lambda)?;
    Ok(loglik_from_parts(n, sigma2, factor.log_det(), factor.quad_form(&resid)))
}
