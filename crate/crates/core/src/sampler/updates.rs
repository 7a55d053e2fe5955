//! Gibbs conditionals for the coefficient and variance blocks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::TrainingData;
use crate::sampler::loglik::VFactor;

/// Mean and precision Cholesky of the conditional posterior of `beta` under
/// the flat prior: `beta | rest ~ N(bhat, sigma2 (C^T V^-1 C)^-1)` with
/// `bhat = (C^T V^-1 C)^-1 C^T V^-1 y` (generalized least squares).
pub fn beta_conditional(
    train: &TrainingData,
    factor: &VFactor,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let p = train.p();
    if p == 0 {
        return Err(Error::InvalidState("no covariates: beta block is empty".into()));
    }
    let w = factor.whiten_mat(&train.c);
    let u = factor.whiten(&train.y);
    let a = w.transpose() * &w;
    let b = w.transpose() * u;
    let chol = linalg::cholesky_spd(&a)?;
    let mean = chol.solve(&b);
    // lower-triangular factor G with G G^T = C^T V^-1 C
    let g = chol.l();
    Ok((mean, g))
}

/// Draws `beta` from its conditional normal.
pub fn update_beta<R: Rng + ?Sized>(
    train: &TrainingData,
    factor: &VFactor,
    sigma2: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let (mean, g) = beta_conditional(train, factor)?;
    let p = mean.len();
    let eta = DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
    // solve G^T x = eta so that cov(x) = (G G^T)^-1
    let x = g
        .transpose()
        .solve_upper_triangular(&eta)
        .ok_or_else(|| Error::Numerical("singular triangular solve in beta update".into()))?;
    Ok(mean + x * sigma2.sqrt())
}

/// Draws `sigma^2` from its conditional inverse gamma given the quadratic form
/// `s_qform = resid^T V^-1 resid`: the precision is
/// `Gamma(a_sigma + n/2, b_sigma + s_qform/2)` (shape/rate).
pub fn update_sigma2<R: Rng + ?Sized>(
    s_qform: f64,
    n: usize,
    a_sigma: f64,
    b_sigma: f64,
    rng: &mut R,
) -> Result<f64> {
    let shape = a_sigma + 0.5 * n as f64;
    let rate = b_sigma + 0.5 * s_qform;
    let gamma = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::Numerical(format!("sigma2 conditional: {e}")))?;
    let precision: f64 = gamma.sample(rng);
    if !(precision.is_finite() && precision > 0.0) {
        return Err(Error::Numerical(format!(
            "sigma2 conditional produced precision {precision}"
        )));
    }
    Ok(1.0 / precision)
}
