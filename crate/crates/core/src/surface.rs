//! Posterior predictive surface of a fitted BKMR model.
//!
//! Given draw `j` with hyperparameters `(beta, sigma2, lambda, kernel state)`,
//! the surface values at new points are Gaussian with
//! mean `lambda K_*n (I + lambda K)^-1 (y - C beta)` and covariance
//! `sigma2 lambda (K_** - lambda K_*n (I + lambda K)^-1 K_n*)`.
//! The factorization of `I + lambda K` is computed once per draw and shared
//! through a cache keyed by draw index; inserts are idempotent so queries for
//! different draws can run concurrently.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, Weak};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{cross_kernel, kernel_matrix, KernelState, PosteriorDraws};
use crate::sampler::VFactor;

/// How surface values are reported: the conditional mean given draw-j
/// hyperparameters, or one sample from the conditional Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceMode {
    ConditionalMean,
    ConditionalDraw,
}

/// A batch of evaluation points plus the covariate fixing row.
#[derive(Debug, Clone)]
pub struct SurfaceQuery {
    /// `q x L'` matrix of kernel-input values.
    pub points: DMatrix<f64>,
    /// Covariate row of length `P` (empty when the model has no covariates).
    pub covariates: DVector<f64>,
    pub mode: SurfaceMode,
}

impl SurfaceQuery {
    pub fn conditional_mean(points: DMatrix<f64>, covariates: DVector<f64>) -> Self {
        Self { points, covariates, mode: SurfaceMode::ConditionalMean }
    }
}

/// Per-draw quantities shared by every query against that draw.
struct DrawFactor {
    /// Factor of `I + lambda K`; absent when `lambda = 0`.
    factor: Option<VFactor>,
    /// `(I + lambda K)^-1 (y - C beta)`.
    alpha: DVector<f64>,
    lambda: f64,
    sigma2: f64,
    beta: DVector<f64>,
    state: KernelState,
}

/// Read-only evaluator over one set of posterior draws.
pub struct PosteriorSurface<'a> {
    draws: &'a PosteriorDraws,
    cache: Mutex<HashMap<usize, Weak<DrawFactor>>>,
}

impl<'a> PosteriorSurface<'a> {
    pub fn new(draws: &'a PosteriorDraws) -> Self {
        Self { draws, cache: Mutex::new(HashMap::new()) }
    }

    pub fn draws(&self) -> &'a PosteriorDraws {
        self.draws
    }

    fn build_factor(&self, j: usize) -> Result<DrawFactor> {
        let d = self.draws.draw(j);
        let train = self.draws.train();
        let beta = DVector::from_vec(d.beta.clone());
        let resid = if train.p() > 0 { &train.y - &train.c * &beta } else { train.y.clone() };
        let (factor, alpha) = if d.lambda == 0.0 {
            (None, resid)
        } else {
            let k = kernel_matrix(&train.x, &d.kernel_state)?;
            let f = VFactor::new(&k, d.lambda)?;
            let alpha = f.solve(&resid);
            (Some(f), alpha)
        };
        Ok(DrawFactor {
            factor,
            alpha,
            lambda: d.lambda,
            sigma2: d.sigma2,
            beta,
            state: d.kernel_state.clone(),
        })
    }

    /// Fetches (or computes) the shared factorization for draw `j`. Entries
    /// are weak so memory stays bounded by the factors currently in use.
    fn factor(&self, j: usize) -> Result<Arc<DrawFactor>> {
        if j >= self.draws.len() {
            return Err(Error::InvalidInput(format!(
                "draw index {j} out of range ({} retained)",
                self.draws.len()
            )));
        }
        if let Some(live) = self.cache.lock().unwrap().get(&j).and_then(Weak::upgrade) {
            return Ok(live);
        }
        // build outside the lock; a concurrent builder of the same draw wins
        // the race harmlessly (identical content)
        let built = Arc::new(self.build_factor(j)?);
        let mut cache = self.cache.lock().unwrap();
        if let Some(live) = cache.get(&j).and_then(Weak::upgrade) {
            return Ok(live);
        }
        cache.insert(j, Arc::downgrade(&built));
        Ok(built)
    }

    fn check_query(&self, query: &SurfaceQuery) -> Result<()> {
        let train = self.draws.train();
        if query.points.nrows() == 0 {
            return Err(Error::InvalidInput("empty query".into()));
        }
        if query.points.ncols() != train.schema.dim() {
            return Err(Error::InvalidInput(format!(
                "query has {} kernel inputs, model expects {}",
                query.points.ncols(),
                train.schema.dim()
            )));
        }
        if query.covariates.len() != train.p() {
            return Err(Error::InvalidInput(format!(
                "query has {} covariates, model expects {}",
                query.covariates.len(),
                train.p()
            )));
        }
        if query.points.iter().any(|v| !v.is_finite())
            || query.covariates.iter().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput("non-finite query value".into()));
        }
        Ok(())
    }

    /// Conditional mean of the surface at the query points for draw `j`.
    pub fn h_mean(&self, points: &DMatrix<f64>, j: usize) -> Result<DVector<f64>> {
        let df = self.factor(j)?;
        let (unique, map) = dedup_rows(points);
        let mean = h_mean_unique(&df, &unique, self.draws)?;
        Ok(DVector::from_iterator(map.len(), map.iter().map(|&u| mean[u])))
    }

    /// Conditional covariance of the surface at the query points for draw `j`.
    pub fn h_cov(&self, points: &DMatrix<f64>, j: usize) -> Result<DMatrix<f64>> {
        let df = self.factor(j)?;
        let (unique, map) = dedup_rows(points);
        let cov = h_cov_unique(&df, &unique, self.draws)?;
        let q = map.len();
        Ok(DMatrix::from_fn(q, q, |i, k| cov[(map[i], map[k])]))
    }

    /// Conditional variance (diagonal of [`Self::h_cov`]), clamped at zero;
    /// leakage below `-1e-8` is a numerical error.
    pub fn h_var(&self, points: &DMatrix<f64>, j: usize) -> Result<DVector<f64>> {
        let cov = self.h_cov(points, j)?;
        let mut out = DVector::zeros(points.nrows());
        for i in 0..points.nrows() {
            let v = cov[(i, i)];
            if v < -1e-8 {
                return Err(Error::Numerical(format!(
                    "negative predictive variance {v} at query point {i}"
                )));
            }
            out[i] = v.max(0.0);
        }
        Ok(out)
    }

    /// Surface values at the query points under the query's mode. The RNG is
    /// consumed only in conditional-draw mode; duplicated query points always
    /// receive identical values.
    pub fn h_at<R: Rng + ?Sized>(
        &self,
        query: &SurfaceQuery,
        j: usize,
        rng: &mut R,
    ) -> Result<DVector<f64>> {
        self.check_query(query)?;
        match query.mode {
            SurfaceMode::ConditionalMean => self.h_mean(&query.points, j),
            SurfaceMode::ConditionalDraw => {
                let df = self.factor(j)?;
                let (unique, map) = dedup_rows(&query.points);
                let mean = h_mean_unique(&df, &unique, self.draws)?;
                let cov = h_cov_unique(&df, &unique, self.draws)?;
                let q = unique.nrows();
                let chol = linalg::cholesky_spd(&cov)?;
                let eta = DVector::from_iterator(q, (0..q).map(|_| rng.sample::<f64, _>(StandardNormal)));
                let sample = mean + chol.l() * eta;
                Ok(DVector::from_iterator(map.len(), map.iter().map(|&u| sample[u])))
            }
        }
    }

    /// Mean response at the query points: surface value plus the linear
    /// covariate term `c^T beta_j`.
    pub fn predict_mean_response<R: Rng + ?Sized>(
        &self,
        query: &SurfaceQuery,
        j: usize,
        rng: &mut R,
    ) -> Result<DVector<f64>> {
        let h = self.h_at(query, j, rng)?;
        let df = self.factor(j)?;
        let shift = if df.beta.is_empty() { 0.0 } else { query.covariates.dot(&df.beta) };
        Ok(h.add_scalar(shift))
    }
}

fn h_mean_unique(
    df: &DrawFactor,
    unique: &DMatrix<f64>,
    draws: &PosteriorDraws,
) -> Result<DVector<f64>> {
    if df.lambda == 0.0 {
        return Ok(DVector::zeros(unique.nrows()));
    }
    let kstar = cross_kernel(unique, &draws.train().x, &df.state)?;
    Ok((&kstar * &df.alpha) * df.lambda)
}

fn h_cov_unique(
    df: &DrawFactor,
    unique: &DMatrix<f64>,
    draws: &PosteriorDraws,
) -> Result<DMatrix<f64>> {
    let q = unique.nrows();
    if df.lambda == 0.0 {
        return Ok(DMatrix::zeros(q, q));
    }
    let kstar = cross_kernel(unique, &draws.train().x, &df.state)?;
    let kss = kernel_matrix(unique, &df.state)?;
    let factor = df.factor.as_ref().expect("factor present when lambda > 0");
    let vinv_kt = factor.solve_mat(&kstar.transpose());
    let cov = (kss - &kstar * vinv_kt * df.lambda) * (df.sigma2 * df.lambda);
    Ok(cov)
}

/// Collapses exactly-equal rows; returns the unique rows and, per original
/// row, the index of its unique representative.
fn dedup_rows(points: &DMatrix<f64>) -> (DMatrix<f64>, Vec<usize>) {
    let q = points.nrows();
    let cols = points.ncols();
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut unique_rows: Vec<usize> = Vec::new();
    let mut map = Vec::with_capacity(q);
    for i in 0..q {
        let key: Vec<u64> = (0..cols).map(|c| points[(i, c)].to_bits()).collect();
        let idx = *seen.entry(key).or_insert_with(|| {
            unique_rows.push(i);
            unique_rows.len() - 1
        });
        map.push(idx);
    }
    let unique = DMatrix::from_fn(unique_rows.len(), cols, |i, c| points[(unique_rows[i], c)]);
    (unique, map)
}
