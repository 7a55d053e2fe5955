//! The observed sample: outcome, exposure mixture, optional mediator, covariates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One observed sample. Immutable after construction; all columns validated
/// to share the same length and to be finite.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: DVector<f64>,
    z: DMatrix<f64>,
    m: Option<DVector<f64>>,
    c: DMatrix<f64>,
    z_names: Vec<String>,
    c_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset of `n` subjects with an `n x L` exposure matrix `z`,
    /// an optional mediator vector and an `n x P` covariate matrix (`P` may be 0).
    pub fn new(
        y: DVector<f64>,
        z: DMatrix<f64>,
        z_names: Vec<String>,
        m: Option<DVector<f64>>,
        c: DMatrix<f64>,
        c_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::InvalidInput(format!("need n >= 2 subjects, got {n}")));
        }
        if z.ncols() < 1 {
            return Err(Error::InvalidInput("need at least one exposure column".into()));
        }
        if z.nrows() != n {
            return Err(Error::InvalidInput(format!(
                "exposure matrix has {} rows but outcome has {n}",
                z.nrows()
            )));
        }
        if c.ncols() > 0 && c.nrows() != n {
            return Err(Error::InvalidInput(format!(
                "covariate matrix has {} rows but outcome has {n}",
                c.nrows()
            )));
        }
        if let Some(mv) = &m {
            if mv.len() != n {
                return Err(Error::InvalidInput(format!(
                    "mediator has length {} but outcome has {n}",
                    mv.len()
                )));
            }
        }
        if z_names.len() != z.ncols() {
            return Err(Error::InvalidInput(format!(
                "{} exposure names for {} columns",
                z_names.len(),
                z.ncols()
            )));
        }
        if c_names.len() != c.ncols() {
            return Err(Error::InvalidInput(format!(
                "{} covariate names for {} columns",
                c_names.len(),
                c.ncols()
            )));
        }
        let finite = y.iter().all(|v| v.is_finite())
            && z.iter().all(|v| v.is_finite())
            && c.iter().all(|v| v.is_finite())
            && m.as_ref().map_or(true, |mv| mv.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::InvalidInput("non-finite value in dataset".into()));
        }
        // covariate matrix with zero columns is normalized to n rows for shape sanity
        let c = if c.ncols() == 0 { DMatrix::zeros(n, 0) } else { c };
        Ok(Self { y, z, m, c, z_names, c_names })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of exposure-mixture columns.
    pub fn l(&self) -> usize {
        self.z.ncols()
    }

    /// Number of covariate columns.
    pub fn p(&self) -> usize {
        self.c.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn m(&self) -> Option<&DVector<f64>> {
        self.m.as_ref()
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn z_names(&self) -> &[String] {
        &self.z_names
    }

    pub fn c_names(&self) -> &[String] {
        &self.c_names
    }

    pub fn z_column_index(&self, name: &str) -> Option<usize> {
        self.z_names.iter().position(|c| c == name)
    }

    /// Column means of the covariate matrix (the default covariate fixing point).
    pub fn covariate_means(&self) -> DVector<f64> {
        if self.p() == 0 {
            return DVector::zeros(0);
        }
        DVector::from_iterator(self.p(), self.c.column_iter().map(|col| col.mean()))
    }
}
