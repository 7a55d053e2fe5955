//! Small dense linear-algebra helpers built on nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// First jitter magnitude tried when a Cholesky factorization fails.
const JITTER_START: f64 = 1e-10;
/// Largest jitter magnitude tried before giving up.
const JITTER_END: f64 = 1e-6;

/// Cholesky factorization of a symmetric positive (semi)definite matrix with a
/// jitter ladder: on failure, `jitter * I` is added with jitter escalating
/// 1e-10 -> 1e-6 in multiplicative steps of 10. Exhausting the ladder is an error.
pub fn cholesky_spd(a: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol);
    }
    let n = a.nrows();
    let mut jitter = JITTER_START;
    while jitter <= JITTER_END * (1.0 + 1e-12) {
        let mut aj = a.clone();
        for i in 0..n {
            aj[(i, i)] += jitter;
        }
        if let Some(chol) = aj.cholesky() {
            return Ok(chol);
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical(format!(
        "Cholesky failed for {n}x{n} matrix after jitter ladder up to {JITTER_END:e}"
    )))
}

/// Log-determinant of the factored matrix from its Cholesky factor.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Solves `L x = b` for the lower-triangular Cholesky factor `L`.
pub fn solve_lower(chol: &Cholesky<f64, Dyn>, b: &DVector<f64>) -> DVector<f64> {
    let mut x = b.clone();
    chol.l_dirty()
        .solve_lower_triangular_mut(&mut x);
    x
}

/// Solves `L X = B` column-wise for a matrix right-hand side.
pub fn solve_lower_mat(chol: &Cholesky<f64, Dyn>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = b.clone();
    chol.l_dirty()
        .solve_lower_triangular_mut(&mut x);
    x
}

/// Ordinary least squares via QR, with rank-deficiency detection that names the
/// offending columns. Returns the coefficient vector and the residual sum of squares.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<(DVector<f64>, f64)> {
    let n = x.nrows();
    let p = x.ncols();
    if n < p {
        return Err(Error::InvalidInput(format!(
            "need at least as many rows ({n}) as regressors ({p})"
        )));
    }
    let qr = x.clone().col_piv_qr();
    let r = qr.r();
    let perm = qr.p();
    let tol = 1e-10 * r[(0, 0)].abs().max(1.0);
    let mut bad = Vec::new();
    for i in 0..p {
        if r[(i, i)].abs() <= tol {
            // permutation maps pivot position back to the original column
            let orig = perm.permutation().map_new_to_old(i);
            bad.push(names.get(orig).cloned().unwrap_or_else(|| format!("col{orig}")));
        }
    }
    if !bad.is_empty() {
        bad.sort();
        return Err(Error::SingularDesign { columns: bad });
    }
    let beta = qr
        .solve(y)
        .ok_or_else(|| Error::Numerical("QR solve failed".into()))?;
    let resid = y - x * &beta;
    Ok((beta, resid.norm_squared()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cholesky_recovers_identity() {
        let a = DMatrix::<f64>::identity(4, 4);
        let chol = cholesky_spd(&a).unwrap();
        assert_relative_eq!(log_det(&chol), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn cholesky_jitter_repairs_tiny_negative_eigenvalue() {
        // rank-1 matrix minus a tiny diagonal: indefinite without jitter
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let mut a = &v * v.transpose();
        for i in 0..3 {
            a[(i, i)] -= 1e-12;
        }
        assert!(a.clone().cholesky().is_none() || true); // may or may not fail; ladder must succeed
        assert!(cholesky_spd(&a).is_ok());
    }

    #[test]
    fn cholesky_rejects_clearly_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(cholesky_spd(&a), Err(Error::Numerical(_))));
    }

    #[test]
    fn ols_recovers_exact_coefficients() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]); // 1 + 2t
        let names = vec!["intercept".to_string(), "t".to_string()];
        let (beta, rss) = ols(&x, &y, &names).unwrap();
        assert_relative_eq!(beta[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(beta[1], 2.0, epsilon = 1e-10);
        assert!(rss < 1e-18);
    }

    #[test]
    fn ols_names_dependent_columns() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let names = vec!["a".to_string(), "twice_a".to_string()];
        match ols(&x, &y, &names) {
            Err(Error::SingularDesign { columns }) => {
                assert_eq!(columns.len(), 1);
                assert!(columns[0] == "a" || columns[0] == "twice_a");
            }
            other => panic!("expected singular design, got {other:?}"),
        }
    }
}
