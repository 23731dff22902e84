//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, SgflmError};

/// Condition numbers above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Ratio of largest to smallest absolute eigenvalue of a symmetric matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let eig = SymmetricEigen::new(m.clone());
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for v in eig.eigenvalues.iter() {
        lo = lo.min(v.abs());
        hi = hi.max(v.abs());
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Inverse of a symmetric positive-definite matrix via Cholesky, refusing
/// matrices whose condition number exceeds [`MAX_CONDITION`].
pub fn spd_inverse(m: &DMatrix<f64>, context: &str) -> Result<(DMatrix<f64>, f64)> {
    let sym = symmetrize(m);
    let condition = condition_number(&sym);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(SgflmError::IllConditioned {
            context: context.to_string(),
            condition,
        });
    }
    let chol = sym.cholesky().ok_or_else(|| SgflmError::IllConditioned {
        context: format!("{context} (not positive definite)"),
        condition,
    })?;
    Ok((symmetrize(&chol.inverse()), condition))
}

/// Solves `m x = b` for symmetric positive-definite `m`, or `None` if the
/// Cholesky factorization fails.
pub fn spd_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    m.clone().cholesky().map(|c| c.solve(b))
}
