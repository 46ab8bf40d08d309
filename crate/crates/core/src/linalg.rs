//! Small dense Hermitian helpers shared by the metric and solver code.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{PassError, Result};
use crate::C64;

/// `(A + Aᴴ)/2`.
pub fn hermitian_part(a: &DMatrix<C64>) -> DMatrix<C64> {
    (a + a.adjoint()).unscale(2.0)
}

/// `Re Tr(Aᴴ B)`, the real Frobenius inner product.
pub fn re_inner(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

pub fn frobenius_sq(a: &DMatrix<C64>) -> f64 {
    a.iter().map(C64::norm_sqr).sum()
}

/// Cholesky of a Hermitian positive-definite matrix, retrying once on its
/// Hermitian part when roundoff has broken symmetry.
pub fn cholesky_hpd(a: &DMatrix<C64>) -> Option<Cholesky<C64, Dyn>> {
    // complex sqrt never fails, so check the factor's diagonal explicitly
    let valid = |c: &Cholesky<C64, Dyn>| {
        c.l_dirty()
            .diagonal()
            .iter()
            .all(|d| d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-10 * d.re)
    };
    Cholesky::new(a.clone())
        .filter(valid)
        .or_else(|| Cholesky::new(hermitian_part(a)).filter(valid))
}

fn chol_log_det(chol: &Cholesky<C64, Dyn>) -> f64 {
    chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.re.ln()).sum()
}

/// `ln det A` for Hermitian positive-definite `A`.
pub fn ln_det_hpd(a: &DMatrix<C64>) -> Result<f64> {
    cholesky_hpd(a)
        .map(|c| chol_log_det(&c))
        .ok_or_else(|| PassError::DegenerateChannel("log-det of a matrix that is not positive definite".into()))
}

pub fn log2_det_hpd(a: &DMatrix<C64>) -> Result<f64> {
    Ok(ln_det_hpd(a)? / std::f64::consts::LN_2)
}

pub fn inverse_hpd(a: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    cholesky_hpd(a)
        .map(|c| c.inverse())
        .ok_or_else(|| PassError::DegenerateChannel("inverse of a matrix that is not positive definite".into()))
}

/// Eigenvalues of the Hermitian part of `a`, ascending.
pub fn hermitian_eigenvalues(a: &DMatrix<C64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(hermitian_part(a)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_eigenvalue(a: &DMatrix<C64>) -> f64 {
    hermitian_eigenvalues(a).first().copied().unwrap_or(f64::INFINITY)
}

pub fn identity(n: usize) -> DMatrix<C64> {
    DMatrix::identity(n, n)
}
