//! Small dense symmetric-matrix helpers shared by sampling, sphering and TRCM.

use alloc::format;
use nalgebra::DMatrix;

use crate::{Error, Result};

/// Relative eigenvalue floor used before taking matrix roots.
pub const EIG_FLOOR_REL: f64 = 1e-12;

/// Checks symmetry within `tol` and strict positive-definiteness.
pub fn check_spd(a: &DMatrix<f64>, tol: f64, name: &str) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Parameter(format!("{name} must be square")));
    }
    for i in 0..a.nrows() {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > tol {
                return Err(Error::Parameter(format!("{name} is not symmetric")));
            }
        }
    }
    let eig = a.clone().symmetric_eigen();
    if eig.eigenvalues.min() <= 0.0 {
        return Err(Error::Parameter(format!(
            "{name} is not positive definite (min eigenvalue {:e})",
            eig.eigenvalues.min()
        )));
    }
    Ok(())
}

/// Symmetric matrix root and inverse root via eigendecomposition, P f(Λ) Pᵀ.
///
/// Eigenvalues below `EIG_FLOOR_REL · λ_max` are floored to that threshold
/// before rooting; the returned flag reports whether flooring occurred so
/// callers can record a conditioning warning.
fn sym_pow(a: &DMatrix<f64>, exponent: f64) -> (DMatrix<f64>, bool) {
    let eig = a.clone().symmetric_eigen();
    let floor = EIG_FLOOR_REL * eig.eigenvalues.max();
    let mut floored = false;
    let d = eig.eigenvalues.map(|ev| {
        let ev = if ev < floor {
            floored = true;
            floor
        } else {
            ev
        };
        libm::pow(ev, exponent)
    });
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose();
    // enforce exact symmetry lost to rounding
    for i in 0..out.nrows() {
        for j in 0..i {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    (out, floored)
}

/// P Λ^{1/2} Pᵀ.
pub fn sym_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    sym_pow(a, 0.5).0
}

/// P Λ^{−1/2} Pᵀ, plus a flag set when eigenvalue flooring kicked in.
pub fn sym_inv_sqrt_flagged(a: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    sym_pow(a, -0.5)
}

/// SPD inverse through Cholesky, falling back to the eigendecomposition when
/// the factorization fails on a barely-PD input.
pub fn spd_inverse(a: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.inverse());
    }
    let eig = a.clone().symmetric_eigen();
    if eig.eigenvalues.min() <= 0.0 {
        return Err(Error::Parameter(format!("{name} is not positive definite")));
    }
    let d = eig.eigenvalues.map(|ev| 1.0 / ev);
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose())
}

/// log|A| for SPD A.
pub fn spd_log_det(a: &DMatrix<f64>, name: &str) -> Result<f64> {
    if let Some(chol) = a.clone().cholesky() {
        let mut ld = 0.0;
        for i in 0..a.nrows() {
            ld += libm::log(chol.l_dirty()[(i, i)]);
        }
        return Ok(2.0 * ld);
    }
    let eig = a.clone().symmetric_eigen();
    if eig.eigenvalues.min() <= 0.0 {
        return Err(Error::Parameter(format!("{name} is not positive definite")));
    }
    Ok(eig.eigenvalues.iter().map(|&ev| libm::log(ev)).sum())
}
