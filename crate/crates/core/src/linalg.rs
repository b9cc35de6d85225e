//! Dense symmetric-matrix helpers: symmetrization, SPD square roots and
//! factorizations.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{FilterError, Result};
use crate::scalar::Real;

/// Returns `(m + mᵀ) / 2`.
pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

/// Fails unless `m` is square and `‖m − mᵀ‖_F ≤ tol · ‖m‖_F`.
pub fn check_symmetric<T: Real>(m: &DMatrix<T>, tol: T, what: &'static str) -> Result<()> {
    if !m.is_square() {
        return Err(FilterError::dim(what, m.nrows(), m.ncols()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(FilterError::validation(format!("{what} has non-finite entries")));
    }
    let asym = (m - m.transpose()).norm();
    if asym > tol * m.norm() {
        return Err(FilterError::validation(format!(
            "{what} is not symmetric (asymmetry {:e})",
            asym.as_f64()
        )));
    }
    Ok(())
}

fn eigen<T: Real>(m: &DMatrix<T>) -> SymmetricEigen<T, Dyn> {
    SymmetricEigen::new(symmetrize(m))
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn eigen_range<T: Real>(m: &DMatrix<T>) -> (T, T) {
    let e = eigen(m);
    e.eigenvalues
        .iter()
        .fold((T::max_value().unwrap(), T::min_value().unwrap()), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Validates symmetry and the eigenvalue floor; returns the minimum eigenvalue.
pub fn check_spd<T: Real>(m: &DMatrix<T>, floor: T, what: &'static str) -> Result<T> {
    check_symmetric(m, T::tight_tol(), what)?;
    let (lo, _) = eigen_range(m);
    if !lo.is_finite() || lo < floor || lo <= T::zero() {
        return Err(FilterError::Degenerate {
            eigenvalue: lo.as_f64(),
            floor: floor.as_f64(),
        });
    }
    Ok(lo)
}

/// Unique symmetric positive-definite square root `S` with `S·S = m`.
///
/// Computed through the symmetric eigendecomposition `m = V Λ Vᵀ` as
/// `S = V Λ^{1/2} Vᵀ`.
pub fn spd_sqrt<T: Real>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    spd_sqrt_with_floor(m, T::eig_floor())
}

pub fn spd_sqrt_with_floor<T: Real>(m: &DMatrix<T>, floor: T) -> Result<DMatrix<T>> {
    check_symmetric(m, T::tight_tol(), "spd_sqrt input")?;
    let e = eigen(m);
    let lo = e.eigenvalues.iter().copied().fold(T::max_value().unwrap(), T::min);
    if lo < floor || lo <= T::zero() {
        return Err(FilterError::Degenerate {
            eigenvalue: lo.as_f64(),
            floor: floor.as_f64(),
        });
    }
    Ok(recompose(&e, |v| v.sqrt()))
}

/// `tr(m^{1/2})` for a symmetric positive semi-definite `m`; eigenvalues
/// slightly below zero from rounding are clamped.
pub fn psd_sqrt_trace<T: Real>(m: &DMatrix<T>) -> T {
    eigen(m)
        .eigenvalues
        .iter()
        .fold(T::zero(), |acc, &v| acc + v.max(T::zero()).sqrt())
}

/// Raises every eigenvalue of a symmetric matrix to at least `floor`.
pub fn clamp_eigenvalues<T: Real>(m: &DMatrix<T>, floor: T) -> DMatrix<T> {
    let e = eigen(m);
    if e.eigenvalues.iter().all(|&v| v >= floor) {
        return symmetrize(m);
    }
    recompose(&e, |v| v.max(floor))
}

fn recompose<T: Real>(e: &SymmetricEigen<T, Dyn>, f: impl Fn(T) -> T) -> DMatrix<T> {
    let v = &e.eigenvectors;
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(f));
    symmetrize(&(v * d * v.transpose()))
}

/// Lower factor `L` with `L Lᵀ = m` for a symmetric PSD matrix.
///
/// Uses Cholesky when it succeeds and falls back to the eigenvalue square
/// root (which is a valid, if non-triangular, factor) for singular input.
pub fn psd_factor<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let sym = symmetrize(m);
    match Cholesky::new(sym.clone()) {
        Some(c) => c.l(),
        None => recompose(&eigen(&sym), |v| v.max(T::zero()).sqrt()),
    }
}

/// Cholesky factorization of a symmetric positive-definite matrix.
pub fn cholesky<T: Real>(m: &DMatrix<T>) -> Result<Cholesky<T, Dyn>> {
    Cholesky::new(symmetrize(m)).ok_or_else(|| {
        let (lo, _) = eigen_range(m);
        FilterError::Degenerate {
            eigenvalue: lo.as_f64(),
            floor: 0.0,
        }
    })
}
