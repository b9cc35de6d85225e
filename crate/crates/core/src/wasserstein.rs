//! Closed-form squared 2-Wasserstein distances between Gaussians, Dirac
//! points and Gaussian mixtures, plus an exact assignment-based distance
//! between equal-size empirical clouds.
//!
//! Every function returns the *squared* distance `W₂²`; use [`w2`] for the
//! metric itself.

use nalgebra::DMatrix;

use crate::assignment::min_cost_assignment;
use crate::cloud::EmpiricalCloud;
use crate::error::{FilterError, Result};
use crate::gaussian::{check_simplex, DiracPoint, Gaussian, GaussianMixture};
use crate::linalg::{psd_sqrt_trace, spd_sqrt, symmetrize};
use crate::scalar::Real;

/// Largest cloud size accepted by [`w2_empirical`].
pub const MAX_EMPIRICAL_POINTS: usize = 256;

/// Square root of a squared distance, clamped at zero.
pub fn w2<T: Real>(squared: T) -> T {
    squared.max(T::zero()).sqrt()
}

/// `‖μ₁−μ₂‖² + tr(Σ₁ + Σ₂ − 2(√Σ₁ Σ₂ √Σ₁)^{1/2})`.
pub fn w2_gaussian_gaussian<T: Real>(a: &Gaussian<T>, b: &Gaussian<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(FilterError::dim("w2 gaussian pair", a.dim(), b.dim()));
    }
    let mean_gap = (a.mean() - b.mean()).norm_squared();
    let root_a = spd_sqrt(a.cov())?;
    // Symmetrize before the outer root so rounding drift cannot leak in.
    let inner = symmetrize(&(&root_a * b.cov() * &root_a));
    let cross = psd_sqrt_trace(&inner);
    let spread = a.cov().trace() + b.cov().trace() - cross * T::lit(2.0);
    Ok((mean_gap + spread).max(T::zero()))
}

/// `‖μ − μc‖² + tr Σ`.
pub fn w2_gaussian_dirac<T: Real>(g: &Gaussian<T>, d: &DiracPoint<T>) -> Result<T> {
    if g.dim() != d.dim() {
        return Err(FilterError::dim("w2 gaussian/dirac", g.dim(), d.dim()));
    }
    Ok((g.mean() - d.location()).norm_squared() + g.cov().trace())
}

/// `Σᵢ λᵢ W₂²(Nᵢ, δ)`.
pub fn w2_mixture_dirac<T: Real>(mix: &GaussianMixture<T>, d: &DiracPoint<T>) -> Result<T> {
    w2_weighted_nodes_dirac(mix.weights(), mix.nodes(), d)
}

/// Same as [`w2_mixture_dirac`] with weights supplied separately from the
/// nodes, which makes the linearity in the weights directly testable.
pub fn w2_weighted_nodes_dirac<T: Real>(
    weights: &[T],
    nodes: &[Gaussian<T>],
    d: &DiracPoint<T>,
) -> Result<T> {
    if weights.len() != nodes.len() {
        return Err(FilterError::dim("mixture weights", nodes.len(), weights.len()));
    }
    check_simplex(weights, T::loose_tol())?;
    weights
        .iter()
        .zip(nodes)
        .try_fold(T::zero(), |acc, (&w, g)| Ok(acc + w * w2_gaussian_dirac(g, d)?))
}

/// Exact squared distance between two uniform clouds of equal size, from the
/// optimal matching under squared Euclidean cost divided by `N`.
pub fn w2_empirical<T: Real>(a: &EmpiricalCloud<T>, b: &EmpiricalCloud<T>) -> Result<T> {
    if a.len() != b.len() {
        return Err(FilterError::dim("empirical cloud size", a.len(), b.len()));
    }
    if a.dim() != b.dim() {
        return Err(FilterError::dim("empirical cloud dimension", a.dim(), b.dim()));
    }
    if a.len() > MAX_EMPIRICAL_POINTS {
        return Err(FilterError::validation(format!(
            "empirical clouds limited to {MAX_EMPIRICAL_POINTS} points, got {}",
            a.len()
        )));
    }
    let n = a.len();
    let (pa, pb) = (a.particles(), b.particles());
    let cost = DMatrix::from_fn(n, n, |i, j| (pa.row(i) - pb.row(j)).norm_squared());
    let total = min_cost_assignment(&cost)
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, &j)| acc + cost[(i, j)]);
    Ok(total / T::from_usize(n).unwrap())
}
