#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use wfilter_core::{Gaussian, GaussianMixture, LinearMeasurementModel};

pub fn random_spd<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * rng.random_range(0.05..0.5)
}

pub fn random_vector<R: Rng>(n: usize, scale: f64, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

pub fn random_gaussian<R: Rng>(n: usize, rng: &mut R) -> Gaussian<f64> {
    Gaussian::new(random_vector(n, 3.0, rng), random_spd(n, rng)).unwrap()
}

pub fn random_model<R: Rng>(n: usize, m: usize, rng: &mut R) -> LinearMeasurementModel<f64> {
    let c = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.5..1.5));
    LinearMeasurementModel::new(c, random_spd(m, rng)).unwrap()
}

pub fn random_weights<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

pub fn random_mixture<R: Rng>(k: usize, n: usize, rng: &mut R) -> GaussianMixture<f64> {
    let nodes = (0..k).map(|_| random_gaussian(n, rng)).collect();
    GaussianMixture::new(random_weights(k, rng), nodes).unwrap()
}

/// Textbook information-form update: (Σ⁺)⁻¹ = (Σ⁻)⁻¹ + CᵀR⁻¹C,
/// x⁺ = Σ⁺((Σ⁻)⁻¹x⁻ + CᵀR⁻¹y).
pub fn information_update(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    c: &DMatrix<f64>,
    r: &DMatrix<f64>,
    y: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let prior_info = cov.clone().try_inverse().unwrap();
    let r_inv = r.clone().try_inverse().unwrap();
    let post_info = &prior_info + c.transpose() * &r_inv * c;
    let post_cov = post_info.try_inverse().unwrap();
    let post_mean = &post_cov * (&prior_info * mean + c.transpose() * &r_inv * y);
    (post_mean, post_cov)
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
