//! Gaussian sum filter measurement update.
//!
//! Each node receives its own optimal linear gain (the minimizer of the
//! unweighted upper bound `Σᵢ tr E[eᵢ⁺eᵢ⁺ᵀ]`), and the weights are revised by
//! the Bayesian likelihood ratio of the measurement under each node.

use nalgebra::{DMatrix, DVector};

use crate::error::{FilterError, Result};
use crate::gaussian::{log_sum_exp, Gaussian, GaussianMixture};
use crate::kalman::{solve_gains, GainPair, LinearMeasurementModel};
use crate::linalg::symmetrize;
use crate::scalar::Real;

/// Posterior mixture together with the per-node gains and posterior-error
/// traces that produced it. Node `i` of the posterior descends from node `i`
/// of the prior.
#[derive(Debug, Clone, PartialEq)]
pub struct GsfUpdateResult<T: Real> {
    pub posterior: GaussianMixture<T>,
    pub gains: Vec<GainPair<T>>,
    /// `tr((HᵢC−I)Σᵢ⁻(HᵢC−I)ᵀ + HᵢRHᵢᵀ)` per node.
    pub component_costs: Vec<T>,
}

impl<T: Real> GsfUpdateResult<T> {
    /// Weighted objective `Σ λᵢ⁺ cᵢ`.
    pub fn weighted_cost(&self) -> T {
        self.posterior
            .weights()
            .iter()
            .zip(&self.component_costs)
            .fold(T::zero(), |acc, (&w, &c)| acc + w * c)
    }
}

/// Posterior-error trace of one node under gain `h`.
pub fn component_cost<T: Real>(
    h: &DMatrix<T>,
    prior_cov: &DMatrix<T>,
    model: &LinearMeasurementModel<T>,
) -> T {
    joseph_covariance(h, prior_cov, model).trace()
}

/// `(HC−I) Σ (HC−I)ᵀ + H R Hᵀ`, positive semi-definite for any `H`.
pub fn joseph_covariance<T: Real>(
    h: &DMatrix<T>,
    prior_cov: &DMatrix<T>,
    model: &LinearMeasurementModel<T>,
) -> DMatrix<T> {
    let n = model.state_dim();
    let a = h * model.c() - DMatrix::<T>::identity(n, n);
    symmetrize(&(&a * prior_cov * a.transpose() + h * model.r() * h.transpose()))
}

/// One GSF measurement update.
pub fn gsf_update<T: Real>(
    prior: &GaussianMixture<T>,
    model: &LinearMeasurementModel<T>,
    y: &DVector<T>,
) -> Result<GsfUpdateResult<T>> {
    if prior.dim() != model.state_dim() {
        return Err(FilterError::dim("prior mixture", model.state_dim(), prior.dim()));
    }
    if y.len() != model.meas_dim() {
        return Err(FilterError::dim("measurement", model.meas_dim(), y.len()));
    }
    let m = T::from_usize(model.meas_dim()).unwrap();
    let half = T::lit(0.5);

    let mut nodes = Vec::with_capacity(prior.order());
    let mut gains = Vec::with_capacity(prior.order());
    let mut costs = Vec::with_capacity(prior.order());
    let mut log_weights = Vec::with_capacity(prior.order());

    for (i, (w, node)) in prior.components().enumerate() {
        let solved = solve_gains(node.cov(), model, Some(i))?;
        let h = &solved.gains.h;
        let innovation = y - model.c() * node.mean();

        let mean = node.mean() + h * &innovation;
        let cov = symmetrize(&(node.cov() - h * model.c() * node.cov()));
        nodes.push(Gaussian::with_floor(mean, cov, T::zero())?);

        // ln λᵢ⁻ + ln N(y; Cμᵢ, CΣᵢCᵀ + R)
        let l = solved.innovation_chol.l();
        let z = l
            .solve_lower_triangular(&innovation)
            .expect("innovation factor has a positive diagonal");
        let log_det = l.diagonal().iter().fold(T::zero(), |acc, &d| acc + d.ln());
        let loglik = -(half * (m * T::two_pi().ln() + z.norm_squared())) - log_det;
        log_weights.push(w.ln() + loglik);

        costs.push(component_cost(h, node.cov(), model));
        gains.push(solved.gains);
    }

    let weights = normalize_log_weights(&log_weights)?;
    Ok(GsfUpdateResult {
        posterior: GaussianMixture::new(weights, nodes)?,
        gains,
        component_costs: costs,
    })
}

/// Exponentiates and normalizes log weights with max subtraction. Entries of
/// `-∞` (zero prior weight) map to exactly zero.
pub(crate) fn normalize_log_weights<T: Real>(log_weights: &[T]) -> Result<Vec<T>> {
    let total = log_sum_exp(log_weights);
    if !total.is_finite() {
        return Err(FilterError::Underflow);
    }
    let mut weights: Vec<T> = log_weights.iter().map(|&lw| (lw - total).exp()).collect();
    let sum = weights.iter().fold(T::zero(), |a, &b| a + b);
    weights.iter_mut().for_each(|w| *w /= sum);
    Ok(weights)
}

/// Unweighted upper bound `Σᵢ cᵢ` minimized by the GSF gains.
pub fn gsf_bound_cost<T: Real>(result: &GsfUpdateResult<T>) -> T {
    result
        .component_costs
        .iter()
        .fold(T::zero(), |acc, &c| acc + c)
}
