//! Wasserstein-optimal linear measurement update.
//!
//! Minimizing `W₂²(p_{e⁺}, δ)` over linear posterior maps `x⁺ = G x⁻ + H y`
//! gives `H* = Σ⁻Cᵀ(CΣ⁻Cᵀ + R)⁻¹` and `G* = I − H*C`, i.e. the Kalman gain.
//! This module computes those gains, the resulting update, the trace cost
//! they minimize, and Monte Carlo diagnostics for the orthogonality
//! conditions that characterize the optimum.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{FilterError, Result};
use crate::gaussian::Gaussian;
use crate::linalg::{check_spd, check_symmetric, eigen_range, psd_factor, symmetrize};
use crate::scalar::Real;

/// Condition number above which the innovation covariance is rejected.
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

/// Linear sensor `y = C x + n`, `n ~ N(0, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMeasurementModel<T: Real> {
    c: DMatrix<T>,
    r: DMatrix<T>,
}

impl<T: Real> LinearMeasurementModel<T> {
    pub fn new(c: DMatrix<T>, r: DMatrix<T>) -> Result<Self> {
        if r.nrows() != c.nrows() {
            return Err(FilterError::dim("measurement noise", c.nrows(), r.nrows()));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(FilterError::validation("observation matrix has non-finite entries"));
        }
        check_spd(&r, T::eig_floor(), "measurement noise covariance")?;
        Ok(Self { c, r: symmetrize(&r) })
    }

    /// Observation matrix `C` (`m × n`).
    pub fn c(&self) -> &DMatrix<T> {
        &self.c
    }

    /// Noise covariance `R` (`m × m`).
    pub fn r(&self) -> &DMatrix<T> {
        &self.r
    }

    pub fn state_dim(&self) -> usize {
        self.c.ncols()
    }

    pub fn meas_dim(&self) -> usize {
        self.c.nrows()
    }
}

/// Gains of the posterior map `x⁺ = G x⁻ + H y`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainPair<T: Real> {
    pub g: DMatrix<T>,
    pub h: DMatrix<T>,
}

impl<T: Real> GainPair<T> {
    /// `G = I − H C`, the choice that removes the prior-state term.
    pub fn from_h(h: DMatrix<T>, model: &LinearMeasurementModel<T>) -> Self {
        let n = model.state_dim();
        let g = DMatrix::identity(n, n) - &h * model.c();
        Self { g, h }
    }
}

/// Linear time-invariant propagation `x_{k+1} = A x_k + w_k`, `w ~ N(0, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPropagationModel<T: Real> {
    a: DMatrix<T>,
    q: DMatrix<T>,
}

impl<T: Real> LinearPropagationModel<T> {
    /// `Q` may be positive semi-definite (zero process noise is allowed).
    pub fn new(a: DMatrix<T>, q: DMatrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(FilterError::dim("propagation matrix", a.nrows(), a.ncols()));
        }
        if q.nrows() != a.nrows() {
            return Err(FilterError::dim("process noise", a.nrows(), q.nrows()));
        }
        check_symmetric(&q, T::tight_tol(), "process noise covariance")?;
        let (lo, _) = eigen_range(&q);
        if lo < -T::tight_tol() * q.norm().max(T::one()) {
            return Err(FilterError::Degenerate {
                eigenvalue: lo.as_f64(),
                floor: 0.0,
            });
        }
        Ok(Self { a, q: symmetrize(&q) })
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn q(&self) -> &DMatrix<T> {
        &self.q
    }
}

fn check_prior_cov<T: Real>(cov: &DMatrix<T>, model: &LinearMeasurementModel<T>) -> Result<()> {
    if cov.nrows() != model.state_dim() || !cov.is_square() {
        return Err(FilterError::dim("prior error covariance", model.state_dim(), cov.nrows()));
    }
    check_symmetric(cov, T::tight_tol(), "prior error covariance")
}

/// Innovation covariance `C Σ Cᵀ + R`, symmetrized.
pub fn innovation_covariance<T: Real>(
    prior_err_cov: &DMatrix<T>,
    model: &LinearMeasurementModel<T>,
) -> DMatrix<T> {
    symmetrize(&(model.c() * prior_err_cov * model.c().transpose() + model.r()))
}

/// Gains plus the factored innovation covariance they were solved with.
pub(crate) struct SolvedGains<T: Real> {
    pub gains: GainPair<T>,
    pub innovation_chol: Cholesky<T, Dyn>,
}

pub(crate) fn solve_gains<T: Real>(
    prior_err_cov: &DMatrix<T>,
    model: &LinearMeasurementModel<T>,
    component: Option<usize>,
) -> Result<SolvedGains<T>> {
    check_prior_cov(prior_err_cov, model)?;
    let s = innovation_covariance(prior_err_cov, model);
    let (lo, hi) = eigen_range(&s);
    let condition = if lo > T::zero() { (hi / lo).as_f64() } else { f64::INFINITY };
    if !(condition <= MAX_INNOVATION_CONDITION) {
        return Err(FilterError::IllConditioned {
            condition,
            component,
        });
    }
    let chol = Cholesky::new(s).ok_or(FilterError::IllConditioned {
        condition,
        component,
    })?;
    // S Hᵀ = C Σ  (S and Σ symmetric)
    let c_sigma = model.c() * prior_err_cov;
    let h = chol.solve(&c_sigma).transpose();
    Ok(SolvedGains {
        gains: GainPair::from_h(h, model),
        innovation_chol: chol,
    })
}

/// `H* = Σ⁻Cᵀ(CΣ⁻Cᵀ+R)⁻¹`, `G* = I − H*C`.
pub fn kalman_gains<T: Real>(
    prior_err_cov: &DMatrix<T>,
    model: &LinearMeasurementModel<T>,
) -> Result<GainPair<T>> {
    solve_gains(prior_err_cov, model, None).map(|s| s.gains)
}

/// Posterior of the optimal linear update: mean `x⁻ + H*(y − C x⁻)` and
/// covariance `Σ⁻ − H* C Σ⁻`.
///
/// The posterior covariance is only required to be positive definite, not to
/// clear the default construction floor, so near-perfect sensors still
/// produce a valid result.
pub fn kalman_update<T: Real>(
    prior: &Gaussian<T>,
    prior_err_cov: &DMatrix<T>,
    model: &LinearMeasurementModel<T>,
    y: &DVector<T>,
) -> Result<Gaussian<T>> {
    if prior.dim() != model.state_dim() {
        return Err(FilterError::dim("prior state", model.state_dim(), prior.dim()));
    }
    if y.len() != model.meas_dim() {
        return Err(FilterError::dim("measurement", model.meas_dim(), y.len()));
    }
    let gains = kalman_gains(prior_err_cov, model)?;
    let innovation = y - model.c() * prior.mean();
    let mean = prior.mean() + &gains.h * innovation;
    let cov = symmetrize(&(prior_err_cov - &gains.h * model.c() * prior_err_cov));
    Gaussian::with_floor(mean, cov, T::zero())
}

/// Trace cost of an arbitrary linear map:
/// `tr{(G+HC−I) X (G+HC−I)ᵀ + (HC−I) Σ⁻ (HC−I)ᵀ + H R Hᵀ}` with
/// `X = E[x⁻x⁻ᵀ] = Σ_prior + μ μᵀ` and the cross term `E[x⁻e⁻ᵀ]` taken as
/// zero. The first term vanishes whenever `G = I − HC`.
pub fn wasserstein_posterior_cost<T: Real>(
    gains: &GainPair<T>,
    prior: &Gaussian<T>,
    prior_err_cov: &DMatrix<T>,
    model: &LinearMeasurementModel<T>,
) -> Result<T> {
    check_prior_cov(prior_err_cov, model)?;
    check_gain_shapes(gains, model)?;
    if prior.dim() != model.state_dim() {
        return Err(FilterError::dim("prior state", model.state_dim(), prior.dim()));
    }
    let n = model.state_dim();
    let eye = DMatrix::<T>::identity(n, n);
    let hc = &gains.h * model.c();
    let bias = &gains.g + &hc - &eye;
    let spread = &hc - &eye;
    let second_moment = prior.cov() + prior.mean() * prior.mean().transpose();
    let j = &bias * second_moment * bias.transpose()
        + &spread * prior_err_cov * spread.transpose()
        + &gains.h * model.r() * gains.h.transpose();
    Ok(j.trace())
}

fn check_gain_shapes<T: Real>(gains: &GainPair<T>, model: &LinearMeasurementModel<T>) -> Result<()> {
    let (n, m) = (model.state_dim(), model.meas_dim());
    if gains.g.shape() != (n, n) {
        return Err(FilterError::dim("gain G", n, gains.g.nrows()));
    }
    if gains.h.shape() != (n, m) {
        return Err(FilterError::dim("gain H columns", m, gains.h.ncols()));
    }
    Ok(())
}

/// Residual matrices of the stationarity conditions `∂J/∂G = 0`,
/// `∂J/∂H = 0`, with `E[x⁻e⁻ᵀ] = 0`:
/// `(G+HC−I) X` and `(HC−I) Σ⁻ Cᵀ + H R`.
pub fn first_order_residuals<T: Real>(
    gains: &GainPair<T>,
    prior: &Gaussian<T>,
    prior_err_cov: &DMatrix<T>,
    model: &LinearMeasurementModel<T>,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    check_gain_shapes(gains, model)?;
    let n = model.state_dim();
    let eye = DMatrix::<T>::identity(n, n);
    let hc = &gains.h * model.c();
    let second_moment = prior.cov() + prior.mean() * prior.mean().transpose();
    let foc_g = (&gains.g + &hc - &eye) * second_moment;
    let foc_h = (&hc - &eye) * prior_err_cov * model.c().transpose() + &gains.h * model.r();
    Ok((foc_g, foc_h))
}

/// Iterates the prior-covariance Riccati recursion to its fixed point.
pub fn steady_state_prior_cov<T: Real>(
    model: &LinearMeasurementModel<T>,
    prop: &LinearPropagationModel<T>,
    max_iters: usize,
) -> Result<DMatrix<T>> {
    let n = model.state_dim();
    let mut p = prop.q() + DMatrix::identity(n, n);
    for _ in 0..max_iters {
        let gains = kalman_gains(&p, model)?;
        let post = symmetrize(&(&p - &gains.h * model.c() * &p));
        let next = symmetrize(&(prop.a() * post * prop.a().transpose() + prop.q()));
        let change = (&next - &p).norm();
        p = next;
        if !p.iter().all(|v| v.is_finite()) {
            return Err(FilterError::Divergence { index: None });
        }
        if change <= T::tight_tol() * p.norm() {
            break;
        }
    }
    Ok(p)
}

/// Monte Carlo configuration for the orthogonality diagnostics.
#[derive(Debug, Clone)]
pub struct OrthogonalitySim<T: Real> {
    pub seed: u64,
    pub samples: usize,
    /// Number of propagate/update cycles run before the residuals are
    /// measured; `0` measures the first update.
    pub steps: usize,
    /// Covariance of the prior error `e⁻` at the first update.
    pub prior_err_cov: DMatrix<T>,
    /// Covariance of the prior estimate `x⁻` at the first update; drawn
    /// independently of `e⁻` so that `E[x⁻e⁻ᵀ] = 0`.
    pub estimate_cov: DMatrix<T>,
    /// When false, process and measurement noise draws are skipped.
    pub noise: bool,
}

/// Sample estimates of `‖E[e⁺x⁻ᵀ]‖_F` and `‖E[e⁺yᵀ]‖_F` with the matching
/// Monte Carlo scales `√(E‖e⁺‖² E‖x⁻‖²)` and `√(E‖e⁺‖² E‖y‖²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthogonalityResiduals<T: Real> {
    pub state: T,
    pub measurement: T,
    pub state_scale: T,
    pub measurement_scale: T,
    pub samples: usize,
}

impl<T: Real> OrthogonalityResiduals<T> {
    /// Both residuals at most `k / √N` times their scale.
    pub fn within_clt_bound(&self, k: T) -> bool {
        let root_n = T::from_usize(self.samples).unwrap().sqrt();
        self.state <= k / root_n * self.state_scale
            && self.measurement <= k / root_n * self.measurement_scale
    }
}

/// Simulates `samples` independent runs of the closed loop
/// `x_{k+1} = A x_k + w_k`, `x⁻_{k+1} = A x⁺_k`, `x⁺ = G x⁻ + H y`, and
/// returns the orthogonality residuals at the final update.
pub fn orthogonality_residuals<T: Real>(
    gains: &GainPair<T>,
    model: &LinearMeasurementModel<T>,
    prop: &LinearPropagationModel<T>,
    sim: &OrthogonalitySim<T>,
) -> Result<OrthogonalityResiduals<T>> {
    check_gain_shapes(gains, model)?;
    let (n, m) = (model.state_dim(), model.meas_dim());
    if sim.samples < 1000 {
        return Err(FilterError::validation("orthogonality check needs at least 1000 samples"));
    }
    if prop.a().nrows() != n {
        return Err(FilterError::dim("propagation model", n, prop.a().nrows()));
    }
    if sim.prior_err_cov.shape() != (n, n) || sim.estimate_cov.shape() != (n, n) {
        return Err(FilterError::dim("simulation covariances", n, sim.prior_err_cov.nrows()));
    }

    let err_factor = psd_factor(&sim.prior_err_cov);
    let est_factor = psd_factor(&sim.estimate_cov);
    let r_factor = psd_factor(model.r());
    let q_factor = psd_factor(prop.q());
    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    let mut normal = |k: usize| -> DVector<T> {
        DVector::from_fn(k, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::lit(z)
        })
    };

    let mut ex = DMatrix::<T>::zeros(n, n);
    let mut ey = DMatrix::<T>::zeros(n, m);
    let (mut err_sq, mut est_sq, mut meas_sq) = (T::zero(), T::zero(), T::zero());
    let mut step_mse = vec![T::zero(); sim.steps + 1];

    for _ in 0..sim.samples {
        let mut estimate = &est_factor * normal(n);
        let prior_err = &err_factor * normal(n);
        let mut truth = &estimate - prior_err;
        for (k, mse) in step_mse.iter_mut().enumerate() {
            let v = if sim.noise { &r_factor * normal(m) } else { DVector::zeros(m) };
            let y = model.c() * &truth + v;
            let posterior = &gains.g * &estimate + &gains.h * &y;
            let err = &posterior - &truth;
            let e2 = err.norm_squared();
            if !e2.is_finite() {
                return Err(FilterError::Divergence { index: None });
            }
            *mse += e2;
            if k == sim.steps {
                ex += &err * estimate.transpose();
                ey += &err * y.transpose();
                err_sq += e2;
                est_sq += estimate.norm_squared();
                meas_sq += y.norm_squared();
            } else {
                let w = if sim.noise { &q_factor * normal(n) } else { DVector::zeros(n) };
                truth = prop.a() * truth + w;
                estimate = prop.a() * posterior;
            }
        }
    }

    let first = step_mse[0];
    let last = step_mse[sim.steps];
    if !last.is_finite() || (first > T::zero() && last > first * T::lit(1e8)) {
        return Err(FilterError::Divergence { index: None });
    }

    let count = T::from_usize(sim.samples).unwrap();
    Ok(OrthogonalityResiduals {
        state: (ex / count).norm(),
        measurement: (ey / count).norm(),
        state_scale: (err_sq / count * est_sq / count).sqrt(),
        measurement_scale: (err_sq / count * meas_sq / count).sqrt(),
        samples: sim.samples,
    })
}
