//! Nonlinear Gaussian sum filter update.
//!
//! Minimizes the weighted posterior-error objective
//! `Ĵ(λ, H) = Σᵢ λᵢ tr{(HᵢC−I)Σᵢ⁻(HᵢC−I)ᵀ + HᵢRHᵢᵀ}` over the probability
//! simplex and the node gains, starting from the GSF solution. `Gᵢ` is
//! eliminated through `Gᵢ = I − HᵢC`.
//!
//! The optimizer is projected gradient descent with Armijo backtracking.
//! Because `Ĵ` is linear in `λ`, unconstrained progress pushes the weights
//! towards a vertex of the simplex; the cost trajectory and final weights are
//! returned so that this behaviour is visible to callers.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FilterError, Result};
use crate::gaussian::{check_simplex, Gaussian, GaussianMixture};
use crate::gsf::{component_cost, gsf_update, joseph_covariance, GsfUpdateResult};
use crate::kalman::{innovation_covariance, solve_gains, GainPair, LinearMeasurementModel};
use crate::linalg::{eigen_range, symmetrize};
use crate::scalar::Real;
use crate::simplex::project_to_simplex;

/// Decision problem for one nGSF update.
#[derive(Debug, Clone)]
pub struct NgsfProblem<T: Real> {
    pub prior: GaussianMixture<T>,
    pub model: LinearMeasurementModel<T>,
    pub y: DVector<T>,
    pub warm_weights: Vec<T>,
    pub warm_gains: Vec<DMatrix<T>>,
}

impl<T: Real> NgsfProblem<T> {
    pub fn new(
        prior: GaussianMixture<T>,
        model: LinearMeasurementModel<T>,
        y: DVector<T>,
        warm_weights: Vec<T>,
        warm_gains: Vec<DMatrix<T>>,
    ) -> Result<Self> {
        if y.len() != model.meas_dim() {
            return Err(FilterError::dim("measurement", model.meas_dim(), y.len()));
        }
        if prior.dim() != model.state_dim() {
            return Err(FilterError::dim("prior mixture", model.state_dim(), prior.dim()));
        }
        check_inputs(&warm_weights, &warm_gains, &prior, &model)?;
        Ok(Self {
            prior,
            model,
            y,
            warm_weights,
            warm_gains,
        })
    }

    /// Warm start from an existing GSF update of the same prior.
    pub fn from_gsf(
        prior: GaussianMixture<T>,
        model: LinearMeasurementModel<T>,
        y: DVector<T>,
        gsf: &GsfUpdateResult<T>,
    ) -> Result<Self> {
        let weights = gsf.posterior.weights().to_vec();
        let gains = gsf.gains.iter().map(|g| g.h.clone()).collect();
        Self::new(prior, model, y, weights, gains)
    }

    /// Runs the GSF update and uses it as the warm start.
    pub fn warm_started(
        prior: GaussianMixture<T>,
        model: LinearMeasurementModel<T>,
        y: DVector<T>,
    ) -> Result<(Self, GsfUpdateResult<T>)> {
        let gsf = gsf_update(&prior, &model, &y)?;
        let problem = Self::from_gsf(prior, model, y, &gsf)?;
        Ok((problem, gsf))
    }

    pub fn warm_start_cost(&self) -> Result<T> {
        ngsf_cost(&self.warm_weights, &self.warm_gains, &self.prior, &self.model)
    }
}

/// Line-search starting rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepPolicy {
    /// Start each search at twice the previously accepted step (the first
    /// at `1/L`), capped at `10¹²/L`.
    #[default]
    Expanding,
    /// Start every search at `1/L`.
    Reset,
}

impl fmt::Display for StepPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepPolicy::Expanding => "expanding",
            StepPolicy::Reset => "reset",
        })
    }
}

impl FromStr for StepPolicy {
    type Err = FilterError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expanding" => Ok(StepPolicy::Expanding),
            "reset" => Ok(StepPolicy::Reset),
            other => Err(FilterError::validation(format!("unknown step policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NgsfOptions<T: Real> {
    pub max_iters: usize,
    /// Relative cost decrease below which the solver stops.
    pub tol: T,
    pub step: StepPolicy,
    /// Armijo sufficient-decrease constant.
    pub armijo: T,
}

impl<T: Real> Default for NgsfOptions<T> {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: T::lit(1e-10),
            step: StepPolicy::Expanding,
            armijo: T::lit(1e-4),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NgsfSolution<T: Real> {
    pub weights: Vec<T>,
    pub gains: Vec<DMatrix<T>>,
    /// Objective at the warm start followed by one entry per accepted step.
    pub cost_trajectory: Vec<T>,
    pub converged: bool,
    pub iterations: usize,
}

impl<T: Real> NgsfSolution<T> {
    pub fn initial_cost(&self) -> T {
        self.cost_trajectory[0]
    }

    pub fn final_cost(&self) -> T {
        *self.cost_trajectory.last().unwrap()
    }
}

fn check_inputs<T: Real>(
    weights: &[T],
    gains: &[DMatrix<T>],
    prior: &GaussianMixture<T>,
    model: &LinearMeasurementModel<T>,
) -> Result<()> {
    let m = prior.order();
    if weights.len() != m {
        return Err(FilterError::dim("ngsf weights", m, weights.len()));
    }
    if gains.len() != m {
        return Err(FilterError::dim("ngsf gains", m, gains.len()));
    }
    if prior.dim() != model.state_dim() {
        return Err(FilterError::dim("prior mixture", model.state_dim(), prior.dim()));
    }
    let shape = (model.state_dim(), model.meas_dim());
    if let Some(h) = gains.iter().find(|h| h.shape() != shape) {
        return Err(FilterError::dim("ngsf gain rows", shape.0, h.nrows()));
    }
    check_simplex(weights, T::loose_tol())
}

/// `Σᵢ λᵢ tr{(HᵢC−I)Σᵢ⁻(HᵢC−I)ᵀ + HᵢRHᵢᵀ}`.
pub fn ngsf_cost<T: Real>(
    weights: &[T],
    gains: &[DMatrix<T>],
    prior: &GaussianMixture<T>,
    model: &LinearMeasurementModel<T>,
) -> Result<T> {
    check_inputs(weights, gains, prior, model)?;
    Ok(cost_unchecked(weights, gains, prior, model))
}

fn cost_unchecked<T: Real>(
    weights: &[T],
    gains: &[DMatrix<T>],
    prior: &GaussianMixture<T>,
    model: &LinearMeasurementModel<T>,
) -> T {
    weights
        .iter()
        .zip(gains)
        .zip(prior.nodes())
        .fold(T::zero(), |acc, ((&w, h), node)| {
            acc + w * component_cost(h, node.cov(), model)
        })
}

/// `∂Ĵ/∂λᵢ = cᵢ(Hᵢ)` and `∂Ĵ/∂Hᵢ = 2λᵢ{(HᵢC−I)Σᵢ⁻Cᵀ + HᵢR}`.
pub fn ngsf_gradients<T: Real>(
    weights: &[T],
    gains: &[DMatrix<T>],
    prior: &GaussianMixture<T>,
    model: &LinearMeasurementModel<T>,
) -> Result<(Vec<T>, Vec<DMatrix<T>>)> {
    check_inputs(weights, gains, prior, model)?;
    Ok(gradients_unchecked(weights, gains, prior, model))
}

fn gradients_unchecked<T: Real>(
    weights: &[T],
    gains: &[DMatrix<T>],
    prior: &GaussianMixture<T>,
    model: &LinearMeasurementModel<T>,
) -> (Vec<T>, Vec<DMatrix<T>>) {
    let n = model.state_dim();
    let eye = DMatrix::<T>::identity(n, n);
    let two = T::lit(2.0);
    let mut grad_w = Vec::with_capacity(weights.len());
    let mut grad_h = Vec::with_capacity(weights.len());
    for ((&w, h), node) in weights.iter().zip(gains).zip(prior.nodes()) {
        grad_w.push(component_cost(h, node.cov(), model));
        let a = h * model.c() - &eye;
        let g = (a * node.cov() * model.c().transpose() + h * model.r()) * (two * w);
        grad_h.push(g);
    }
    (grad_w, grad_h)
}

/// Curvature bound `L = 2 maxᵢ λ_max(CΣᵢCᵀ + R)` of `Ĵ` in the gains.
fn lipschitz<T: Real>(prior: &GaussianMixture<T>, model: &LinearMeasurementModel<T>) -> T {
    prior
        .nodes()
        .iter()
        .map(|g| eigen_range(&innovation_covariance(g.cov(), model)).1)
        .fold(T::zero(), T::max)
        * T::lit(2.0)
}

struct Iterate<T: Real> {
    weights: Vec<T>,
    gains: Vec<DMatrix<T>>,
}

fn projected_step<T: Real>(
    x: &Iterate<T>,
    grad_w: &[T],
    grad_h: &[DMatrix<T>],
    alpha: T,
) -> Iterate<T> {
    let shifted: Vec<T> = x
        .weights
        .iter()
        .zip(grad_w)
        .map(|(&w, &g)| w - alpha * g)
        .collect();
    Iterate {
        weights: project_to_simplex(&shifted),
        gains: x
            .gains
            .iter()
            .zip(grad_h)
            .map(|(h, g)| h - g * alpha)
            .collect(),
    }
}

/// `⟨∇Ĵ, x_new − x⟩`.
fn directional<T: Real>(x: &Iterate<T>, next: &Iterate<T>, grad_w: &[T], grad_h: &[DMatrix<T>]) -> T {
    let dw = x
        .weights
        .iter()
        .zip(&next.weights)
        .zip(grad_w)
        .fold(T::zero(), |acc, ((&a, &b), &g)| acc + g * (b - a));
    let dh = x
        .gains
        .iter()
        .zip(&next.gains)
        .zip(grad_h)
        .fold(T::zero(), |acc, ((a, b), g)| acc + g.dot(&(b - a)));
    dw + dh
}

fn max_displacement<T: Real>(x: &Iterate<T>, next: &Iterate<T>) -> T {
    let dw = x
        .weights
        .iter()
        .zip(&next.weights)
        .fold(T::zero(), |acc, (&a, &b)| acc.max((b - a).abs()));
    x.gains
        .iter()
        .zip(&next.gains)
        .fold(dw, |acc, (a, b)| acc.max((b - a).amax()))
}

/// Projected-gradient minimization of `Ĵ` from the warm start.
///
/// Each iteration first checks the gradient mapping at step `1/L`; if it is
/// below `tol · max(1, Ĵ)` the current iterate is returned as converged.
/// Otherwise an Armijo search (halving) picks the step, and the solver stops
/// once the accepted relative decrease falls below `tol` at a step that
/// could not be enlarged further.
pub fn ngsf_solve<T: Real>(problem: &NgsfProblem<T>, opts: &NgsfOptions<T>) -> Result<NgsfSolution<T>> {
    let NgsfProblem { prior, model, .. } = problem;
    check_inputs(&problem.warm_weights, &problem.warm_gains, prior, model)?;

    let mut x = Iterate {
        weights: problem.warm_weights.clone(),
        gains: problem.warm_gains.clone(),
    };
    let mut f = cost_unchecked(&x.weights, &x.gains, prior, model);
    let mut trajectory = vec![f];

    let lip = lipschitz(prior, model).max(T::default_epsilon());
    let base_step = T::one() / lip;
    let max_step = base_step * T::lit(1e12);
    let min_step = base_step * T::lit(1e-20);
    let mut last_step = base_step * T::lit(0.5);
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=opts.max_iters {
        iterations = k;
        let (grad_w, grad_h) = gradients_unchecked(&x.weights, &x.gains, prior, model);

        let probe = projected_step(&x, &grad_w, &grad_h, base_step);
        if max_displacement(&x, &probe) * lip <= opts.tol * f.abs().max(T::one()) {
            converged = true;
            break;
        }

        let mut alpha = match opts.step {
            StepPolicy::Expanding => (last_step * T::lit(2.0)).min(max_step),
            StepPolicy::Reset => base_step,
        };
        let mut backtracked = false;
        let accepted = loop {
            let next = projected_step(&x, &grad_w, &grad_h, alpha);
            let f_next = cost_unchecked(&next.weights, &next.gains, prior, model);
            let slope = directional(&x, &next, &grad_w, &grad_h);
            if f_next <= f + opts.armijo * slope && f_next <= f {
                break Some((next, f_next));
            }
            alpha *= T::lit(0.5);
            backtracked = true;
            if alpha < min_step {
                break None;
            }
        };
        let Some((next, f_next)) = accepted else {
            // No representable descent step remains.
            converged = true;
            break;
        };

        let decrease = f - f_next;
        let previous = f;
        x = next;
        f = f_next;
        last_step = alpha;
        trajectory.push(f);

        let saturated = match opts.step {
            StepPolicy::Expanding => backtracked || alpha >= max_step,
            StepPolicy::Reset => true,
        };
        if saturated && decrease <= opts.tol * previous.abs().max(T::default_epsilon()) {
            converged = true;
            break;
        }
    }

    Ok(NgsfSolution {
        weights: x.weights,
        gains: x.gains,
        cost_trajectory: trajectory,
        converged,
        iterations,
    })
}

/// Violation of the simplex optimality conditions on the weights at
/// `solution`: equal weight-gradients on the support and no smaller gradient
/// off it, relative to `max(1, maxᵢ |∂Ĵ/∂λᵢ|)`.
pub fn kkt_residual<T: Real>(problem: &NgsfProblem<T>, solution: &NgsfSolution<T>) -> Result<T> {
    let (grad_w, _) = ngsf_gradients(&solution.weights, &solution.gains, &problem.prior, &problem.model)?;
    let common = grad_w
        .iter()
        .zip(&solution.weights)
        .filter(|(_, &w)| w > T::zero())
        .map(|(&g, _)| g)
        .fold(T::max_value().unwrap(), T::min);
    let mut residual = T::zero();
    for (&g, &w) in grad_w.iter().zip(&solution.weights) {
        if w > T::zero() {
            residual = residual.max((g - common).abs());
        } else {
            residual = residual.max(common - g);
        }
    }
    let scale = grad_w.iter().fold(T::one(), |acc, g| acc.max(g.abs()));
    Ok(residual / scale)
}

/// Largest entry of `∂Ĵ/∂Hᵢ` over all nodes at `solution`.
pub fn gain_gradient_residual<T: Real>(problem: &NgsfProblem<T>, solution: &NgsfSolution<T>) -> Result<T> {
    let (_, grad_h) = ngsf_gradients(&solution.weights, &solution.gains, &problem.prior, &problem.model)?;
    Ok(grad_h.iter().fold(T::zero(), |acc, g| acc.max(g.amax())))
}

/// Applies optimized weights and gains to the prior. Covariances use the
/// quadratic form `(HC−I)Σ(HC−I)ᵀ + HRHᵀ`, which stays positive
/// semi-definite for any gain; a gain identical to the node's Kalman gain
/// uses the equivalent short form `Σ − HCΣ` instead.
pub fn ngsf_posterior<T: Real>(
    problem: &NgsfProblem<T>,
    solution: &NgsfSolution<T>,
) -> Result<GsfUpdateResult<T>> {
    let NgsfProblem { prior, model, y, .. } = problem;
    check_inputs(&solution.weights, &solution.gains, prior, model)?;
    let mut nodes = Vec::with_capacity(prior.order());
    let mut gains = Vec::with_capacity(prior.order());
    let mut costs = Vec::with_capacity(prior.order());
    for (i, (node, h)) in prior.nodes().iter().zip(&solution.gains).enumerate() {
        let mean = node.mean() + h * (y - model.c() * node.mean());
        let kalman = solve_gains(node.cov(), model, Some(i))?.gains.h;
        let cov = if &kalman == h {
            symmetrize(&(node.cov() - h * model.c() * node.cov()))
        } else {
            joseph_covariance(h, node.cov(), model)
        };
        nodes.push(Gaussian::with_floor(mean, cov, T::zero())?);
        costs.push(component_cost(h, node.cov(), model));
        gains.push(GainPair::from_h(h.clone(), model));
    }
    Ok(GsfUpdateResult {
        posterior: GaussianMixture::new(solution.weights.clone(), nodes)?,
        gains,
        component_costs: costs,
    })
}

/// Solve followed by [`ngsf_posterior`].
pub fn ngsf_update<T: Real>(problem: &NgsfProblem<T>, opts: &NgsfOptions<T>) -> Result<GsfUpdateResult<T>> {
    let solution = ngsf_solve(problem, opts)?;
    ngsf_posterior(problem, &solution)
}
