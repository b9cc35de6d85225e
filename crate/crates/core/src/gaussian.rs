//! Gaussian, Dirac and Gaussian-mixture value types.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FilterError, Result};
use crate::linalg::{check_spd, cholesky, symmetrize};
use crate::scalar::Real;

/// Multivariate normal distribution with a symmetric positive-definite
/// covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian<T: Real> {
    mean: DVector<T>,
    cov: DMatrix<T>,
}

impl<T: Real> Gaussian<T> {
    /// Validates with the default eigenvalue floor (`1e-12` in `f64`).
    pub fn new(mean: DVector<T>, cov: DMatrix<T>) -> Result<Self> {
        Self::with_floor(mean, cov, T::eig_floor())
    }

    /// Validates symmetry and requires every eigenvalue of `cov` to be at
    /// least `floor` (and strictly positive). The stored covariance is the
    /// symmetrized input.
    pub fn with_floor(mean: DVector<T>, cov: DMatrix<T>, floor: T) -> Result<Self> {
        if cov.nrows() != mean.len() {
            return Err(FilterError::dim("gaussian covariance", mean.len(), cov.nrows()));
        }
        if mean.is_empty() {
            return Err(FilterError::validation("gaussian of dimension zero"));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(FilterError::validation("gaussian mean has non-finite entries"));
        }
        check_spd(&cov, floor, "gaussian covariance")?;
        Ok(Self {
            mean,
            cov: symmetrize(&cov),
        })
    }

    pub fn standard(n: usize) -> Self {
        Self {
            mean: DVector::zeros(n),
            cov: DMatrix::identity(n, n),
        }
    }

    pub fn mean(&self) -> &DVector<T> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<T> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Natural log of the density at `x`.
    pub fn logpdf(&self, x: &DVector<T>) -> Result<T> {
        gaussian_logpdf(self, x)
    }
}

/// Log density of `g` evaluated at `x`, via a Cholesky solve.
pub fn gaussian_logpdf<T: Real>(g: &Gaussian<T>, x: &DVector<T>) -> Result<T> {
    if x.len() != g.dim() {
        return Err(FilterError::dim("logpdf point", g.dim(), x.len()));
    }
    let chol = cholesky(&g.cov)?;
    Ok(logpdf_with_factor(&chol.l(), &g.mean, x))
}

/// Log density using a precomputed lower Cholesky factor of the covariance.
pub(crate) fn logpdf_with_factor<T: Real>(l: &DMatrix<T>, mean: &DVector<T>, x: &DVector<T>) -> T {
    let n = mean.len();
    let diff = x - mean;
    let z = l
        .solve_lower_triangular(&diff)
        .expect("cholesky factor has a positive diagonal");
    let log_det = (0..n).fold(T::zero(), |acc, i| acc + l[(i, i)].ln());
    let two_pi = T::two_pi();
    -(T::lit(0.5) * (T::from_usize(n).unwrap() * two_pi.ln() + z.norm_squared())) - log_det
}

/// Point mass at `location`; the ideal posterior-error reference.
#[derive(Debug, Clone, PartialEq)]
pub struct DiracPoint<T: Real> {
    location: DVector<T>,
}

impl<T: Real> DiracPoint<T> {
    pub fn new(location: DVector<T>) -> Result<Self> {
        if location.iter().any(|v| !v.is_finite()) {
            return Err(FilterError::validation("dirac location has non-finite entries"));
        }
        Ok(Self { location })
    }

    pub fn origin(n: usize) -> Self {
        Self {
            location: DVector::zeros(n),
        }
    }

    pub fn location(&self) -> &DVector<T> {
        &self.location
    }

    pub fn dim(&self) -> usize {
        self.location.len()
    }
}

/// Weighted list of Gaussian nodes. Component order is significant and is
/// preserved by every update in this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture<T: Real> {
    weights: Vec<T>,
    nodes: Vec<Gaussian<T>>,
}

impl<T: Real> GaussianMixture<T> {
    /// Weights must be non-negative and sum to one within `1e-12`.
    pub fn new(weights: Vec<T>, nodes: Vec<Gaussian<T>>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(FilterError::validation("mixture needs at least one component"));
        }
        if weights.len() != nodes.len() {
            return Err(FilterError::dim("mixture weights", nodes.len(), weights.len()));
        }
        let n = nodes[0].dim();
        if let Some(bad) = nodes.iter().find(|g| g.dim() != n) {
            return Err(FilterError::dim("mixture component", n, bad.dim()));
        }
        check_simplex(&weights, T::tight_tol())?;
        Ok(Self { weights, nodes })
    }

    pub fn single(g: Gaussian<T>) -> Self {
        Self {
            weights: vec![T::one()],
            nodes: vec![g],
        }
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn nodes(&self) -> &[Gaussian<T>] {
        &self.nodes
    }

    pub fn components(&self) -> impl Iterator<Item = (T, &Gaussian<T>)> {
        self.weights.iter().copied().zip(self.nodes.iter())
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].dim()
    }

    /// Same nodes, different weights.
    pub fn with_weights(&self, weights: Vec<T>) -> Result<Self> {
        Self::new(weights, self.nodes.clone())
    }

    pub fn mean_cov(&self) -> (DVector<T>, DMatrix<T>) {
        mixture_mean_cov(self)
    }

    /// Log density of the mixture at `x` (log-sum-exp over components).
    pub fn logpdf(&self, x: &DVector<T>) -> Result<T> {
        let logs = self
            .components()
            .map(|(w, g)| Ok(w.ln() + g.logpdf(x)?))
            .collect::<Result<Vec<T>>>()?;
        Ok(log_sum_exp(&logs))
    }
}

/// `ln Σ exp(vᵢ)` with max subtraction. Returns `-∞` when every entry is `-∞`.
pub fn log_sum_exp<T: Real>(values: &[T]) -> T {
    let max = values
        .iter()
        .copied()
        .fold(T::min_value().unwrap(), T::max);
    if !max.is_finite() {
        return max;
    }
    max + values
        .iter()
        .fold(T::zero(), |acc, &v| acc + (v - max).exp())
        .ln()
}

/// Rejects weight vectors off the probability simplex.
pub fn check_simplex<T: Real>(weights: &[T], tol: T) -> Result<()> {
    if weights.is_empty() {
        return Err(FilterError::validation("empty weight vector"));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < T::zero()) {
        return Err(FilterError::validation(format!(
            "weight {} is negative or non-finite",
            w.as_f64()
        )));
    }
    let sum = weights.iter().fold(T::zero(), |a, &b| a + b);
    if (sum - T::one()).abs() > tol {
        return Err(FilterError::validation(format!(
            "weights sum to {} instead of 1",
            sum.as_f64()
        )));
    }
    Ok(())
}

/// Moment-matched mean `Σλᵢμᵢ` and covariance `Σλᵢ(Σᵢ + (μᵢ−μ̄)(μᵢ−μ̄)ᵀ)`.
pub fn mixture_mean_cov<T: Real>(mix: &GaussianMixture<T>) -> (DVector<T>, DMatrix<T>) {
    let n = mix.dim();
    let mean = mix
        .components()
        .fold(DVector::zeros(n), |acc, (w, g)| acc + g.mean() * w);
    let cov = mix.components().fold(DMatrix::zeros(n, n), |acc, (w, g)| {
        let d = g.mean() - &mean;
        acc + (g.cov() + &d * d.transpose()) * w
    });
    (mean, symmetrize(&cov))
}

/// JSON interchange form: `{"weights":[...], "means":[[...]], "covs":[[[...]]]}`
/// with row-major matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureJson {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covs: Vec<Vec<Vec<f64>>>,
}

pub(crate) fn matrix_to_rows<T: Real>(m: &DMatrix<T>) -> Vec<Vec<f64>> {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.as_f64()).collect())
        .collect()
}

pub(crate) fn rows_to_matrix<T: Real>(rows: &[Vec<f64>], what: &'static str) -> Result<DMatrix<T>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(r) = rows.iter().find(|r| r.len() != ncols) {
        return Err(FilterError::dim(what, ncols, r.len()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| T::lit(rows[i][j])))
}

impl<T: Real> From<&GaussianMixture<T>> for MixtureJson {
    fn from(mix: &GaussianMixture<T>) -> Self {
        MixtureJson {
            weights: mix.weights.iter().map(|w| w.as_f64()).collect(),
            means: mix
                .nodes
                .iter()
                .map(|g| g.mean().iter().map(|v| v.as_f64()).collect())
                .collect(),
            covs: mix.nodes.iter().map(|g| matrix_to_rows(g.cov())).collect(),
        }
    }
}

impl<T: Real> TryFrom<&MixtureJson> for GaussianMixture<T> {
    type Error = FilterError;

    fn try_from(j: &MixtureJson) -> Result<Self> {
        if j.means.len() != j.covs.len() {
            return Err(FilterError::dim("mixture json covs", j.means.len(), j.covs.len()));
        }
        let nodes = j
            .means
            .iter()
            .zip(&j.covs)
            .map(|(m, c)| {
                let mean = DVector::from_iterator(m.len(), m.iter().map(|&v| T::lit(v)));
                Gaussian::new(mean, rows_to_matrix(c, "mixture json cov")?)
            })
            .collect::<Result<Vec<_>>>()?;
        GaussianMixture::new(j.weights.iter().map(|&w| T::lit(w)).collect(), nodes)
    }
}

impl<T: Real> GaussianMixture<T> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&MixtureJson::from(self)).expect("mixture json")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: MixtureJson =
            serde_json::from_str(s).map_err(|e| FilterError::Serialization(e.to_string()))?;
        Self::try_from(&j)
    }
}

impl<T: Real> Gaussian<T> {
    /// Serialized as a one-component mixture with weight `1`.
    pub fn to_json(&self) -> String {
        GaussianMixture::single(self.clone()).to_json()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mix = GaussianMixture::<T>::from_json(s)?;
        if mix.order() != 1 {
            return Err(FilterError::validation(format!(
                "expected a single gaussian, found {} components",
                mix.order()
            )));
        }
        Ok(mix.nodes.into_iter().next().unwrap())
    }
}
