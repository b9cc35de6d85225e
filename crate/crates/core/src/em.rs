//! Expectation–maximization fit of a Gaussian mixture to a particle cloud.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::EnsembleCloud;
use crate::error::{FilterError, Result};
use crate::gaussian::{Gaussian, GaussianMixture};
use crate::linalg::{clamp_eigenvalues, symmetrize};
use crate::scalar::Real;

/// Reseeds tolerated in one EM run before the fit is abandoned.
pub const MAX_RESEEDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmFitConfig {
    pub n_components: usize,
    pub max_iters: usize,
    /// Relative log-likelihood change treated as convergence.
    pub tol: f64,
    /// Every fitted covariance satisfies `Σ ⪰ covariance_floor · I`.
    pub covariance_floor: f64,
    /// Mixed into the harness seed derivation for the initialization stream.
    pub init_seed: u64,
    pub restarts: usize,
}

impl Default for EmFitConfig {
    fn default() -> Self {
        Self {
            n_components: 10,
            max_iters: 200,
            tol: 1e-8,
            covariance_floor: 1e-6,
            init_seed: 0,
            restarts: 3,
        }
    }
}

impl EmFitConfig {
    pub fn validate(&self, points: usize) -> Result<()> {
        if self.n_components == 0 {
            return Err(FilterError::validation("EM needs at least one component"));
        }
        if self.restarts == 0 {
            return Err(FilterError::validation("EM needs at least one restart"));
        }
        if !(self.covariance_floor > 0.0) {
            return Err(FilterError::validation("covariance floor must be positive"));
        }
        if points < 10 * self.n_components {
            return Err(FilterError::validation(format!(
                "{points} points cannot support {} components (need 10 per component)",
                self.n_components
            )));
        }
        Ok(())
    }
}

/// Outcome of [`fit_gmm_em`].
#[derive(Debug, Clone)]
pub struct EmFit<T: Real> {
    pub mixture: GaussianMixture<T>,
    /// Total log-likelihood of the cloud under `mixture`.
    pub log_likelihood: T,
    /// Per-iteration log-likelihood of the winning run since its last reseed.
    pub history: Vec<T>,
    /// Collapsed components reseeded during the winning run.
    pub reseeds: usize,
    /// Index of the winning restart.
    pub restart: usize,
    pub iterations: usize,
}

struct Component<T: Real> {
    weight: T,
    mean: Vec<T>,
    cov: DMatrix<T>,
    /// Row-major lower Cholesky factor of `cov`.
    chol: Vec<T>,
    log_norm: T,
}

impl<T: Real> Component<T> {
    fn new(weight: T, mean: Vec<T>, cov: DMatrix<T>) -> Result<Self> {
        let n = mean.len();
        let factor = nalgebra::Cholesky::new(cov.clone())
            .ok_or_else(|| FilterError::Fit("component covariance lost definiteness".into()))?
            .l();
        let mut chol = vec![T::zero(); n * n];
        let mut log_det = T::zero();
        for i in 0..n {
            for j in 0..=i {
                chol[i * n + j] = factor[(i, j)];
            }
            log_det += factor[(i, i)].ln();
        }
        let log_norm = -(T::lit(0.5) * T::from_usize(n).unwrap() * T::two_pi().ln()) - log_det;
        Ok(Self {
            weight,
            mean,
            cov,
            chol,
            log_norm,
        })
    }

    /// `ln N(x; μ, Σ)` by forward substitution into `scratch`.
    fn logpdf(&self, x: &[T], scratch: &mut [T]) -> T {
        let n = self.mean.len();
        let mut quad = T::zero();
        for i in 0..n {
            let mut acc = x[i] - self.mean[i];
            for j in 0..i {
                acc -= self.chol[i * n + j] * scratch[j];
            }
            let z = acc / self.chol[i * n + i];
            scratch[i] = z;
            quad += z * z;
        }
        self.log_norm - T::lit(0.5) * quad
    }
}

struct Data<T: Real> {
    points: Vec<T>,
    n: usize,
    len: usize,
}

impl<T: Real> Data<T> {
    fn point(&self, i: usize) -> &[T] {
        &self.points[i * self.n..(i + 1) * self.n]
    }
}

/// Fits `config.n_components` Gaussians to `cloud` with k-means++ seeding and
/// returns the best of `config.restarts` runs by final log-likelihood. A run
/// that exceeds [`MAX_RESEEDS`] is discarded; the fit fails only when every
/// run does.
pub fn fit_gmm_em<T: Real, R: Rng + ?Sized>(
    cloud: &EnsembleCloud<T>,
    config: &EmFitConfig,
    rng: &mut R,
) -> Result<EmFit<T>> {
    config.validate(cloud.len())?;
    let n = cloud.dim();
    let data = Data {
        points: cloud.particles().transpose().as_slice().to_vec(),
        n,
        len: cloud.len(),
    };
    let floor = T::lit(config.covariance_floor);
    let global_cov = clamp_eigenvalues(&cloud.sample_cov(), floor);

    let mut best: Option<EmFit<T>> = None;
    let mut last_err = None;
    for restart in 0..config.restarts {
        let fit = match run_em(&data, config, &global_cov, floor, restart, rng) {
            Ok(fit) => fit,
            Err(e @ FilterError::Fit(_)) => {
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        if best
            .as_ref()
            .is_none_or(|b| fit.log_likelihood > b.log_likelihood)
        {
            best = Some(fit);
        }
    }
    best.ok_or_else(|| last_err.expect("a failed restart recorded its error"))
}

fn kmeans_pp<T: Real, R: Rng + ?Sized>(data: &Data<T>, k: usize, rng: &mut R) -> Vec<Vec<T>> {
    let mut centers: Vec<Vec<T>> = vec![data.point(rng.random_range(0..data.len)).to_vec()];
    let mut dist: Vec<f64> = vec![f64::INFINITY; data.len];
    while centers.len() < k {
        let last = centers.last().unwrap();
        for (i, d) in dist.iter_mut().enumerate() {
            let gap = data
                .point(i)
                .iter()
                .zip(last)
                .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
            *d = d.min(gap.as_f64());
        }
        let idx = match WeightedIndex::new(&dist) {
            Ok(w) => w.sample(rng),
            Err(_) => rng.random_range(0..data.len),
        };
        centers.push(data.point(idx).to_vec());
    }
    centers
}

fn run_em<T: Real, R: Rng + ?Sized>(
    data: &Data<T>,
    config: &EmFitConfig,
    global_cov: &DMatrix<T>,
    floor: T,
    restart: usize,
    rng: &mut R,
) -> Result<EmFit<T>> {
    let k = config.n_components;
    let n = data.n;
    let inv_k = T::one() / T::from_usize(k).unwrap();
    let mut comps = kmeans_pp(data, k, rng)
        .into_iter()
        .map(|c| Component::new(inv_k, c, global_cov.clone()))
        .collect::<Result<Vec<_>>>()?;

    let mut resp = vec![T::zero(); data.len * k];
    let mut point_ll = vec![T::zero(); data.len];
    let mut logs = vec![T::zero(); k];
    let mut scratch = vec![T::zero(); n];
    let mut history: Vec<T> = Vec::new();
    let mut reseeds = 0;
    let mut iterations = 0;
    let tol = T::lit(config.tol);

    loop {
        // E-step
        let mut total = T::zero();
        for i in 0..data.len {
            let x = data.point(i);
            let mut max = T::min_value().unwrap();
            for (c, l) in comps.iter().zip(logs.iter_mut()) {
                *l = c.weight.ln() + c.logpdf(x, &mut scratch);
                max = max.max(*l);
            }
            let sum = logs.iter().fold(T::zero(), |acc, &l| acc + (l - max).exp());
            let ll = max + sum.ln();
            for (j, &l) in logs.iter().enumerate() {
                resp[i * k + j] = (l - ll).exp();
            }
            point_ll[i] = ll;
            total += ll;
        }
        if !total.is_finite() {
            return Err(FilterError::Fit("log-likelihood is not finite".into()));
        }
        let converged = history
            .last()
            .is_some_and(|&prev| (total - prev).abs() <= tol * prev.abs());
        history.push(total);
        if converged || iterations >= config.max_iters {
            break;
        }
        iterations += 1;

        // M-step
        let mut next = Vec::with_capacity(k);
        let mut collapsed = Vec::new();
        for j in 0..k {
            let mass = (0..data.len).fold(T::zero(), |acc, i| acc + resp[i * k + j]);
            if mass < T::from_usize(n + 1).unwrap() {
                collapsed.push(j);
                next.push(None);
                continue;
            }
            let mut mean = vec![T::zero(); n];
            for i in 0..data.len {
                let r = resp[i * k + j];
                for (m, &x) in mean.iter_mut().zip(data.point(i)) {
                    *m += r * x;
                }
            }
            mean.iter_mut().for_each(|m| *m /= mass);
            let mut cov = DMatrix::<T>::zeros(n, n);
            for i in 0..data.len {
                let r = resp[i * k + j];
                let x = data.point(i);
                for a in 0..n {
                    let da = x[a] - mean[a];
                    for b in 0..=a {
                        cov[(a, b)] += r * da * (x[b] - mean[b]);
                    }
                }
            }
            for a in 0..n {
                for b in 0..a {
                    cov[(b, a)] = cov[(a, b)];
                }
            }
            cov /= mass;
            let cov = clamp_eigenvalues(&symmetrize(&cov), floor);
            next.push(Some((mass / T::from_usize(data.len).unwrap(), mean, cov)));
        }

        if !collapsed.is_empty() {
            reseeds += collapsed.len();
            if reseeds > MAX_RESEEDS {
                return Err(FilterError::Fit(format!(
                    "components kept collapsing after {MAX_RESEEDS} reseeds"
                )));
            }
            // Reseed at the worst-explained points, one per collapsed node.
            let mut order: Vec<usize> = (0..data.len).collect();
            order.sort_by(|&a, &b| point_ll[a].partial_cmp(&point_ll[b]).unwrap());
            for (slot, &j) in collapsed.iter().enumerate() {
                next[j] = Some((inv_k, data.point(order[slot]).to_vec(), global_cov.clone()));
            }
            history.clear();
        }

        let total_weight = next
            .iter()
            .flatten()
            .fold(T::zero(), |acc, (w, _, _)| acc + *w);
        comps = next
            .into_iter()
            .map(|slot| {
                let (w, mean, cov) = slot.expect("every slot filled");
                Component::new(w / total_weight, mean, cov)
            })
            .collect::<Result<Vec<_>>>()?;
    }

    let nodes = comps
        .iter()
        .map(|c| Gaussian::new(DVector::from_column_slice(&c.mean), c.cov.clone()))
        .collect::<Result<Vec<_>>>()?;
    let weight_sum = comps.iter().fold(T::zero(), |acc, c| acc + c.weight);
    let weights = comps.iter().map(|c| c.weight / weight_sum).collect();
    Ok(EmFit {
        mixture: GaussianMixture::new(weights, nodes)?,
        log_likelihood: *history.last().unwrap(),
        history,
        reseeds,
        restart,
        iterations,
    })
}
