//! Particle ensembles: sampling from Gaussians and mixtures, sample moments
//! and CSV snapshots.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{FilterError, Result};
use crate::gaussian::{Gaussian, GaussianMixture};
use crate::linalg::{psd_factor, symmetrize};
use crate::scalar::Real;

/// `N × n` matrix of particles, one particle per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleCloud<T: Real> {
    particles: DMatrix<T>,
}

/// Uniformly weighted finite-support distribution used by the empirical
/// transport oracle.
pub type EmpiricalCloud<T> = EnsembleCloud<T>;

impl<T: Real> EnsembleCloud<T> {
    pub fn new(particles: DMatrix<T>) -> Result<Self> {
        if particles.nrows() == 0 || particles.ncols() == 0 {
            return Err(FilterError::validation("cloud must hold at least one particle"));
        }
        if particles.iter().any(|v| !v.is_finite()) {
            return Err(FilterError::validation("cloud has non-finite entries"));
        }
        Ok(Self { particles })
    }

    pub fn from_rows(rows: &[DVector<T>]) -> Result<Self> {
        let n = rows.first().map_or(0, |r| r.len());
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(FilterError::dim("cloud row", n, r.len()));
        }
        Self::new(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
    }

    pub(crate) fn from_matrix_unchecked(particles: DMatrix<T>) -> Self {
        Self { particles }
    }

    pub fn particles(&self) -> &DMatrix<T> {
        &self.particles
    }

    pub fn into_particles(self) -> DMatrix<T> {
        self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.particles.ncols()
    }

    pub fn particle(&self, i: usize) -> DVector<T> {
        self.particles.row(i).transpose()
    }

    pub fn sample_mean(&self) -> DVector<T> {
        let n = T::from_usize(self.len()).unwrap();
        self.particles.row_sum().transpose() / n
    }

    /// Unbiased sample covariance (`N − 1` normalization; `N = 1` gives zero).
    pub fn sample_cov(&self) -> DMatrix<T> {
        let mean = self.sample_mean();
        let n = self.len();
        let mut cov = DMatrix::zeros(self.dim(), self.dim());
        for row in self.particles.row_iter() {
            let d = row.transpose() - &mean;
            cov += &d * d.transpose();
        }
        if n > 1 {
            cov /= T::from_usize(n - 1).unwrap();
        }
        symmetrize(&cov)
    }

    /// Writes a header `x1,…,xn` followed by one particle per row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = (1..=self.dim()).map(|i| format!("x{i}")).collect();
        w.write_record(&header).map_err(csv_err)?;
        for row in self.particles.row_iter() {
            w.write_record(row.iter().map(|v| v.as_f64().to_string()))
                .map_err(csv_err)?;
        }
        w.flush().map_err(|e| FilterError::Serialization(e.to_string()))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let row = rec
                .iter()
                .map(|f| f.parse::<f64>().map(T::lit))
                .collect::<std::result::Result<Vec<T>, _>>()
                .map_err(|e| FilterError::Serialization(e.to_string()))?;
            rows.push(DVector::from_vec(row));
        }
        Self::from_rows(&rows)
    }
}

fn csv_err(e: csv::Error) -> FilterError {
    FilterError::Serialization(e.to_string())
}

fn standard_normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    let z: f64 = StandardNormal.sample(rng);
    T::lit(z)
}

/// `count` i.i.d. draws from `g` as `μ + L z` with `L` the Cholesky factor.
pub fn sample_gaussian<T: Real, R: Rng + ?Sized>(
    g: &Gaussian<T>,
    count: usize,
    rng: &mut R,
) -> Result<EnsembleCloud<T>> {
    if count == 0 {
        return Err(FilterError::validation("sample count must be positive"));
    }
    let l = psd_factor(g.cov());
    let n = g.dim();
    let mut out = DMatrix::zeros(count, n);
    for i in 0..count {
        let z = DVector::from_fn(n, |_, _| standard_normal::<T, R>(rng));
        out.set_row(i, &(g.mean() + &l * z).transpose());
    }
    Ok(EnsembleCloud::from_matrix_unchecked(out))
}

/// Categorical component draw by weight followed by a Gaussian draw.
pub fn sample_mixture<T: Real, R: Rng + ?Sized>(
    mix: &GaussianMixture<T>,
    count: usize,
    rng: &mut R,
) -> Result<EnsembleCloud<T>> {
    if count == 0 {
        return Err(FilterError::validation("sample count must be positive"));
    }
    let picker = WeightedIndex::new(mix.weights().iter().map(|w| w.as_f64()))
        .map_err(|e| FilterError::validation(format!("mixture weights: {e}")))?;
    let factors: Vec<DMatrix<T>> = mix.nodes().iter().map(|g| psd_factor(g.cov())).collect();
    let n = mix.dim();
    let mut out = DMatrix::zeros(count, n);
    for i in 0..count {
        let k = picker.sample(rng);
        let z = DVector::from_fn(n, |_, _| standard_normal::<T, R>(rng));
        out.set_row(i, &(mix.nodes()[k].mean() + &factors[k] * z).transpose());
    }
    Ok(EnsembleCloud::from_matrix_unchecked(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gaussian_sampling_moments_and_determinism() {
        let g = Gaussian::<f64>::standard(2);
        let n = 100_000;
        let cloud = sample_gaussian(&g, n, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let m = cloud.sample_mean();
        let bound = 3.0 / (n as f64).sqrt();
        assert!(m.iter().all(|v| v.abs() < bound), "{m}");
        let again = sample_gaussian(&g, n, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(cloud, again);
        let one = sample_gaussian(&g, 1, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!((one.len(), one.dim()), (1, 2));
        assert!(sample_gaussian(&g, 0, &mut ChaCha8Rng::seed_from_u64(2)).is_err());
    }

    #[test]
    fn single_component_mixture_matches_gaussian_law() {
        let g = Gaussian::new(dvector![1.0, -1.0], dmatrix![2.0, 0.3; 0.3, 0.5]).unwrap();
        let mix = GaussianMixture::single(g.clone());
        let c = sample_mixture(&mix, 50_000, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!((c.sample_mean() - g.mean()).amax() < 0.03);
        assert!((c.sample_cov() - g.cov()).amax() < 0.05);
    }

    #[test]
    fn degenerate_and_balanced_weights() {
        let a = Gaussian::new(dvector![-50.0], dmatrix![1.0]).unwrap();
        let b = Gaussian::new(dvector![50.0], dmatrix![1.0]).unwrap();
        let mix = GaussianMixture::new(vec![1.0, 0.0], vec![a.clone(), b.clone()]).unwrap();
        let c = sample_mixture(&mix, 1000, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert!(c.particles().iter().all(|&v| v < 0.0));

        let mix = GaussianMixture::new(vec![0.5, 0.5], vec![a, b]).unwrap();
        let n = 100_000;
        let c = sample_mixture(&mix, n, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let frac = c.particles().iter().filter(|&&v| v < 0.0).count() as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.01, "{frac}");
    }

    #[test]
    fn csv_roundtrip() {
        let c = EnsembleCloud::new(dmatrix![1.0, 2.5; -0.125, 3.0e-7]).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("x1,x2\n"));
        assert_eq!(EnsembleCloud::<f64>::read_csv(buf.as_slice()).unwrap(), c);
    }
}
