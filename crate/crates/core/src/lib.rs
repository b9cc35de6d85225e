//! Wasserstein-distance based measurement updates for Gaussian and
//! Gaussian-mixture state estimates.
//!
//! The filtering objective throughout is the squared 2-Wasserstein distance
//! between the posterior-error distribution and a Dirac point mass at the
//! origin. For a Gaussian prior and linear sensor its minimizer is the Kalman
//! update ([`kalman`]); for a mixture prior, minimizing a convex upper bound
//! gives the Gaussian sum filter ([`gsf`]), and minimizing the weighted
//! objective directly gives the nonlinear Gaussian sum filter ([`ngsf`]).
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the double-precision instantiation.

pub mod assignment;
pub mod cloud;
pub mod em;
pub mod error;
pub mod gaussian;
pub mod gsf;
pub mod kalman;
pub mod linalg;
pub mod ngsf;
pub mod propagation;
pub mod scalar;
pub mod simplex;
pub mod wasserstein;

pub use cloud::{sample_gaussian, sample_mixture, EmpiricalCloud, EnsembleCloud};
pub use em::{fit_gmm_em, EmFit, EmFitConfig};
pub use error::{FilterError, Result};
pub use gaussian::{gaussian_logpdf, mixture_mean_cov, DiracPoint, Gaussian, GaussianMixture, MixtureJson};
pub use gsf::{gsf_bound_cost, gsf_update, GsfUpdateResult};
pub use kalman::{
    kalman_gains, kalman_update, orthogonality_residuals, wasserstein_posterior_cost, GainPair,
    LinearMeasurementModel, LinearPropagationModel, OrthogonalityResiduals, OrthogonalitySim,
};
pub use linalg::spd_sqrt;
pub use ngsf::{
    ngsf_cost, ngsf_gradients, ngsf_posterior, ngsf_solve, ngsf_update, NgsfOptions, NgsfProblem,
    NgsfSolution, StepPolicy,
};
pub use propagation::{duffing_rhs, integrate_rk4, propagate_cloud, DuffingModel};
pub use scalar::Real;
pub use wasserstein::{w2, w2_empirical, w2_gaussian_dirac, w2_gaussian_gaussian, w2_mixture_dirac};

pub type Gaussian64 = Gaussian<f64>;
pub type GaussianMixture64 = GaussianMixture<f64>;
pub type DiracPoint64 = DiracPoint<f64>;
pub type EnsembleCloud64 = EnsembleCloud<f64>;
pub type LinearMeasurementModel64 = LinearMeasurementModel<f64>;
pub type LinearPropagationModel64 = LinearPropagationModel<f64>;
pub type GainPair64 = GainPair<f64>;
pub type GsfUpdateResult64 = GsfUpdateResult<f64>;
pub type NgsfProblem64 = NgsfProblem<f64>;
pub type NgsfSolution64 = NgsfSolution<f64>;
pub type NgsfOptions64 = NgsfOptions<f64>;

pub type Gaussian32 = Gaussian<f32>;
pub type GaussianMixture32 = GaussianMixture<f32>;
