//! Duffing-oscillator dynamics and fixed-step RK4 propagation of particle
//! ensembles.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cloud::EnsembleCloud;
use crate::error::{FilterError, Result};
use crate::scalar::Real;

/// `ẋ₁ = x₂`, `ẋ₂ = −stiffness·x₁ − damping·x₂ − cubic·x₁³`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DuffingModel {
    pub damping: f64,
    pub stiffness: f64,
    pub cubic: f64,
    /// Integrator step (s).
    pub dt: f64,
    /// Filter period (s); an integer multiple of `dt`.
    pub sample_time: f64,
}

impl Default for DuffingModel {
    fn default() -> Self {
        Self {
            damping: 0.25,
            stiffness: 1.0,
            cubic: 1.0,
            dt: 0.01,
            sample_time: 0.5,
        }
    }
}

impl DuffingModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(FilterError::validation("duffing dt must be positive"));
        }
        steps_for(self.sample_time, self.dt).map(|_| ())
    }

    pub fn rhs<T: Real>(&self, x: &DVector<T>) -> DVector<T> {
        duffing_rhs(self, x)
    }

    /// RK4 substeps per filter period.
    pub fn steps_per_sample(&self) -> Result<usize> {
        steps_for(self.sample_time, self.dt)
    }
}

/// Number of `dt` steps covering `duration`, which must be a whole multiple.
pub fn steps_for(duration: f64, dt: f64) -> Result<usize> {
    if !(duration >= 0.0) {
        return Err(FilterError::validation("duration must be non-negative"));
    }
    let ratio = duration / dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
        return Err(FilterError::validation(format!(
            "duration {duration} is not a multiple of dt {dt}"
        )));
    }
    Ok(steps as usize)
}

/// Duffing vector field for a 2-state `x`.
pub fn duffing_rhs<T: Real>(model: &DuffingModel, x: &DVector<T>) -> DVector<T> {
    let (p, v) = (x[0], x[1]);
    let acc = -(T::lit(model.stiffness) * p) - T::lit(model.damping) * v - T::lit(model.cubic) * p * p * p;
    DVector::from_vec(vec![v, acc])
}

/// Classical fourth-order Runge–Kutta with `steps` fixed steps of size `dt`.
pub fn integrate_rk4<T: Real, F>(x0: &DVector<T>, rhs: F, dt: T, steps: usize) -> Result<DVector<T>>
where
    F: Fn(&DVector<T>) -> DVector<T>,
{
    if !(dt > T::zero()) {
        return Err(FilterError::validation("rk4 step must be positive"));
    }
    let half = dt * T::lit(0.5);
    let sixth = dt / T::lit(6.0);
    let two = T::lit(2.0);
    let mut x = x0.clone();
    for _ in 0..steps {
        let k1 = rhs(&x);
        let k2 = rhs(&(&x + &k1 * half));
        let k3 = rhs(&(&x + &k2 * half));
        let k4 = rhs(&(&x + &k3 * dt));
        x += (k1 + k2 * two + k3 * two + k4) * sixth;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FilterError::Divergence { index: None });
        }
    }
    Ok(x)
}

/// Integrates every particle independently over `duration` seconds.
pub fn propagate_cloud<T: Real>(
    cloud: &EnsembleCloud<T>,
    model: &DuffingModel,
    duration: f64,
) -> Result<EnsembleCloud<T>> {
    model.validate()?;
    if cloud.dim() != 2 {
        return Err(FilterError::dim("duffing state", 2, cloud.dim()));
    }
    let steps = steps_for(duration, model.dt)?;
    let dt = T::lit(model.dt);
    let mut out = DMatrix::zeros(cloud.len(), cloud.dim());
    for i in 0..cloud.len() {
        let x = integrate_rk4(&cloud.particle(i), |s| duffing_rhs(model, s), dt, steps)
            .map_err(|e| match e {
                FilterError::Divergence { .. } => FilterError::Divergence { index: Some(i) },
                other => other,
            })?;
        out.set_row(i, &x.transpose());
    }
    EnsembleCloud::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn rhs_values() {
        let m = DuffingModel::default();
        assert_eq!(duffing_rhs(&m, &dvector![0.0, 0.0]), dvector![0.0, 0.0]);
        assert_eq!(duffing_rhs(&m, &dvector![1.0, 0.0]), dvector![0.0, -2.0]);
        assert_eq!(duffing_rhs(&m, &dvector![0.0, 1.0]), dvector![1.0, -0.25]);
    }

    #[test]
    fn equilibrium_is_fixed() {
        let m = DuffingModel::default();
        let x = integrate_rk4(&dvector![0.0, 0.0], |s| duffing_rhs(&m, s), 0.01, 100).unwrap();
        assert_eq!(x, dvector![0.0, 0.0]);
    }

    #[test]
    fn exponential_decay() {
        let x = integrate_rk4(&dvector![1.0], |s: &DVector<f64>| -s, 0.01, 100).unwrap();
        assert!((x[0] - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn blow_up_is_reported() {
        let r = integrate_rk4(&dvector![1.0], |s: &DVector<f64>| s.map(|v| v * v * v), 1.0, 50);
        assert!(matches!(r, Err(FilterError::Divergence { .. })));
        assert!(integrate_rk4(&dvector![1.0], |s: &DVector<f64>| -s, 0.0, 1).is_err());
    }

    #[test]
    fn duration_must_align_with_dt() {
        assert_eq!(steps_for(0.5, 0.01).unwrap(), 50);
        assert!(steps_for(0.505, 0.01).is_err());
        let bad = DuffingModel { sample_time: 0.333, dt: 0.1, ..DuffingModel::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn diverging_particle_index() {
        let m = DuffingModel { cubic: -1.0, stiffness: -1.0, ..DuffingModel::default() };
        let cloud = EnsembleCloud::new(nalgebra::dmatrix![0.0, 0.0; 50.0, 50.0]).unwrap();
        match propagate_cloud(&cloud, &m, 5.0) {
            Err(FilterError::Divergence { index }) => assert_eq!(index, Some(1)),
            other => panic!("unexpected {other:?}"),
        }
    }
}
