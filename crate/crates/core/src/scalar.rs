//! Scalar abstraction shared by every numerical routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar usable by the filters: `f32` or `f64`.
///
/// Tolerances are derived from the machine epsilon so that the same code
/// validates sensibly in single precision, while the double-precision values
/// land exactly on the documented `1e-12` style thresholds.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Lossy conversion to `f64` for reporting and serialization.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    /// Tight relative tolerance: `1e-12` in double precision.
    #[inline]
    fn tight_tol() -> Self {
        Self::lit(1e-12).max(Self::default_epsilon() * Self::lit(100.0))
    }

    /// Looser tolerance for accumulated quantities such as simplex sums.
    #[inline]
    fn loose_tol() -> Self {
        Self::lit(1e-10).max(Self::default_epsilon() * Self::lit(1e4))
    }

    /// Default eigenvalue floor for covariance matrices.
    #[inline]
    fn eig_floor() -> Self {
        Self::lit(1e-12).max(Self::default_epsilon() * Self::lit(100.0))
    }
}

impl Real for f32 {}
impl Real for f64 {}
