//! Scalar abstraction shared by the real-time and complex-time flows.

use nalgebra::ComplexField;
use num_complex::Complex64;

/// Field of flow coordinates: `f64` for physical trajectories, `Complex64`
/// for analytically continued ones.
pub trait Scalar: ComplexField<RealField = f64> + Copy + Send + Sync {
    fn lift(x: f64) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn lift(x: f64) -> Self {
        x
    }
}

impl Scalar for Complex64 {
    #[inline]
    fn lift(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
}
