//! Scalar abstraction shared by every module.
//!
//! All numerics are written against [`Real`], which is implemented for
//! `f32` and `f64`. Tolerances are stated as `f64` literals and lifted with
//! [`Real::tol`], which never returns less than a small multiple of the
//! type's machine epsilon, so `f32` instantiations stay meaningful.

use std::fmt::{Debug, Display};

use nalgebra::RealField;

/// Floating point scalar used throughout the crate.
pub trait Real:
    RealField + Copy + Debug + Display + Default + Send + Sync + 'static
{
    /// Short name used in diagnostics.
    const NAME: &'static str;

    /// Converts an `f64` literal into this scalar type.
    fn lit(x: f64) -> Self;

    /// Lossy conversion back to `f64` (reporting, CSV output).
    fn to_f64(self) -> f64;

    /// A tolerance of `x`, floored at `64·ε` of this type.
    fn tol(x: f64) -> Self {
        let floor = 64.0 * Self::machine_eps();
        Self::lit(if x > floor { x } else { floor })
    }

    fn machine_eps() -> f64;
}

impl Real for f64 {
    const NAME: &'static str = "f64";
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    fn machine_eps() -> f64 {
        f64::EPSILON
    }
}

impl Real for f32 {
    const NAME: &'static str = "f32";
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn machine_eps() -> f64 {
        f32::EPSILON as f64
    }
}

/// Shorthand for [`Real::lit`].
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::lit(x)
}

/// `true` when `x` is neither NaN nor infinite.
#[inline]
pub fn finite<T: Real>(x: T) -> bool {
    x.to_f64().is_finite()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tol_is_floored_for_f32() {
        assert_eq!(f64::tol(1e-12), 1e-12);
        assert!(f32::tol(1e-12) > 1e-6);
        assert!(finite(1.0f32));
        assert!(!finite(f64::NAN));
    }
}
