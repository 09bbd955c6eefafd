//! Scalar abstraction for the numeric core.
//!
//! Everything numeric in this crate is generic over [`Scalar`], implemented
//! for `f32` and `f64`. The engine and the CLI run in `f64` (see the aliases
//! at the crate root); the `f32` instantiation matches the on-disk bundle
//! precision and is handy for storage-sensitivity experiments.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar usable by the linear-algebra core.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Relative off-diagonal threshold at which the one-sided Jacobi sweeps
    /// stop rotating a column pair.
    fn jacobi_tol() -> Self;

    /// Tolerance for "these columns are orthonormal" style validation
    /// checks, scaled to what the type can actually represent after a
    /// round-trip through storage.
    fn orthonormal_tol() -> Self;

    /// Lossy cast from `f64`. Infallible for the supported scalar types.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar type")
    }

    /// Lossy cast to `f64` for reporting and error payloads.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn jacobi_tol() -> Self {
        1e-12
    }

    fn orthonormal_tol() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    // f32 cannot resolve 1e-12 relative couplings; stop near its epsilon.
    fn jacobi_tol() -> Self {
        1e-6
    }

    fn orthonormal_tol() -> Self {
        1e-4
    }
}
