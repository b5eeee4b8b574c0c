//! Floating-point abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar the operators and classifiers are generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + LinalgScalar
    + ScalarOperand
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Relative tolerance for structural checks such as kernel symmetry.
    const STRUCTURAL_TOL: f64;
    /// Relative level below which a discrepancy spectrum counts as zero.
    const ZERO_SPECTRUM_TOL: f64;

    /// Converts an `f64` literal, saturating to the nearest representable value.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }
}

impl Scalar for f64 {
    const STRUCTURAL_TOL: f64 = 1e-8;
    const ZERO_SPECTRUM_TOL: f64 = 1e-12;
}

impl Scalar for f32 {
    const STRUCTURAL_TOL: f64 = 1e-3;
    const ZERO_SPECTRUM_TOL: f64 = 1e-6;
}
