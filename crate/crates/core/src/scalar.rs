//! Numeric traits the rest of the crate is generic over.
//!
//! Two families are used. [`Scalar`] is a real floating point type and backs
//! everything that does arithmetic on feature matrices (encoding, the
//! solvers, model probabilities). [`Measure`] is weaker: it only needs field
//! operations and an ordering, so the ratio measures can be evaluated over
//! exact rationals as well as floats.

use std::fmt::{Debug, Display};

use ndarray::{LinalgScalar, ScalarOperand};
use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// A real floating point type usable in the learners.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + ScalarOperand
    + LinalgScalar
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used for configuration constants.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable in scalar type")
    }

    /// Lossy conversion to `f64`, used at report boundaries.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// A number type that ratio measures (precision, recall, PI, ...) can be
/// computed in.
pub trait Measure: Num + Copy + PartialOrd + FromPrimitive + Debug {
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable in measure type")
    }

    fn abs_val(self) -> Self {
        if self < Self::zero() {
            Self::zero() - self
        } else {
            self
        }
    }
}

impl Measure for f32 {}
impl Measure for f64 {}
impl Measure for Ratio<i64> {}
impl Measure for Ratio<i128> {}
