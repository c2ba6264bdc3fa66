//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point component type: implemented for `f32` and `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + FromStr
    + Display
    + LowerExp
    + Debug
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossless widening used for hashing and JSON reporting.
    fn to_f64_lossless(self) -> f64;

    fn from_f64_lossy(v: f64) -> Self;
}

impl Scalar for f32 {
    fn to_f64_lossless(self) -> f64 {
        f64::from(self)
    }

    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    fn to_f64_lossless(self) -> f64 {
        self
    }

    fn from_f64_lossy(v: f64) -> Self {
        v
    }
}

/// Sum of squared componentwise differences.
pub(crate) fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Unevaluated sum `hi + lo` carrying roughly twice the working precision.
/// Used where a reported value must be accurate to the last bit.
#[derive(Copy, Clone, Debug)]
pub(crate) struct DoubleWord<T> {
    hi: T,
    lo: T,
}

fn two_sum<T: Scalar>(a: T, b: T) -> (T, T) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum<T: Scalar>(a: T, b: T) -> DoubleWord<T> {
    let s = a + b;
    DoubleWord { hi: s, lo: b - (s - a) }
}

impl<T: Scalar> DoubleWord<T> {
    pub fn zero() -> Self {
        DoubleWord { hi: T::zero(), lo: T::zero() }
    }

    pub fn from_value(x: T) -> Self {
        DoubleWord { hi: x, lo: T::zero() }
    }

    /// Exact `a - b` as a double word.
    pub fn difference(a: T, b: T) -> Self {
        let (hi, lo) = two_sum(a, -b);
        DoubleWord { hi, lo }
    }

    pub fn add(self, other: Self) -> Self {
        let (s, e) = two_sum(self.hi, other.hi);
        quick_two_sum(s, e + self.lo + other.lo)
    }

    pub fn mul(self, other: Self) -> Self {
        let p = self.hi * other.hi;
        let e = self.hi.mul_add(other.hi, -p);
        quick_two_sum(p, e + self.hi * other.lo + self.lo * other.hi)
    }

    pub fn value(self) -> T {
        self.hi + self.lo
    }
}

/// Squared distance accumulated in double-word arithmetic.
pub(crate) fn squared_distance_dw<T: Scalar>(a: &[T], b: &[T]) -> DoubleWord<T> {
    a.iter().zip(b).fold(DoubleWord::zero(), |acc, (&x, &y)| {
        let d = DoubleWord::difference(x, y);
        acc.add(d.mul(d))
    })
}
