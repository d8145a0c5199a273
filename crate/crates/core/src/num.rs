//! Scalar abstraction shared by every numeric module.
//!
//! All transforms, thresholds and energy computations are written against
//! [`Real`], which is implemented for `f32` and `f64`. The crate root exposes
//! `f64` aliases for the common case.

use std::fmt::{Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, NumAssign};
use rustfft::FftNum;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar usable by the transforms (FFT-capable, serialisable).
pub trait Real:
    Float
    + FloatConst
    + FftNum
    + NumAssign
    + Sum
    + Default
    + Display
    + LowerExp
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as num_traits::NumCast>::from(x).expect("f64 constant representable")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        <Self as num_traits::NumCast>::from(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// IEEE total order (f32 widens to f64 exactly).
    #[inline]
    fn total_order(&self, other: &Self) -> std::cmp::Ordering {
        self.to_f64_lossy().total_cmp(&other.to_f64_lossy())
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Rounds to the nearest integer with ties away from zero; `None` for
/// non-finite input.
#[inline]
pub fn round_to_i64<T: Real>(x: T) -> Option<i64> {
    if !x.is_finite() {
        return None;
    }
    num_traits::ToPrimitive::to_i64(&x.round())
}

/// Arithmetic mean; zero for an empty slice.
pub fn mean<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    xs.iter().copied().sum::<T>() / T::of_usize(xs.len())
}

/// Population variance.
pub fn variance<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    let mu = mean(xs);
    xs.iter().map(|&x| (x - mu) * (x - mu)).sum::<T>() / T::of_usize(xs.len())
}

/// Median of a slice (average of the two middle values for even length).
/// Returns `None` for an empty slice. NaN values must be filtered beforehand.
pub fn median<T: Real>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    let n = v.len();
    let cmp = |a: &T, b: &T| a.partial_cmp(b).expect("median input contains NaN");
    let (lower, &mut mid, _) = v.select_nth_unstable_by(n / 2, cmp);
    Some(if n % 2 == 1 {
        mid
    } else {
        let below = lower.iter().copied().fold(T::neg_infinity(), T::max);
        (below + mid) / T::lit(2.0)
    })
}
