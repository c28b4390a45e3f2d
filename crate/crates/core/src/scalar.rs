//! Floating-point scalar abstraction shared by every kernel.

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// A real scalar type: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + Sum + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// Default convergence tolerance for iterative fits at this precision.
    fn default_tolerance() -> Self;

    #[doc(hidden)]
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }

    #[doc(hidden)]
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[doc(hidden)]
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f32 {
    fn default_tolerance() -> Self {
        1e-5
    }
}

impl Real for f64 {
    fn default_tolerance() -> Self {
        1e-8
    }
}

/// Logistic function `1 / (1 + e^-x)`, evaluated without overflow.
#[inline]
pub fn expit<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Inverse of [`expit`].
#[inline]
pub fn logit<T: Real>(p: T) -> T {
    (p / (T::one() - p)).ln()
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub(crate) fn softplus<T: Real>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn mean<T: Real>(values: &[T]) -> T {
    values.iter().copied().sum::<T>() / T::from_count(values.len())
}

/// Sample variance with denominator `n - 1` (corrected two-pass).
pub(crate) fn sample_variance<T: Real>(values: &[T]) -> T {
    let m = mean(values);
    let (mut ss, mut s) = (T::zero(), T::zero());
    for &v in values {
        let d = v - m;
        ss += d * d;
        s += d;
    }
    let n = T::from_count(values.len());
    ((ss - s * s / n) / (n - T::one())).max(T::zero())
}
