use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the library is generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Half-up rounding of `p * count`, the tail size used by every
/// order-statistic estimator in the crate (CVaR, VaR, Rachev).
pub fn tail_count<T: Scalar>(p: T, count: usize) -> usize {
    let v = (p * T::from_count(count) + T::lit(0.5)).floor();
    v.to_usize().unwrap_or(0)
}

pub(crate) fn mean<T: Scalar>(v: &[T]) -> T {
    if v.is_empty() {
        return T::zero();
    }
    v.iter().copied().sum::<T>() / T::from_count(v.len())
}

/// Population (1/N) standard deviation.
pub(crate) fn pop_std<T: Scalar>(v: &[T]) -> T {
    if v.is_empty() {
        return T::zero();
    }
    let m = mean(v);
    let ss: T = v.iter().map(|&x| (x - m) * (x - m)).sum();
    (ss / T::from_count(v.len())).sqrt()
}

/// True when a spread statistic is indistinguishable from zero at the
/// working precision of the values it was computed from.
pub(crate) fn numerically_zero<T: Scalar>(spread: T, values: &[T]) -> bool {
    let scale = values.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    spread <= T::lit(1e3) * T::epsilon() * scale
}
