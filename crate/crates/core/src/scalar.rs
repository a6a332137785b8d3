use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar used throughout the allocators.
///
/// Every routine in this crate is written against this trait so the same code
/// runs in `f32` or `f64`. Tolerances are expressed as `f64` literals and
/// converted with [`Scalar::lit`]; with `f32` the tighter ones saturate at the
/// type's precision.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Sum + Send + Sync + 'static
{
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal must be representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count must be representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + Debug
        + Display
        + Sum
        + Send
        + Sync
        + 'static
{
}

/// `log2(1 + x)` without the cancellation of `(1 + x).log2()` near zero.
#[inline]
pub(crate) fn log2_1p<T: Scalar>(x: T) -> T {
    x.ln_1p() / T::LN_2()
}
