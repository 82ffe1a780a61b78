//! Floating point abstraction shared by the numeric core.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FloatConst, FromPrimitive};

/// Real scalar usable by tensors, distributions and models: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + Default
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Lossless for f64, rounding for f32.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is always representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite floats convert to f64")
    }

    /// Name written into checkpoint headers.
    const TAG: &'static str;
}

impl Scalar for f32 {
    const TAG: &'static str = "f32";
}

impl Scalar for f64 {
    const TAG: &'static str = "f64";
}

/// `ln(1 + exp(x))` without overflow for large `x`.
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Logistic sigmoid, the derivative of [`softplus`].
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Inverse of [`softplus`] for strictly positive `y`.
pub fn softplus_inverse<T: Scalar>(y: T) -> T {
    // ln(exp(y) - 1) = y + ln(1 - exp(-y))
    y + (-(-y).exp()).ln_1p()
}
