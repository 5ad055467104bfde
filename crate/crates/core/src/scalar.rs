//! Floating point abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Real scalar usable by the geometry, barrier, solver, controller and
/// metric code: `f32` or `f64`.
pub trait Scalar:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Every `f64` is representable (possibly
    /// rounded) in the supported types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Lossy conversion back to `f64` for reporting.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Base tolerance scaled to the precision of the type.
    #[inline]
    fn tolerance() -> Self {
        // eps^(3/4): ~1.8e-12 for f64, ~6e-6 for f32
        Self::epsilon().powf(Self::lit(0.75))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Clamps `x` to `[lo, hi]`; `lo` wins when the interval is empty.
#[inline]
pub fn clamp<T: Scalar>(x: T, lo: T, hi: T) -> T {
    lo.max(hi.min(x))
}
