//! Floating-point abstraction shared by the device, projection and composition math.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// A real scalar the analytical models can be evaluated in (`f32` or `f64`).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Relative tolerance used when snapping ratios to integers.
    fn snap_tolerance() -> Self;

    fn from_u64_lossy(v: u64) -> Self {
        Self::from_u64(v).unwrap_or_else(Self::infinity)
    }

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    fn snap_tolerance() -> Self {
        1e-5
    }
}

impl Scalar for f64 {
    fn snap_tolerance() -> Self {
        1e-9
    }
}

/// `ceil(x)` where values within the scalar's snap tolerance of an integer are treated
/// as that integer, so `2000 cycles / 1 us` refreshes like an exact `2.0`.
pub fn snapped_ceil<S: Scalar>(x: S) -> S {
    let nearest = x.round();
    let tol = S::snap_tolerance() * x.abs().max(S::one());
    if (x - nearest).abs() <= tol {
        nearest
    } else {
        x.ceil()
    }
}
