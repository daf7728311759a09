//! Scalar abstraction shared by the physics, network and trainer code.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand_distr::{Distribution, StandardNormal};
use serde::{de::DeserializeOwned, Serialize};

/// Floating-point type the numerical core is written against.
///
/// Implemented for `f32` and `f64`. Constants are written as `f64` literals
/// and converted through [`Real::lit`].
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + 'static
{
    /// Name written into checkpoints so a load can refuse a precision mismatch.
    const NAME: &'static str;

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> Self;

    #[inline]
    fn count(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("count representable")
    }
}

impl Real for f64 {
    const NAME: &'static str = "f64";

    fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}
