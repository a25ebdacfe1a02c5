use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used by the raster and geometry code. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Default + Send + Sync + 'static
{
    /// Tolerance under which a pivot, determinant or homogeneous scale is treated as zero.
    fn singular_eps() -> Self;

    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("scalar literal out of range")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    #[inline]
    fn singular_eps() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    #[inline]
    fn singular_eps() -> Self {
        1e-7
    }
}
