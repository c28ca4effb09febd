//! Numeric traits the rest of the crate is written against.
//!
//! Box arithmetic only needs a field with an ordering, so [`Scalar`] admits
//! exact types such as `num_rational::Ratio<i64>`. Everything that averages
//! flow, takes square roots or logarithms works over [`Real`].

use std::fmt::Debug;

use num_traits::{Float, Num};

/// Ordered numeric field: enough for areas, intersections and IoU.
pub trait Scalar: Num + Copy + PartialOrd + Debug {
    #[inline]
    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    #[inline]
    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

impl<T: Num + Copy + PartialOrd + Debug> Scalar for T {}

/// Floating-point scalar used by the flow, tracking and entropy code.
pub trait Real: Scalar + Float + Default + Send + Sync + 'static {
    /// Lossy conversion from a count or index.
    #[inline]
    fn from_usize(n: usize) -> Self {
        <Self as num_traits::NumCast>::from(n).expect("usize is representable as a float")
    }

    #[inline]
    fn from_f64(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("f64 is representable as a float")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Arithmetic mean; `None` for an empty iterator.
pub(crate) fn mean<T: Real>(values: impl IntoIterator<Item = T>) -> Option<T> {
    let (sum, n) = values
        .into_iter()
        .fold((T::zero(), 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / T::from_usize(n))
}
