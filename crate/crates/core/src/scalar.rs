//! Scalar abstraction for scores, fractions and percentages.
//!
//! Everything that turns pixel counts into a real number goes through
//! [`Scalar::from_ratio`], so the same metric code runs in `f32`, `f64`
//! or exact rational arithmetic.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::Num;

/// Exact rational scalar used by oracle tests. Backed by `i64`, so long
/// means over unrelated denominators overflow; keep inputs small.
pub type Rational = Ratio<i64>;

pub trait Scalar: Num + Copy + PartialOrd + Debug + Send + Sync + 'static {
    /// `num / den`. `den` must be nonzero.
    fn from_ratio(num: u64, den: u64) -> Self;

    fn to_f64(self) -> f64;

    fn from_count(n: u64) -> Self {
        Self::from_ratio(n, 1)
    }

    fn hundred() -> Self {
        Self::from_count(100)
    }
}

impl Scalar for f32 {
    fn from_ratio(num: u64, den: u64) -> Self {
        (num as f64 / den as f64) as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }

    fn to_f64(self) -> f64 {
        self
    }
}

impl Scalar for Rational {
    fn from_ratio(num: u64, den: u64) -> Self {
        Ratio::new(num as i64, den as i64)
    }

    fn to_f64(self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

/// Arithmetic mean; `None` for an empty iterator.
pub fn mean<T: Scalar>(values: impl IntoIterator<Item = T>) -> Option<T> {
    let mut sum = T::zero();
    let mut n = 0u64;
    for v in values {
        sum = sum + v;
        n += 1;
    }
    (n > 0).then(|| sum / T::from_count(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_is_exact() {
        let third = Rational::from_ratio(1, 3);
        assert_eq!(third + third + third, Rational::from_count(1));
        assert!((third.to_f64() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mean_of_empty_is_none() {
        assert_eq!(mean(Vec::<f64>::new()), None);
        assert_eq!(mean([1.0f64, 2.0, 6.0]), Some(3.0));
    }
}
