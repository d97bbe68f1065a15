//! Numeric abstraction for the rate-control laws.
//!
//! Rates are bytes/second. The simulator runs on `f64`; the same update
//! recurrences can be driven with `f32` or with exact rationals
//! ([`num_rational::BigRational`]) when a trajectory has to be compared
//! bit-for-bit against a reference.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, ToPrimitive};

/// Scalar type a rate-control state can be instantiated with.
pub trait Scalar: Num + Clone + PartialOrd + Debug + ToPrimitive {
    /// Exact `numer / denom` where the type allows it.
    fn from_ratio(numer: i64, denom: i64) -> Self;

    fn from_int(value: i64) -> Self {
        Self::from_ratio(value, 1)
    }

    /// Lossy conversion used at the boundary with integer simulation time.
    fn as_f64(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn half() -> Self {
        Self::from_ratio(1, 2)
    }
}

impl Scalar for f64 {
    fn from_ratio(numer: i64, denom: i64) -> Self {
        numer as f64 / denom as f64
    }
}

impl Scalar for f32 {
    fn from_ratio(numer: i64, denom: i64) -> Self {
        (numer as f64 / denom as f64) as f32
    }
}

impl Scalar for BigRational {
    fn from_ratio(numer: i64, denom: i64) -> Self {
        BigRational::new(BigInt::from(numer), BigInt::from(denom))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_is_exact() {
        let g = BigRational::from_ratio(1, 256);
        let one = BigRational::from_int(1);
        let decayed = (one - g.clone()) * g;
        assert_eq!(decayed, BigRational::from_ratio(255, 65536));
    }

    #[test]
    fn min_max_pick_correct_side() {
        assert_eq!(3.0f64.min_of(2.0), 2.0);
        assert_eq!(3.0f64.max_of(2.0), 3.0);
        assert_eq!(f32::from_ratio(1, 4), 0.25);
        assert_eq!(f64::half(), 0.5);
    }
}
