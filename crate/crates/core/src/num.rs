//! Scalar abstraction for every fraction the analytics emit.
//!
//! All ratios in this crate are ratios of set cardinalities, so a scalar only
//! needs to be constructible from a pair of counts. Floating point types give
//! fast reports; [`num_rational::Ratio`] gives exact ones.

use std::fmt::{self, Debug};

use num_rational::Ratio;
use num_traits::{Num, ToPrimitive};
use serde::Serialize;

/// Numeric type used for coverage fractions, rates and scores.
pub trait Scalar: Num + Clone + PartialOrd + Debug + Serialize + Send + Sync + 'static {
    /// `numerator / denominator`. A zero denominator yields zero.
    fn ratio(numerator: usize, denominator: usize) -> Self;

    fn to_f64(&self) -> f64;

    /// `self × 1000` rounded half-up, i.e. a percentage in tenths.
    fn percent_tenths(&self) -> i64;

    fn from_count(count: usize) -> Self {
        Self::ratio(count, 1)
    }
}

// Float rounding tolerates representation error: 0.061 × 1000 lands a few ulps
// below 61.0 in binary.
const FLOAT_HALF_UP_SLACK: f64 = 1e-9;

impl Scalar for f64 {
    fn ratio(numerator: usize, denominator: usize) -> Self {
        if denominator == 0 {
            return 0.0;
        }
        numerator as f64 / denominator as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn percent_tenths(&self) -> i64 {
        (self * 1000.0 + 0.5 + FLOAT_HALF_UP_SLACK).floor() as i64
    }
}

impl Scalar for f32 {
    fn ratio(numerator: usize, denominator: usize) -> Self {
        if denominator == 0 {
            return 0.0;
        }
        (numerator as f64 / denominator as f64) as f32
    }

    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }

    fn percent_tenths(&self) -> i64 {
        (f64::from(*self) * 1000.0 + 0.5 + 1e-6).floor() as i64
    }
}

impl Scalar for Ratio<i64> {
    fn ratio(numerator: usize, denominator: usize) -> Self {
        if denominator == 0 {
            return Ratio::from_integer(0);
        }
        Ratio::new(numerator as i64, denominator as i64)
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn percent_tenths(&self) -> i64 {
        // floor((2·n·1000 + d) / 2d), exact half-up for any sign of n
        let scaled = self * Ratio::from_integer(1000) + Ratio::new(1, 2);
        scaled.floor().to_integer()
    }
}

/// Mean of a slice of scalars; zero for an empty slice.
pub fn mean<S: Scalar>(values: &[S]) -> S {
    if values.is_empty() {
        return S::zero();
    }
    let sum = values.iter().cloned().fold(S::zero(), |acc, v| acc + v);
    sum / S::from_count(values.len())
}

/// A percentage rounded half-up to one decimal place, stored in tenths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Percent(i64);

impl Percent {
    pub fn from_tenths(tenths: i64) -> Self {
        Percent(tenths)
    }

    /// Exact half-up rounding of `numerator / denominator × 100`.
    pub fn from_counts(numerator: usize, denominator: usize) -> Self {
        if denominator == 0 {
            return Percent(0);
        }
        let n = numerator as i128;
        let d = denominator as i128;
        Percent(((2 * n * 1000 + d) / (2 * d)) as i64)
    }

    pub fn from_scalar<S: Scalar>(value: &S) -> Self {
        Percent(value.percent_tenths())
    }

    pub fn tenths(self) -> i64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 10.0
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{}{}.{}", sign, abs / 10, abs % 10)
    }
}

impl Serialize for Percent {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_up_rounding_of_reported_values() {
        assert_eq!(Percent::from_counts(27, 34).to_string(), "79.4");
        assert_eq!(Percent::from_counts(61, 1000).to_string(), "6.1");
        assert_eq!(Percent::from_counts(88, 1000).to_string(), "8.8");
        assert_eq!(Percent::from_scalar(&0.061_f64).to_string(), "6.1");
        assert_eq!(Percent::from_scalar(&(27.0_f64 / 34.0)).to_string(), "79.4");
        assert_eq!(
            Percent::from_scalar(&Ratio::new(27_i64, 34)).to_string(),
            "79.4"
        );
    }

    #[test]
    fn exact_half_rounds_up() {
        // 1/16 = 6.25%
        assert_eq!(Percent::from_counts(1, 16).to_string(), "6.3");
        assert_eq!(
            Percent::from_scalar(&Ratio::new(1_i64, 16)).to_string(),
            "6.3"
        );
        assert_eq!(Percent::from_scalar(&0.0625_f64).to_string(), "6.3");
        // 0.0005 → 0.05% → 0.1
        assert_eq!(Percent::from_counts(1, 2000).to_string(), "0.1");
        assert_eq!(Percent::from_counts(0, 5).to_string(), "0.0");
        assert_eq!(Percent::from_counts(5, 5).to_string(), "100.0");
    }

    #[test]
    fn ratio_of_zero_denominator_is_zero() {
        assert_eq!(<f64 as Scalar>::ratio(3, 0), 0.0);
        assert_eq!(<Ratio<i64> as Scalar>::ratio(3, 0), Ratio::from_integer(0));
    }

    #[test]
    fn mean_matches_across_scalars() {
        let exact: Vec<Ratio<i64>> = vec![Scalar::ratio(1, 3), Scalar::ratio(2, 3)];
        assert_eq!(mean(&exact), Ratio::new(1, 2));
        let float: Vec<f32> = vec![0.25, 0.75];
        assert_eq!(mean(&float), 0.5);
        assert_eq!(mean::<f64>(&[]), 0.0);
    }
}
