//! Exact rational probabilities.

use alloc::string::String;
use core::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Prob = BigRational;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalParseError(pub String);

impl fmt::Display for RationalParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "expected an integer or `num/den`, got {:?}", self.0)
    }
}

impl core::error::Error for RationalParseError {}

/// Parses `n` or `n/d`. Decimal notation is rejected on purpose.
pub fn parse_rational(s: &str) -> Result<Prob, RationalParseError> {
    let err = || RationalParseError(String::from(s));
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let digits = |t: &str| {
        let t = t.strip_prefix('-').unwrap_or(t);
        !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit())
    };
    if !digits(num) || !digits(den) || den.starts_with('-') {
        return Err(err());
    }
    let n: BigInt = num.parse().map_err(|_| err())?;
    let d: BigInt = den.parse().map_err(|_| err())?;
    if d.is_zero() {
        return Err(err());
    }
    Ok(BigRational::new(n, d))
}

pub fn ratio(n: i64, d: i64) -> Prob {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Prob {
    BigRational::from_integer(BigInt::from(n))
}

pub fn to_f64(x: &Prob) -> f64 {
    x.to_f64().unwrap_or_else(|| {
        // huge numerators/denominators: fall back to a scaled division
        let n = x.numer().bits() as i64;
        let d = x.denom().bits() as i64;
        let shift = n.max(d) - 1000;
        if shift <= 0 {
            return f64::NAN;
        }
        let num = (x.numer() >> shift as usize).to_f64().unwrap_or(f64::NAN);
        let den = (x.denom() >> shift as usize).to_f64().unwrap_or(f64::NAN);
        num / den
    })
}

pub fn pow(base: &Prob, exp: u32) -> Prob {
    let mut acc = Prob::one();
    for _ in 0..exp {
        acc *= base;
    }
    acc
}

pub fn is_probability(x: &Prob) -> bool {
    !x.is_negative() && *x <= Prob::one()
}

/// `floor(x * 2^64)` clamped to `u64`, for exact-threshold sampling.
pub(crate) fn scaled_u64(x: &Prob) -> u64 {
    if x.is_negative() {
        return 0;
    }
    let scaled: BigInt = (x.numer() << 64usize) / x.denom();
    scaled.to_u64().unwrap_or(u64::MAX)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_integers_and_fractions() {
        assert_eq!(parse_rational("3/4").unwrap(), ratio(3, 4));
        assert_eq!(parse_rational(" 2 / 6 ").unwrap(), ratio(1, 3));
        assert_eq!(parse_rational("1").unwrap(), int(1));
        assert_eq!(parse_rational("-1/2").unwrap(), ratio(-1, 2));
    }

    #[test]
    fn rejects_decimals_and_garbage() {
        for bad in ["0.5", "1e-3", "", "1/0", "a/b", "1/-2", "1/2/3"] {
            assert!(parse_rational(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn scaled_thresholds() {
        assert_eq!(scaled_u64(&ratio(1, 2)), 1u64 << 63);
        assert_eq!(scaled_u64(&int(1)), u64::MAX);
        assert_eq!(scaled_u64(&int(0)), 0);
    }
}
