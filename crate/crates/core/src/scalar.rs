//! Numeric scalar abstraction shared by bids, prices and polynomial
//! coefficients.
//!
//! Deterministic rules and the exhaustive checkers are generic over
//! [`Scalar`], so the same code runs on `f64` for simulations and on exact
//! [`Rational`] numbers where equalities must hold bit-for-bit.

use std::fmt::{Debug, Display};
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact rational used by the verification paths.
pub type Rational = Ratio<i64>;

pub trait Scalar:
    Copy
    + PartialOrd
    + PartialEq
    + Debug
    + Display
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
{
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_count(n: u64) -> Self;
    fn to_f64(self) -> f64;
    fn parse_scalar(s: &str) -> Result<Self>;

    fn half(self) -> Self {
        self / Self::from_count(2)
    }

    fn is_zero(self) -> bool {
        self == Self::zero()
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_count(n: u64) -> Self {
        n as f64
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn parse_scalar(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: f64 = n.trim().parse().map_err(|_| Error::Parse(format!("bad number {s:?}")))?;
            let d: f64 = d.trim().parse().map_err(|_| Error::Parse(format!("bad number {s:?}")))?;
            return Ok(n / d);
        }
        f64::from_str(s).map_err(|_| Error::Parse(format!("bad number {s:?}")))
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn zero() -> Self {
        <Ratio<i64> as Zero>::zero()
    }
    fn one() -> Self {
        Ratio::from_integer(1)
    }
    fn from_count(n: u64) -> Self {
        Ratio::from_integer(n as i64)
    }
    fn to_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
    /// Accepts `3`, `10/3` and finite decimals such as `0.25`.
    fn parse_scalar(s: &str) -> Result<Self> {
        parse_rational(s)
    }
}

pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("bad rational {s:?}"));
    if s.contains('/') {
        return Rational::from_str(s).map_err(|_| bad());
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    if frac_part.len() > 15 {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: i64 = if digits.is_empty() { 0 } else { digits.parse().map_err(|_| bad())? };
    let denom = 10_i64.pow(frac_part.len() as u32);
    let r = Rational::new(numer, denom);
    Ok(if neg { -r } else { r })
}

/// Parses a comma-separated list of scalars, e.g. `1,2,0.5`.
pub fn parse_list<B: Scalar>(s: &str) -> Result<Vec<B>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(B::parse_scalar)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimals_exactly() {
        assert_eq!(parse_rational("0.25").unwrap(), Rational::new(1, 4));
        assert_eq!(parse_rational("10/3").unwrap(), Rational::new(10, 3));
        assert_eq!(parse_rational("4").unwrap(), Rational::from_integer(4));
        assert_eq!(parse_rational("-1.5").unwrap(), Rational::new(-3, 2));
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational(".").is_err());
    }

    #[test]
    fn f64_accepts_fractions() {
        assert_eq!(f64::parse_scalar("1/4").unwrap(), 0.25);
        assert_eq!(parse_list::<f64>("1, 2,3").unwrap(), vec![1.0, 2.0, 3.0]);
    }
}
