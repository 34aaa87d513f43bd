//! Exact rational arithmetic helpers.
//!
//! All balances, reserves, and amounts in this crate are arbitrary-precision
//! rationals in token base units; decimals are display metadata only.

use alloc::string::String;
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

pub type Rational = num_rational::BigRational;

pub fn rat(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Largest integer <= `r`, as a rational.
pub fn floor(r: &Rational) -> Rational {
    r.floor()
}

/// Smallest integer >= `r`, as a rational.
pub fn ceil(r: &Rational) -> Rational {
    r.ceil()
}

pub fn is_integer(r: &Rational) -> bool {
    r.denom().is_one()
}

/// Canonical rendering: `p` for integers, `p/q` otherwise. Negatives render
/// with a leading `-`. Round-trips through [`parse_rational`].
pub fn render_rational(r: &Rational) -> String {
    use alloc::format;
    if is_integer(r) {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parses `123`, `-7`, `4/5`, or `-4/5`. Denominator must be nonzero.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        Some(Rational::new(n, d))
    } else {
        let n: BigInt = s.parse().ok()?;
        Some(Rational::from_integer(n))
    }
}

/// Absolute value.
pub fn abs(r: &Rational) -> Rational {
    r.abs()
}
