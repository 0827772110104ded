//! Exact rational numbers and their text encoding.
//!
//! Rationals travel through JSON as strings (`"3/10"`, `"-2"`, `"0.25"`) or
//! bare integers. Everything in the interval backend is computed with these;
//! floats only appear once a value leaves for the simulation side.

use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn frac(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Parses `p/q`, a signed integer, or a finite decimal such as `-0.125`.
pub fn parse(text: &str) -> Result<Rational> {
    let s = text.trim();
    let malformed = || Error::MalformedRational(text.to_string());
    if s.is_empty() {
        return Err(malformed());
    }
    if let Some((num, den)) = s.split_once('/') {
        let num = BigInt::from_str(num.trim()).map_err(|_| malformed())?;
        let den = BigInt::from_str(den.trim()).map_err(|_| malformed())?;
        if den.is_zero() {
            return Err(Error::ZeroDenominator(text.to_string()));
        }
        return Ok(Rational::new(num, den));
    }
    if let Some((whole, fractional)) = s.split_once('.') {
        if fractional.is_empty() || !fractional.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed());
        }
        let negative = whole.starts_with('-');
        let whole_digits = whole.trim_start_matches(['-', '+']);
        if !whole_digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed());
        }
        let digits = format!("{whole_digits}{fractional}");
        let mut num = BigInt::from_str(if digits.is_empty() { "0" } else { &digits })
            .map_err(|_| malformed())?;
        if negative {
            num = -num;
        }
        let den = num_traits::pow(BigInt::from(10), fractional.len());
        return Ok(Rational::new(num, den));
    }
    BigInt::from_str(s)
        .map(Rational::from_integer)
        .map_err(|_| malformed())
}

pub fn to_f64(q: &Rational) -> f64 {
    q.to_f64().unwrap_or_else(|| {
        // Huge numerators/denominators; fall back on a scaled division.
        let n = q.numer().to_f64().unwrap_or(f64::NAN);
        let d = q.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

/// Exact value of a finite float (every finite `f64` is a dyadic rational).
pub fn from_f64(x: f64) -> Option<Rational> {
    Rational::from_float(x)
}

/// Largest `k` with `2^k <= q` for positive `q`.
pub fn floor_log2(q: &Rational) -> i64 {
    debug_assert!(q.is_positive());
    let bits = |b: &BigInt| b.bits() as i64;
    let mut k = bits(q.numer()) - bits(q.denom());
    let two = int(2);
    loop {
        let p = pow2(k);
        if p > *q {
            k -= 1;
        } else if &p * &two <= *q {
            k += 1;
        } else {
            return k;
        }
    }
}

pub fn pow2(k: i64) -> Rational {
    let base = num_traits::pow(BigInt::from(2), k.unsigned_abs() as usize);
    if k >= 0 {
        Rational::from_integer(base)
    } else {
        Rational::new(BigInt::one(), base)
    }
}

/// Serde adapter: rationals as `"p/q"` strings, accepting integers on input.
pub mod as_string {
    use super::Rational;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(q: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(q)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let raw = Literal::deserialize(d)?;
        raw.into_rational().map_err(de::Error::custom)
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    pub(crate) enum Literal {
        Int(i64),
        Text(String),
    }

    impl Literal {
        pub(crate) fn into_rational(self) -> crate::error::Result<Rational> {
            match self {
                Literal::Int(n) => Ok(super::int(n)),
                Literal::Text(s) => super::parse(&s),
            }
        }
    }
}

/// Serde adapter for `Option<Rational>`; `null` or a missing field is `None`.
pub mod as_opt_string {
    use super::Rational;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(q: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
        match q {
            Some(q) => s.collect_str(q),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational>, D::Error> {
        let raw = Option::<super::as_string::Literal>::deserialize(d)?;
        raw.map(|l| l.into_rational().map_err(de::Error::custom))
            .transpose()
    }
}

/// Serde adapter for slices of rationals.
pub mod vec_as_string {
    use super::Rational;
    use serde::ser::SerializeSeq;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for q in v {
            seq.serialize_element(&q.to_string())?;
        }
        seq.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_integers_and_decimals() {
        assert_eq!(parse("3/10").unwrap(), frac(3, 10));
        assert_eq!(parse("6/20").unwrap(), frac(3, 10));
        assert_eq!(parse("-4").unwrap(), int(-4));
        assert_eq!(parse("0.3").unwrap(), frac(3, 10));
        assert_eq!(parse("-1.25").unwrap(), frac(-5, 4));
        assert_eq!(parse(" 1/-2 ").unwrap(), frac(-1, 2));
    }

    #[test]
    fn zero_denominator_is_rejected() {
        let err = parse("1/0").unwrap_err();
        assert!(err.to_string().contains("zero denominator"), "{err}");
    }

    #[test]
    fn malformed_literals_are_rejected() {
        for bad in ["", "a/2", "1/", "1.", "1.2.3", "--1", "1e5"] {
            assert!(parse(bad).is_err(), "{bad:?} parsed");
        }
    }

    #[test]
    fn lowest_terms_display() {
        assert_eq!(frac(4, 8).to_string(), "1/2");
        assert_eq!(frac(4, -8).to_string(), "-1/2");
        assert_eq!(int(3).to_string(), "3");
    }

    #[test]
    fn log2_floor() {
        assert_eq!(floor_log2(&frac(1, 2)), -1);
        assert_eq!(floor_log2(&frac(3, 4)), -1);
        assert_eq!(floor_log2(&int(1)), 0);
        assert_eq!(floor_log2(&int(5)), 2);
        assert_eq!(floor_log2(&frac(1, 1024)), -10);
    }
}
