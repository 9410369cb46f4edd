//! Exact plan costs.

use std::fmt;

use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serializer};

/// Exact non-negative action and plan cost.
pub type Cost = Rational64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NumberError(pub String);

impl fmt::Display for NumberError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid number {:?}", self.0)
    }
}

impl std::error::Error for NumberError {}

/// Parse `12`, `-3`, `0.25` or `1/3` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Cost, NumberError> {
    let err = || NumberError(text.to_string());
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    if body.is_empty() {
        return Err(err());
    }
    let value = if let Some((num, den)) = body.split_once('/') {
        let num = parse_digits(num).ok_or_else(err)?;
        let den = parse_digits(den).ok_or_else(err)?;
        if den == 0 {
            return Err(err());
        }
        Cost::new(num, den)
    } else {
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if int.is_empty() && frac.is_empty() {
            return Err(err());
        }
        let int = if int.is_empty() { 0 } else { parse_digits(int).ok_or_else(err)? };
        let frac_digits = frac.trim_end_matches('0');
        if !frac.bytes().all(|b| b.is_ascii_digit()) || frac_digits.len() > 17 {
            return Err(err());
        }
        let den = 10i64.pow(frac_digits.len() as u32);
        let frac_value = if frac_digits.is_empty() { 0 } else { parse_digits(frac_digits).ok_or_else(err)? };
        let numer = int
            .checked_mul(den)
            .and_then(|v| v.checked_add(frac_value))
            .ok_or_else(err)?;
        Cost::new(numer, den)
    };
    Ok(if negative { -value } else { value })
}

fn parse_digits(s: &str) -> Option<i64> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse::<i64>().ok()
}

/// Exact decimal when the denominator allows it, `n/d` otherwise.
pub fn format_rational(value: &Cost) -> String {
    if value.is_integer() {
        return value.numer().to_string();
    }
    let mut den = *value.denom();
    let (mut twos, mut fives) = (0u32, 0u32);
    while den % 2 == 0 {
        den /= 2;
        twos += 1;
    }
    while den % 5 == 0 {
        den /= 5;
        fives += 1;
    }
    if den != 1 || twos.max(fives) > 18 {
        return format!("{}/{}", value.numer(), value.denom());
    }
    let digits = twos.max(fives);
    let scale = 10i128.pow(digits);
    let scaled = *value.numer() as i128 * scale / *value.denom() as i128;
    let sign = if scaled < 0 { "-" } else { "" };
    let abs = scaled.unsigned_abs();
    let int = abs / scale as u128;
    let frac = abs % scale as u128;
    format!("{sign}{int}.{frac:0width$}", width = digits as usize)
}

pub fn to_f64(value: &Cost) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

pub fn is_negative(value: &Cost) -> bool {
    *value < Cost::zero()
}

/// `serde(with = ...)` adapter writing costs as strings such as `"3/2"`.
pub mod serde_cost {
    use super::*;

    pub fn serialize<S: Serializer>(value: &Cost, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Cost, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Int(i64),
        }
        match Repr::deserialize(d)? {
            Repr::Text(t) => parse_rational(&t).map_err(serde::de::Error::custom),
            Repr::Int(i) => Ok(Cost::from_integer(i)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_forms() {
        assert_eq!(parse_rational("3").unwrap(), Cost::from_integer(3));
        assert_eq!(parse_rational("0.25").unwrap(), Cost::new(1, 4));
        assert_eq!(parse_rational(".5").unwrap(), Cost::new(1, 2));
        assert_eq!(parse_rational("2.").unwrap(), Cost::from_integer(2));
        assert_eq!(parse_rational("1/3").unwrap(), Cost::new(1, 3));
        assert_eq!(parse_rational("-1.5").unwrap(), Cost::new(-3, 2));
        for bad in ["", "-", ".", "1/0", "1e5", "abc", "1.2.3", "99999999999999999999"] {
            assert!(parse_rational(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn formats_exactly() {
        assert_eq!(format_rational(&Cost::new(1, 4)), "0.25");
        assert_eq!(format_rational(&Cost::new(-3, 2)), "-1.5");
        assert_eq!(format_rational(&Cost::new(1, 3)), "1/3");
        assert_eq!(format_rational(&Cost::from_integer(7)), "7");
    }

    proptest! {
        #[test]
        fn format_parse_round_trip(n in -100_000i64..100_000, d in 1i64..2_000) {
            let v = Cost::new(n, d);
            prop_assert_eq!(parse_rational(&format_rational(&v)).unwrap(), v);
        }
    }
}
