//! Exact decimal token amounts in base units (10^18 per whole token).

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::Zero;

use super::ChainError;

pub const DECIMALS: usize = 18;

pub fn unit() -> BigUint {
    BigUint::from(10u32).pow(DECIMALS as u32)
}

/// Parses `"12"`, `"0.005"`, `"1.000000000000000001"`. No sign, no exponent,
/// no more than 18 fractional digits.
pub fn parse_amount(text: &str) -> Result<BigUint, ChainError> {
    let bad = || ChainError::MalformedAmount(text.to_string());
    let (whole, frac) = match text.split_once('.') {
        Some((w, f)) => (w, Some(f)),
        None => (text, None),
    };
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(whole) || frac.is_some_and(|f| !digits(f) || f.len() > DECIMALS) {
        return Err(bad());
    }
    let frac = frac.unwrap_or("");
    let padded = format!("{whole}{frac}{}", "0".repeat(DECIMALS - frac.len()));
    BigUint::parse_bytes(padded.as_bytes(), 10).ok_or_else(bad)
}

/// Parses a plain base-unit integer.
pub fn parse_base_units(text: &str) -> Result<BigUint, ChainError> {
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ChainError::MalformedAmount(text.to_string()));
    }
    BigUint::parse_bytes(text.as_bytes(), 10).ok_or_else(|| ChainError::MalformedAmount(text.to_string()))
}

/// Always prints all 18 fractional digits: `10^16` → `"0.010000000000000000"`.
pub fn format_amount(value: &BigUint) -> String {
    let (whole, frac) = value.div_rem(&unit());
    let frac = if frac.is_zero() { String::new() } else { frac.to_str_radix(10) };
    format!("{whole}.{frac:0>width$}", width = DECIMALS)
}

/// Currency codes are 2 to 6 uppercase ASCII letters.
pub fn validate_currency(code: &str) -> Result<(), ChainError> {
    if (2..=6).contains(&code.len()) && code.bytes().all(|b| b.is_ascii_uppercase()) {
        Ok(())
    } else {
        Err(ChainError::InvalidCurrency(code.to_string()))
    }
}

/// serde adapter storing big integers as decimal strings.
pub(crate) mod decimal {
    use num_bigint::BigUint;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_str_radix(10))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let text = String::deserialize(d)?;
        super::parse_base_units(&text).map_err(D::Error::custom)
    }
}
