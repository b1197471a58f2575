//! Decimal helpers shared by the parser, layout and metrics.

use alloc::string::{String, ToString};

/// Canonical text for a quantity: shortest round-trip form, no trailing
/// zeros, no exponent, and `-0` folded to `0`.
pub fn format_decimal(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    alloc::format!("{value}")
}

/// Returns the value as an integer when it is finite and has no fractional part.
pub fn as_integer(value: f64) -> Option<i64> {
    if !value.is_finite() || libm::trunc(value) != value || libm::fabs(value) > 9.0e15 {
        return None;
    }
    Some(value as i64)
}

/// Strict decimal literal: optional sign, digits, optional fraction.
pub fn parse_decimal(text: &str) -> Option<f64> {
    let body = text.strip_prefix(['-', '+']).unwrap_or(text);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
    if !digits(int) {
        return None;
    }
    match frac {
        Some(f) if f.is_empty() || !digits(f) => return None,
        None if int.is_empty() => return None,
        _ => {}
    }
    if int.is_empty() && frac.is_none_or(str::is_empty) {
        return None;
    }
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Total-order key so quantity multisets can be sorted and compared.
pub(crate) fn canonical_bits(value: f64) -> u64 {
    if value == 0.0 {
        0
    } else {
        value.to_bits()
    }
}
