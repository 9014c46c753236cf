//! Component value units and exact rational formatting.
//!
//! Values travel as `Ratio<i64>` in SI units. Canonical text is a plain
//! decimal (`5`, `0.005`, `-2.5`) so that emitted decks are byte-stable and
//! re-parse to the identical rational.

use crate::Rat;
use serde::{Deserialize, Serialize};

/// Annotation unit attached to a sampled component value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    Ohm,
    KiloOhm,
    Volt,
    Ampere,
    MilliAmpere,
    /// Dimensionless gain of a controlled source.
    Gain,
}

impl Unit {
    /// Multiplier taking an annotated magnitude to SI units.
    pub fn si_scale(self) -> Rat {
        match self {
            Unit::Ohm | Unit::Volt | Unit::Ampere | Unit::Gain => Rat::new(1, 1),
            Unit::KiloOhm => Rat::new(1000, 1),
            Unit::MilliAmpere => Rat::new(1, 1000),
        }
    }

    /// Suffix used in diagram annotations.
    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Ohm => "\\Omega",
            Unit::KiloOhm => "k\\Omega",
            Unit::Volt => "V",
            Unit::Ampere => "A",
            Unit::MilliAmpere => "mA",
            Unit::Gain => "",
        }
    }
}

/// Formats a rational as canonical decimal text.
///
/// Terminating decimals are written exactly with no trailing zeros; the rare
/// non-terminating (or astronomically scaled) rational falls back to the
/// shortest f64 round-trip form.
pub fn format_rat(r: Rat) -> String {
    let r = r.reduced();
    let mut den = *r.denom();
    let neg = *r.numer() < 0;
    let num = r.numer().unsigned_abs();
    if den == 1 {
        return if neg { format!("-{num}") } else { num.to_string() };
    }
    let float_fallback = || format!("{}", *r.numer() as f64 / *r.denom() as f64);
    // Count factors of 2 and 5; anything else does not terminate.
    let (mut twos, mut fives) = (0u32, 0u32);
    while den % 2 == 0 {
        den /= 2;
        twos += 1;
    }
    while den % 5 == 0 {
        den /= 5;
        fives += 1;
    }
    if den != 1 {
        return float_fallback();
    }
    let digits = twos.max(fives);
    // Scale the numerator so the denominator becomes 10^digits.
    let mut scaled = num as u128;
    for _ in 0..digits.saturating_sub(twos) {
        let Some(next) = scaled.checked_mul(2) else { return float_fallback() };
        scaled = next;
    }
    for _ in 0..digits.saturating_sub(fives) {
        let Some(next) = scaled.checked_mul(5) else { return float_fallback() };
        scaled = next;
    }
    let s = scaled.to_string();
    let digits = digits as usize;
    let (int_part, frac_part) = if s.len() > digits {
        (s[..s.len() - digits].to_string(), s[s.len() - digits..].to_string())
    } else {
        ("0".to_string(), format!("{s:0>digits$}"))
    };
    let frac_part = frac_part.trim_end_matches('0');
    let body = if frac_part.is_empty() {
        int_part
    } else {
        format!("{int_part}.{frac_part}")
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

/// Parses decimal text (optionally with an exponent) into an exact rational.
pub fn parse_decimal(text: &str) -> Option<Rat> {
    let text = text.trim();
    let (text, exp) = match text.find(['e', 'E']) {
        Some(i) => {
            let e: i32 = text[i + 1..].parse().ok()?;
            (&text[..i], e)
        }
        None => (text, 0),
    };
    let (neg, text) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let (int_part, frac_part) = match text.split_once('.') {
        Some((a, b)) => (a, b),
        None => (text, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let mantissa: i64 = format!("{int_part}{frac_part}").parse().ok()?;
    let mut value = Rat::new(mantissa, 1) / pow10(frac_part.len() as i32)?;
    value *= pow10(exp)?;
    Some(if neg { -value } else { value })
}

fn pow10(e: i32) -> Option<Rat> {
    let p = 10i64.checked_pow(e.unsigned_abs())?;
    Some(if e >= 0 { Rat::new(p, 1) } else { Rat::new(1, p) })
}

/// Serde adapter storing rationals as canonical strings (`"5"`, `"-1/3"`).
pub mod rat_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rat, s: S) -> Result<S::Ok, S::Error> {
        let r = r.reduced();
        if *r.denom() == 1 {
            s.serialize_str(&r.numer().to_string())
        } else {
            s.serialize_str(&format!("{}/{}", r.numer(), r.denom()))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rat, D::Error> {
        let text = String::deserialize(d)?;
        parse_rat_str(&text).ok_or_else(|| serde::de::Error::custom(format!("bad rational `{text}`")))
    }

    pub fn parse_rat_str(text: &str) -> Option<Rat> {
        match text.split_once('/') {
            Some((n, d)) => {
                let n: i64 = n.trim().parse().ok()?;
                let d: i64 = d.trim().parse().ok()?;
                if d == 0 {
                    return None;
                }
                Some(Rat::new(n, d))
            }
            None => parse_decimal(text),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_integers_and_terminating_decimals() {
        assert_eq!(format_rat(Rat::new(5000, 1)), "5000");
        assert_eq!(format_rat(Rat::new(1, 100)), "0.01");
        assert_eq!(format_rat(Rat::new(1, 200)), "0.005");
        assert_eq!(format_rat(Rat::new(-5, 2)), "-2.5");
        assert_eq!(format_rat(Rat::new(0, 1)), "0");
    }

    #[test]
    fn parse_is_exact_inverse_on_terminating_decimals() {
        for r in [Rat::new(7, 8), Rat::new(-3, 40), Rat::new(123, 1), Rat::new(1, 1000)] {
            assert_eq!(parse_decimal(&format_rat(r)), Some(r));
        }
        assert_eq!(parse_decimal("1e3"), Some(Rat::new(1000, 1)));
        assert_eq!(parse_decimal("2.5e-2"), Some(Rat::new(1, 40)));
        assert_eq!(parse_decimal("abc"), None);
    }

    #[test]
    fn non_terminating_falls_back_to_float_text() {
        let s = format_rat(Rat::new(1, 3));
        let reparsed = parse_decimal(&s).unwrap();
        // Stable under a second round: emit(parse(emit(x))) == emit(parse(x)).
        assert_eq!(format_rat(reparsed), s);
    }

    #[test]
    fn extreme_smooth_denominators_do_not_overflow() {
        // 5^62 does not fit u128; formatting must fall back, not panic.
        let s = format_rat(Rat::new(1, 1i64 << 62));
        assert!(s.starts_with("0.0000"), "expected float fallback, got {s}");
        assert_eq!(format_rat(Rat::new(i64::MAX, 2)), "4611686018427387903.5");
    }
}
