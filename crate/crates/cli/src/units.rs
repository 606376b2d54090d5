//! Unit-suffixed quantities in parameter files, e.g. `"9.2 aW"`.

use std::fmt;
use std::marker::PhantomData;

use serde::de::{self, Deserializer, Visitor};
use serde::Deserialize;

/// A physical dimension with a canonical unit and accepted suffixes.
pub trait Dimension {
    const NAME: &'static str;
    /// (suffix, factor to the canonical unit)
    const UNITS: &'static [(&'static str, f64)];
}

#[derive(Debug, Clone, Copy)]
pub struct Frequency;
#[derive(Debug, Clone, Copy)]
pub struct Power;
#[derive(Debug, Clone, Copy)]
pub struct Time;
#[derive(Debug, Clone, Copy)]
pub struct Current;

/// Canonical unit MHz.
impl Dimension for Frequency {
    const NAME: &'static str = "frequency";
    const UNITS: &'static [(&'static str, f64)] = &[("Hz", 1e-6), ("kHz", 1e-3), ("MHz", 1.0), ("GHz", 1e3)];
}

/// Canonical unit W.
impl Dimension for Power {
    const NAME: &'static str = "power";
    const UNITS: &'static [(&'static str, f64)] = &[
        ("W", 1.0),
        ("mW", 1e-3),
        ("uW", 1e-6),
        ("µW", 1e-6),
        ("nW", 1e-9),
        ("pW", 1e-12),
        ("fW", 1e-15),
        ("aW", 1e-18),
    ];
}

/// Canonical unit µs.
impl Dimension for Time {
    const NAME: &'static str = "time";
    const UNITS: &'static [(&'static str, f64)] =
        &[("s", 1e6), ("ms", 1e3), ("us", 1.0), ("µs", 1.0), ("ns", 1e-3)];
}

/// Canonical unit mA.
impl Dimension for Current {
    const NAME: &'static str = "current";
    const UNITS: &'static [(&'static str, f64)] = &[("A", 1e3), ("mA", 1.0), ("uA", 1e-3), ("µA", 1e-3)];
}

/// Split `"1.5 MHz"` / `"1.5MHz"` into number and unit.
fn split(s: &str) -> Result<(f64, &str), String> {
    let s = s.trim();
    let end = s
        .char_indices()
        .find(|&(i, c)| c.is_alphabetic() && !(matches!(c, 'e' | 'E') && next_is_exponent(&s[i + 1..])))
        .map(|(i, _)| i)
        .ok_or_else(|| format!("`{s}` has no unit; units are mandatory"))?;
    let (num, unit) = s.split_at(end);
    let value: f64 = num.trim().parse().map_err(|_| format!("`{s}`: cannot parse `{}` as a number", num.trim()))?;
    if !value.is_finite() {
        return Err(format!("`{s}` is not finite"));
    }
    Ok((value, unit.trim()))
}

fn next_is_exponent(rest: &str) -> bool {
    let mut chars = rest.chars();
    match chars.next() {
        Some(c) if c.is_ascii_digit() => true,
        Some('+') | Some('-') => chars.next().is_some_and(|c| c.is_ascii_digit()),
        _ => false,
    }
}

fn factor<D: Dimension>(unit: &str) -> Result<f64, String> {
    D::UNITS.iter().find(|(u, _)| *u == unit).map(|(_, f)| *f).ok_or_else(|| {
        let known: Vec<&str> = D::UNITS.iter().map(|(u, _)| *u).collect();
        format!("unknown {} unit `{unit}` (expected one of {})", D::NAME, known.join(", "))
    })
}

/// Parse a value of dimension `D` into its canonical unit.
pub fn parse<D: Dimension>(s: &str) -> Result<f64, String> {
    let (v, unit) = split(s)?;
    Ok(v * factor::<D>(unit)?)
}

/// Parse a rate `N/D`, e.g. `"47.6 MHz/mA"`, into canonical units of both.
pub fn parse_ratio<N: Dimension, D: Dimension>(s: &str) -> Result<f64, String> {
    let (v, unit) = split(s)?;
    let (num, den) = unit
        .split_once('/')
        .ok_or_else(|| format!("`{s}`: expected a {}/{} unit", N::NAME, D::NAME))?;
    Ok(v * factor::<N>(num.trim())? / factor::<D>(den.trim())?)
}

/// A quantity stored in the canonical unit of `D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity<D> {
    pub value: f64,
    _dim: PhantomData<D>,
}

impl<D> Quantity<D> {
    pub fn new(value: f64) -> Self {
        Self { value, _dim: PhantomData }
    }
}

struct QuantityVisitor<D>(PhantomData<D>);

impl<D: Dimension> Visitor<'_> for QuantityVisitor<D> {
    type Value = Quantity<D>;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "a {} string with a unit, e.g. \"1.5 {}\"", D::NAME, D::UNITS[0].0)
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
        parse::<D>(v).map(Quantity::new).map_err(E::custom)
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Self::Value, E> {
        Err(E::custom(format!("bare number {v} has no unit; write e.g. \"{v} {}\"", D::UNITS[0].0)))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
        self.visit_f64(v as f64)
    }
}

impl<'de, D: Dimension> Deserialize<'de> for Quantity<D> {
    fn deserialize<De: Deserializer<'de>>(d: De) -> Result<Self, De::Error> {
        d.deserialize_any(QuantityVisitor(PhantomData))
    }
}

/// Frequency per current, canonical MHz/mA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningRate(pub f64);

impl<'de> Deserialize<'de> for TuningRate {
    fn deserialize<De: Deserializer<'de>>(d: De) -> Result<Self, De::Error> {
        let s = String::deserialize(d)?;
        parse_ratio::<Frequency, Current>(&s).map(TuningRate).map_err(de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffixes() {
        assert!((parse::<Frequency>("10.44916 GHz").unwrap() - 10449.16).abs() < 1e-9);
        assert_eq!(parse::<Frequency>("-0.38MHz").unwrap(), -0.38);
        assert!((parse::<Power>("9.2 aW").unwrap() - 9.2e-18).abs() < 1e-30);
        assert_eq!(parse::<Time>("0.63 us").unwrap(), 0.63);
        assert_eq!(parse::<Current>("-5.02 mA").unwrap(), -5.02);
        assert!((parse::<Power>("1e-3 fW").unwrap() - 1e-18).abs() < 1e-30);
        assert!((parse_ratio::<Frequency, Current>("47.6 MHz/mA").unwrap() - 47.6).abs() < 1e-12);
        assert!((parse_ratio::<Frequency, Current>("47.6 GHz/A").unwrap() - 47.6).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_units() {
        assert!(parse::<Frequency>("1.5").unwrap_err().contains("mandatory"));
        assert!(parse::<Frequency>("1.5 aW").unwrap_err().contains("unknown frequency unit"));
        assert!(parse::<Power>("x fW").is_err());
    }
}
