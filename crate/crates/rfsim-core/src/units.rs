//! Unit-suffixed quantity parsing for the configuration file.
//!
//! Values are either bare numbers (already in SI base units) or strings
//! with an explicit suffix: `"930 nm"`, `"2.5 GHz"`, `"50 ns"`. Frequencies
//! parse to Hz; the config layer decides which fields are converted to
//! angular rates.

use serde::de::{self, Deserializer};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Time,
    Frequency,
    Dimensionless,
}

fn suffix_factor(dim: Dimension, unit: &str) -> Option<f64> {
    if unit.is_empty() {
        return Some(1.0); // bare number: SI base units
    }
    match dim {
        Dimension::Length => match unit {
            "m" => Some(1.0),
            "mm" => Some(1e-3),
            "um" | "µm" => Some(1e-6),
            "nm" => Some(1e-9),
            "pm" => Some(1e-12),
            _ => None,
        },
        Dimension::Time => match unit {
            "s" => Some(1.0),
            "ms" => Some(1e-3),
            "us" | "µs" => Some(1e-6),
            "ns" => Some(1e-9),
            "ps" => Some(1e-12),
            _ => None,
        },
        Dimension::Frequency => match unit {
            "Hz" => Some(1.0),
            "kHz" => Some(1e3),
            "MHz" => Some(1e6),
            "GHz" => Some(1e9),
            "THz" => Some(1e12),
            _ => None,
        },
        Dimension::Dimensionless => None,
    }
}

/// Parse `"<number> [unit]"` into SI base units for the given dimension.
pub fn parse_quantity(s: &str, dim: Dimension) -> Result<f64, String> {
    let t = s.trim();
    let split = t
        .char_indices()
        .find(|(_, c)| c.is_alphabetic() && *c != 'e' && *c != 'E')
        .map(|(i, _)| i)
        .unwrap_or(t.len());
    let (num_part, unit_part) = t.split_at(split);
    let value: f64 = num_part
        .trim()
        .parse()
        .map_err(|_| format!("cannot parse number in {s:?}"))?;
    let factor = suffix_factor(dim, unit_part.trim())
        .ok_or_else(|| format!("unit {:?} not valid for {:?}", unit_part.trim(), dim))?;
    Ok(value * factor)
}

fn deserialize_dim<'de, D: Deserializer<'de>>(d: D, dim: Dimension) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Str(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Str(s) => parse_quantity(&s, dim).map_err(de::Error::custom),
    }
}

/// Length in meters; accepts `"2.5 um"` style strings or bare numbers.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
#[serde(transparent)]
pub struct Length(pub f64);

/// Time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
#[serde(transparent)]
pub struct Time(pub f64);

/// Ordinary (non-angular) frequency in Hz.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
#[serde(transparent)]
pub struct Frequency(pub f64);

impl<'de> Deserialize<'de> for Length {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        deserialize_dim(d, Dimension::Length).map(Length)
    }
}

impl<'de> Deserialize<'de> for Time {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        deserialize_dim(d, Dimension::Time).map(Time)
    }
}

impl<'de> Deserialize<'de> for Frequency {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        deserialize_dim(d, Dimension::Frequency).map(Frequency)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs()
    }

    #[test]
    fn parses_suffixes() {
        assert!(close(parse_quantity("930 nm", Dimension::Length).unwrap(), 930e-9));
        assert!(close(parse_quantity("2.5GHz", Dimension::Frequency).unwrap(), 2.5e9));
        assert!(close(parse_quantity("50 ns", Dimension::Time).unwrap(), 50e-9));
        assert!(close(parse_quantity("1e-3", Dimension::Time).unwrap(), 1e-3));
        assert!(close(parse_quantity("1.5e9 Hz", Dimension::Frequency).unwrap(), 1.5e9));
    }

    #[test]
    fn rejects_wrong_dimension() {
        assert!(parse_quantity("10 ns", Dimension::Length).is_err());
        assert!(parse_quantity("banana", Dimension::Time).is_err());
    }
}
