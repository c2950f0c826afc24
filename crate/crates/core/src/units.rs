//! Unit-suffixed quantity parsing and the Hz <-> rad/s boundary.
//!
//! Every frequency or time that enters from outside the crate carries an
//! explicit suffix. A bare number is rejected.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Cyclic frequency (Hz) to angular frequency (rad/s).
pub fn hz_to_rad_per_s(hz: f64) -> f64 {
    2.0 * PI * hz
}

/// Angular frequency (rad/s) to cyclic frequency (Hz).
pub fn rad_per_s_to_hz(w: f64) -> f64 {
    w / (2.0 * PI)
}

/// A frequency as written by the user, kept with its unit so that no
/// 2π ambiguity survives parsing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Frequency {
    Cyclic(f64),
    Angular(f64),
}

impl Frequency {
    pub fn as_hz(self) -> f64 {
        match self {
            Frequency::Cyclic(hz) => hz,
            Frequency::Angular(w) => rad_per_s_to_hz(w),
        }
    }

    pub fn as_rad_per_s(self) -> f64 {
        match self {
            Frequency::Cyclic(hz) => hz_to_rad_per_s(hz),
            Frequency::Angular(w) => w,
        }
    }
}

fn split_number(input: &str) -> Result<(f64, &str)> {
    let s = input.trim();
    let end = s
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || c == '.'
                || c == '+'
                || c == '-'
                || ((c == 'e' || c == 'E')
                    && s[i + 1..]
                        .chars()
                        .next()
                        .is_some_and(|n| n.is_ascii_digit() || n == '-' || n == '+')))
        })
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    let (num, unit) = s.split_at(end);
    let value: f64 = num.parse().map_err(|_| Error::Parse {
        input: input.to_string(),
        reason: "expected a number followed by a unit".into(),
    })?;
    if !value.is_finite() {
        return Err(Error::Parse {
            input: input.to_string(),
            reason: "value is not finite".into(),
        });
    }
    Ok((value, unit.trim()))
}

fn missing_unit(input: &str, allowed: &str) -> Error {
    Error::Parse {
        input: input.to_string(),
        reason: format!("missing or unknown unit suffix (expected one of {allowed})"),
    }
}

const FREQ_UNITS: &str = "Hz, kHz, MHz, GHz, rad/s";

/// Parse `"2.3kHz"`, `"2.3e3 rad/s"`, `"15.1 MHz"`.
pub fn parse_frequency(input: &str) -> Result<Frequency> {
    let (v, unit) = split_number(input)?;
    Ok(match unit {
        "Hz" => Frequency::Cyclic(v),
        "kHz" => Frequency::Cyclic(v * 1e3),
        "MHz" => Frequency::Cyclic(v * 1e6),
        "GHz" => Frequency::Cyclic(v * 1e9),
        "rad/s" => Frequency::Angular(v),
        _ => return Err(missing_unit(input, FREQ_UNITS)),
    })
}

/// Parse a time with suffix `s`, `ms`, `us`/`µs`, `ns`; returns seconds.
pub fn parse_time(input: &str) -> Result<f64> {
    let (v, unit) = split_number(input)?;
    let scale = match unit {
        "s" => 1.0,
        "ms" => 1e-3,
        "us" | "µs" | "μs" => 1e-6,
        "ns" => 1e-9,
        _ => return Err(missing_unit(input, "s, ms, us, ns")),
    };
    Ok(v * scale)
}

/// Parse a magnetic field with suffix `T`, `mT`, `uT`; returns tesla.
pub fn parse_field(input: &str) -> Result<f64> {
    let (v, unit) = split_number(input)?;
    let scale = match unit {
        "T" => 1.0,
        "mT" => 1e-3,
        "uT" | "µT" => 1e-6,
        _ => return Err(missing_unit(input, "T, mT, uT")),
    };
    Ok(v * scale)
}

/// Parse an angle with suffix `deg` or `rad`; returns radians.
pub fn parse_angle(input: &str) -> Result<f64> {
    let (v, unit) = split_number(input)?;
    match unit {
        "deg" | "°" => Ok(v.to_radians()),
        "rad" => Ok(v),
        _ => Err(missing_unit(input, "deg, rad")),
    }
}

/// Parse a gyromagnetic ratio such as `"403 MHz/T"`; returns Hz/T.
pub fn parse_gyro(input: &str) -> Result<f64> {
    let s = input.trim();
    let Some(freq) = s.strip_suffix("/T") else {
        return Err(missing_unit(input, "<frequency unit>/T"));
    };
    Ok(parse_frequency(freq)?.as_hz())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_conversion_round_trips() {
        assert_eq!(hz_to_rad_per_s(1.0), 2.0 * PI);
        let w = 2.3e3;
        assert!((hz_to_rad_per_s(rad_per_s_to_hz(w)) - w).abs() < 1e-12);
        // 2.3 kHz cyclic is 14.45e3 rad/s, not 2.3e3 rad/s.
        let f = parse_frequency("2.3kHz").unwrap();
        assert!((f.as_rad_per_s() - 2.0 * PI * 2.3e3).abs() < 1e-9);
        let f = parse_frequency("2.3e3 rad/s").unwrap();
        assert_eq!(f.as_rad_per_s(), 2.3e3);
    }

    #[test]
    fn suffixes_are_mandatory() {
        assert!(parse_frequency("2300").is_err());
        assert!(parse_frequency("2300 hz").is_err());
        assert!(parse_time("172").is_err());
        assert!(parse_angle("45").is_err());
        assert!(parse_field("0.985").is_err());
    }

    #[test]
    fn parses_common_forms() {
        assert_eq!(parse_frequency("15.1MHz").unwrap(), Frequency::Cyclic(15.1e6));
        assert_eq!(parse_frequency("0Hz").unwrap(), Frequency::Cyclic(0.0));
        assert!((parse_time("172us").unwrap() - 172e-6).abs() < 1e-18);
        assert!((parse_time("1.5e-3 s").unwrap() - 1.5e-3).abs() < 1e-18);
        assert!((parse_time("3µs").unwrap() - 3e-6).abs() < 1e-18);
        assert!((parse_field("0.985T").unwrap() - 0.985).abs() < 1e-15);
        assert!((parse_angle("45deg").unwrap() - PI / 4.0).abs() < 1e-15);
        assert!((parse_gyro("403 MHz/T").unwrap() - 403e6).abs() < 1e-6);
        assert!(parse_gyro("403 MHz").is_err());
    }
}
