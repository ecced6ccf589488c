//! Lengths and times with explicit unit suffixes.

use std::fmt;

use serde::Deserialize;

fn is_unit_char(c: char) -> bool {
    c.is_ascii_alphabetic() || c == 'µ'
}

/// Number and trailing unit letters; an exponent like `1e-3` stays with the number.
fn split(s: &str) -> Option<(f64, &str)> {
    let s = s.trim();
    let number = s.trim_end_matches(is_unit_char);
    let unit = &s[number.len()..];
    if unit.is_empty() {
        return None;
    }
    Some((number.trim().parse().ok()?, unit))
}

/// Parses `"0.743mm"`, `"50um"`, `"1.2e-3 m"` into metres.
pub fn parse_length(s: &str) -> Result<f64, String> {
    let (v, unit) = split(s).ok_or_else(|| format!("`{s}` is not a length (expected a number with m, mm or um)"))?;
    let scale = match unit {
        "m" => 1.0,
        "mm" => 1e-3,
        "um" | "µm" => 1e-6,
        _ => return Err(format!("unknown length unit `{unit}` in `{s}` (use m, mm or um)")),
    };
    finite(v * scale, s)
}

/// Parses `"500ms"` or `"0.5s"` into seconds.
pub fn parse_time(s: &str) -> Result<f64, String> {
    let (v, unit) = split(s).ok_or_else(|| format!("`{s}` is not a time (expected a number with s or ms)"))?;
    let scale = match unit {
        "s" => 1.0,
        "ms" => 1e-3,
        _ => return Err(format!("unknown time unit `{unit}` in `{s}` (use s or ms)")),
    };
    finite(v * scale, s)
}

fn finite(v: f64, s: &str) -> Result<f64, String> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

/// `"40.1x3.86mm"` (one trailing unit for both) or `"40.1mmx3.86mm"`.
pub fn parse_extent(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(['x', 'X', '*'])
        .ok_or_else(|| format!("`{s}` is not WIDTHxHEIGHT"))?;
    let b_len = parse_length(b)?;
    let a_len = match parse_length(a) {
        Ok(v) => v,
        Err(_) => {
            // borrow the unit of the second number
            let b = b.trim();
            let unit = &b[b.trim_end_matches(is_unit_char).len()..];
            parse_length(&format!("{}{unit}", a.trim()))?
        }
    };
    Ok((a_len, b_len))
}

/// Length read from a scenario file; must carry a unit.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(try_from = "String")]
pub struct Length(pub f64);

impl TryFrom<String> for Length {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        parse_length(&s).map(Length)
    }
}

impl fmt::Display for Length {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} mm", self.0 * 1e3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(try_from = "String")]
pub struct Time(pub f64);

impl TryFrom<String> for Time {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        parse_time(&s).map(Time)
    }
}
