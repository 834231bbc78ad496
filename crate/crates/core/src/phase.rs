//! Phase values that accept numeric literals or simple `pi` expressions.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// An angle in radians. In config documents it may be written as a number or
/// as a string such as `"pi/2"`, `"-pi/4"`, `"3*pi/4"` or `"0.25"`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Phase(pub f64);

fn parse_number(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|_| format!("`{s}` is not a number"))
}

/// Evaluates `[+-][coef[*]]pi[/den]` or a plain number.
pub fn parse_phase_expr(input: &str) -> Result<f64, String> {
    let s: String = input.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return Err("empty phase expression".into());
    }
    let (sign, body) = match s.as_bytes()[0] {
        b'-' => (-1.0, &s[1..]),
        b'+' => (1.0, &s[1..]),
        _ => (1.0, &s[..]),
    };
    if body.starts_with(['+', '-']) {
        return Err(format!("`{input}` has a repeated sign"));
    }
    let Some(at) = body.find("pi") else {
        return parse_number(body).map(|x| sign * x);
    };
    let head = body[..at].trim_end_matches('*');
    let tail = &body[at + 2..];
    let coef = if head.is_empty() { 1.0 } else { parse_number(head)? };
    let value = if tail.is_empty() {
        coef * PI
    } else if let Some(den) = tail.strip_prefix('/') {
        let den = parse_number(den)?;
        if den == 0.0 {
            return Err("division by zero".into());
        }
        coef * PI / den
    } else {
        return Err(format!("unexpected `{tail}` after pi"));
    };
    if value.is_finite() {
        Ok(sign * value)
    } else {
        Err(format!("`{input}` is not finite"))
    }
}

impl FromStr for Phase {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        parse_phase_expr(s).map(Phase)
    }
}

impl Serialize for Phase {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

struct PhaseVisitor;

impl<'de> Visitor<'de> for PhaseVisitor {
    type Value = Phase;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a number or a phase expression such as \"pi/2\"")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Phase, E> {
        Ok(Phase(v))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Phase, E> {
        Ok(Phase(v as f64))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Phase, E> {
        Ok(Phase(v as f64))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Phase, E> {
        parse_phase_expr(v).map(Phase).map_err(E::custom)
    }
}

impl<'de> Deserialize<'de> for Phase {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Phase, D::Error> {
        d.deserialize_any(PhaseVisitor)
    }
}
