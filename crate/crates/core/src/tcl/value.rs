// SPDX-License-Identifier: Apache-2.0

use std::fmt;

/// A Tcl value. Everything is a string; numeric and boolean readings are
/// computed on demand and fail loudly instead of defaulting to zero.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TclValue(String);

/// A numeric reading of a Tcl value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Number {
    Int(i64),
    Float(f64),
}

impl Number {
    pub fn as_f64(self) -> f64 {
        match self {
            Number::Int(i) => i as f64,
            Number::Float(f) => f,
        }
    }

    pub fn render(self) -> String {
        match self {
            Number::Int(i) => i.to_string(),
            Number::Float(f) => format_double(f),
        }
    }
}

impl TclValue {
    pub fn new(s: impl Into<String>) -> Self {
        TclValue(s.into())
    }

    pub fn empty() -> Self {
        TclValue(String::new())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    pub fn as_number(&self) -> Option<Number> {
        parse_number(&self.0)
    }

    pub fn as_int(&self) -> Option<i64> {
        match parse_number(&self.0)? {
            Number::Int(i) => Some(i),
            Number::Float(_) => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        parse_bool(&self.0)
    }
}

impl fmt::Display for TclValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TclValue {
    fn from(s: &str) -> Self {
        TclValue(s.to_string())
    }
}

impl From<String> for TclValue {
    fn from(s: String) -> Self {
        TclValue(s)
    }
}

impl From<Number> for TclValue {
    fn from(n: Number) -> Self {
        TclValue(n.render())
    }
}

fn is_tcl_space(c: char) -> bool {
    matches!(c, ' ' | '\t' | '\n' | '\r' | '\x0b' | '\x0c')
}

/// Parse a string the way Tcl's `expr` reads numeric operands: surrounding
/// whitespace allowed, `0x`/`0o`/`0b` prefixes, a leading zero meaning octal,
/// and decimal floats. Integers beyond 64 bits are not numeric here.
pub fn parse_number(text: &str) -> Option<Number> {
    let s = text.trim_matches(is_tcl_space);
    if s.is_empty() {
        return None;
    }
    let (neg, body) = match s.as_bytes()[0] {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    if body.is_empty() {
        return None;
    }
    let radix_body = |prefix_len: usize, radix: u32| -> Option<Number> {
        let digits = &body[prefix_len..];
        if digits.is_empty() || !digits.chars().all(|c| c.is_digit(radix)) {
            return None;
        }
        let v = i128::from_str_radix(digits, radix).ok()?;
        let v = if neg { -v } else { v };
        i64::try_from(v).ok().map(Number::Int)
    };
    let lower = body.to_ascii_lowercase();
    if lower.starts_with("0x") {
        return radix_body(2, 16);
    }
    if lower.starts_with("0o") {
        return radix_body(2, 8);
    }
    if lower.starts_with("0b") {
        return radix_body(2, 2);
    }
    if body.bytes().all(|b| b.is_ascii_digit()) {
        if body.len() > 1 && body.starts_with('0') {
            return radix_body(1, 8);
        }
        return radix_body(0, 10);
    }
    // Reject forms Rust accepts but Tcl does not.
    if body.starts_with(['+', '-']) || body.contains('_') {
        return None;
    }
    let lower_body = lower.as_str();
    let special = matches!(lower_body, "inf" | "infinity" | "nan");
    if !special && !body.bytes().any(|b| b.is_ascii_digit()) {
        return None;
    }
    let v: f64 = body.parse().ok()?;
    Some(Number::Float(if neg { -v } else { v }))
}

/// Tcl boolean reading: any number (non-zero is true), or a unique prefix of
/// true/false/yes/no, or on/off, case-insensitively.
pub fn parse_bool(text: &str) -> Option<bool> {
    if let Some(n) = parse_number(text) {
        return Some(match n {
            Number::Int(i) => i != 0,
            Number::Float(f) => f != 0.0,
        });
    }
    let s = text.trim_matches(is_tcl_space).to_ascii_lowercase();
    if s.is_empty() {
        return None;
    }
    let prefix_of = |word: &str| word.starts_with(s.as_str());
    if prefix_of("true") || prefix_of("yes") {
        return Some(true);
    }
    if prefix_of("false") || prefix_of("no") {
        return Some(false);
    }
    match s.as_str() {
        "on" => Some(true),
        "off" | "of" => Some(false),
        _ => None,
    }
}

/// Render a double the way Tcl 8.6 does with the default precision: the
/// shortest digit string that round-trips, fixed notation for decimal
/// exponents in `-4..=16` (always with a fractional part), exponential
/// notation otherwise (`1e+17`, `1.5e-7`).
pub fn format_double(v: f64) -> String {
    if v.is_nan() {
        return "NaN".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "Inf" } else { "-Inf" }.to_string();
    }
    let sci = format!("{v:e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("exponent digits");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();

    if !(-4..=16).contains(&exp) {
        let mut out = String::from(sign);
        out.push_str(&digits[..1]);
        if digits.len() > 1 {
            out.push('.');
            out.push_str(&digits[1..]);
        }
        out.push('e');
        out.push(if exp < 0 { '-' } else { '+' });
        out.push_str(&exp.abs().to_string());
        return out;
    }

    let mut out = String::from(sign);
    if exp >= 0 {
        let int_len = exp as usize + 1;
        if digits.len() <= int_len {
            out.push_str(&digits);
            out.extend(std::iter::repeat_n('0', int_len - digits.len()));
            out.push_str(".0");
        } else {
            out.push_str(&digits[..int_len]);
            out.push('.');
            out.push_str(&digits[int_len..]);
        }
    } else {
        out.push_str("0.");
        out.extend(std::iter::repeat_n('0', (-exp - 1) as usize));
        out.push_str(&digits);
    }
    out
}
