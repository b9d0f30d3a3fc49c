//! SI-suffixed number handling for netlist values.
//!
//! SPICE decks write `10k`, `0.42u`, `2meg`; suffixes are case-insensitive
//! and `m`/`M` both mean milli (`meg` is the only way to say 1e6). Trailing
//! alphabetic unit annotations (`10kohm`) are accepted and ignored, matching
//! simulator behaviour.

/// Ordered longest-match-first so `meg` wins over `m`. Values are decimal
/// exponents: scaling happens in the decimal string before the one float
/// parse, so `100n` yields exactly the same bits as `1e-7`.
const SUFFIXES: &[(&str, i32)] = &[
    ("meg", 6),
    ("f", -15),
    ("p", -12),
    ("n", -9),
    ("u", -6),
    ("m", -3),
    ("k", 3),
    ("g", 9),
];

/// Parse a SPICE-style scalar token. Returns `None` for empty, non-finite
/// or malformed input.
pub fn parse_si(token: &str) -> Option<f64> {
    let s = token.trim().to_ascii_lowercase();
    if s.is_empty() {
        return None;
    }
    // Longest numeric prefix wins; tokens are short so the scan is cheap.
    let mut split = None;
    for i in (1..=s.len()).rev() {
        if !s.is_char_boundary(i) {
            continue;
        }
        if s[..i].parse::<f64>().is_ok() {
            split = Some((&s[..i], &s[i..]));
            break;
        }
    }
    let (numeric, rest) = split?;
    let shift = match_suffix(rest)?;
    let combined = match numeric.split_once('e') {
        Some((mant, exp)) => {
            let exp: i32 = exp.parse().ok()?;
            format!("{mant}e{}", exp.checked_add(shift)?)
        }
        None => format!("{numeric}e{shift}"),
    };
    let value: f64 = combined.parse().ok()?;
    value.is_finite().then_some(value)
}

fn match_suffix(rest: &str) -> Option<i32> {
    if rest.is_empty() {
        return Some(0);
    }
    if !rest.chars().all(|c| c.is_ascii_alphabetic()) {
        return None;
    }
    for (name, shift) in SUFFIXES {
        if rest.starts_with(name) {
            return Some(*shift);
        }
    }
    // Bare unit annotation such as `ohm` or `v`.
    Some(0)
}

/// Format a value compactly with an SI suffix when that round-trips exactly
/// through [`parse_si`]; otherwise fall back to exponent notation, which is
/// always exact.
pub fn format_si(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return format!("{value:e}");
    }
    // Shift the decimal point in the shortest round-trip representation
    // instead of dividing, so the suffix form denotes the same decimal
    // number and re-parses to the identical f64.
    let repr = format!("{value:e}");
    let (mant, exp) = repr.split_once('e').expect("exponential form");
    let exp: i32 = exp.parse().expect("exponent parses");
    let digits: String = mant.chars().filter(char::is_ascii_digit).collect();
    for (suffix, suffix_exp) in [
        ("g", 9),
        ("meg", 6),
        ("k", 3),
        ("", 0),
        ("m", -3),
        ("u", -6),
        ("n", -9),
        ("p", -12),
        ("f", -15),
    ] {
        let shift = exp - suffix_exp;
        if !(0..=2).contains(&shift) {
            continue;
        }
        let point = 1 + shift as usize;
        let mut out = String::new();
        if mant.starts_with('-') {
            out.push('-');
        }
        if digits.len() <= point {
            out.push_str(&digits);
            out.extend(std::iter::repeat('0').take(point - digits.len()));
        } else {
            out.push_str(&digits[..point]);
            out.push('.');
            out.push_str(&digits[point..]);
        }
        out.push_str(suffix);
        if parse_si(&out) == Some(value) {
            return out;
        }
        break;
    }
    format!("{value:e}")
}
