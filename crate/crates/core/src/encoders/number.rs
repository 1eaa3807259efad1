//! Number grammar, tokenization and the fixed-point binary encoding of
//! numeric words.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parse `[+-]?digits(.digits)?`; anything else is a plain string.
pub fn parse_number(text: &str) -> Option<f64> {
    let body = text.strip_prefix(['+', '-']).unwrap_or(text);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(int) || frac.is_some_and(|f| !digits(f)) {
        return None;
    }
    text.parse().ok()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub text: String,
    pub value: Option<f64>,
}

/// Lowercase and split on whitespace, flagging numeric tokens.
pub fn tokenize(text: &str) -> Vec<Token> {
    text.split_whitespace()
        .map(|w| {
            let text = w.to_lowercase();
            let value = parse_number(&text);
            Token { text, value }
        })
        .collect()
}

/// Sign bit, big-endian integer bits, then truncated fraction bits,
/// zero-padded to `width`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCodec {
    pub int_bits: u32,
    pub frac_bits: u32,
    pub width: usize,
}

impl BinaryCodec {
    pub fn new(int_bits: u32, frac_bits: u32) -> Self {
        Self {
            int_bits,
            frac_bits,
            width: 1 + int_bits as usize + frac_bits as usize,
        }
    }

    /// Same bit layout, zero-padded to `width`.
    pub fn padded(int_bits: u32, frac_bits: u32, width: usize) -> Result<Self> {
        let c = Self::new(int_bits, frac_bits);
        if width < c.width {
            return Err(Error::Config(format!(
                "binary width {width} cannot hold {} bits",
                c.width
            )));
        }
        Ok(Self { width, ..c })
    }

    pub fn encode(&self, x: f64) -> Result<Vec<f64>> {
        let mut out = encode_number(x, self.int_bits, self.frac_bits)?;
        out.resize(self.width, 0.0);
        Ok(out)
    }

    pub fn decode(&self, bits: &[f64]) -> f64 {
        decode_number(bits, self.int_bits, self.frac_bits)
    }
}

pub fn encode_number(x: f64, int_bits: u32, frac_bits: u32) -> Result<Vec<f64>> {
    let mag = x.abs();
    if !mag.is_finite() || mag >= 2f64.powi(int_bits as i32) {
        return Err(Error::EncodingOverflow { value: x, int_bits });
    }
    let mut out = Vec::with_capacity(1 + (int_bits + frac_bits) as usize);
    out.push(if x < 0.0 { 1.0 } else { 0.0 });
    let int = mag.trunc() as u64;
    for b in (0..int_bits).rev() {
        out.push(((int >> b) & 1) as f64);
    }
    let mut frac = mag - mag.trunc();
    for _ in 0..frac_bits {
        frac *= 2.0;
        let bit = frac.trunc();
        out.push(bit);
        frac -= bit;
    }
    Ok(out)
}

pub fn decode_number(bits: &[f64], int_bits: u32, frac_bits: u32) -> f64 {
    let ib = int_bits as usize;
    let mut v = 0.0;
    for &b in &bits[1..1 + ib] {
        v = v * 2.0 + b;
    }
    let mut scale = 0.5;
    for &b in &bits[1 + ib..1 + ib + frac_bits as usize] {
        v += b * scale;
        scale *= 0.5;
    }
    if bits[0] > 0.5 {
        -v
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_grammar() {
        assert_eq!(parse_number("0.547"), Some(0.547));
        assert_eq!(parse_number("-12"), Some(-12.0));
        assert_eq!(parse_number("+3.5"), Some(3.5));
        for s in ["7-3", "1e5", ".5", "5.", "", "-", "1B", "1,000", "nan", "inf"] {
            assert_eq!(parse_number(s), None, "{s}");
        }
    }

    #[test]
    fn tokenize_cases() {
        let t = tokenize("What is 0.547");
        assert_eq!(
            t.iter().map(|t| t.text.as_str()).collect::<Vec<_>>(),
            ["what", "is", "0.547"]
        );
        assert_eq!(t[2].value, Some(0.547));
        assert_eq!(t[0].value, None);
        assert!(tokenize("").is_empty());
        let r = tokenize("7-3");
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].value, None);
    }

    #[test]
    fn zero_and_five() {
        assert!(encode_number(0.0, 16, 15).unwrap().iter().all(|&b| b == 0.0));
        // oracle: formatted binary expansion of 5
        let bits = encode_number(5.0, 8, 4).unwrap();
        let expected: Vec<f64> = std::iter::once('0')
            .chain(format!("{:08b}", 5u32).chars())
            .chain("0000".chars())
            .map(|c| if c == '1' { 1.0 } else { 0.0 })
            .collect();
        assert_eq!(bits, expected);
    }

    #[test]
    fn half_has_leading_fraction_bit() {
        let bits = encode_number(0.5, 16, 15).unwrap();
        assert_eq!(bits[17], 1.0);
        assert!(bits[18..].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn census_value_round_trips_exactly() {
        let c = BinaryCodec::new(16, 15);
        assert_eq!(c.decode(&c.encode(51092.0).unwrap()), 51092.0);
        assert_eq!(c.decode(&c.encode(-7.25).unwrap()), -7.25);
    }

    #[test]
    fn overflow_is_an_error() {
        assert!(matches!(
            encode_number(256.0, 8, 4),
            Err(Error::EncodingOverflow { .. })
        ));
        assert!(encode_number(255.9, 8, 4).is_ok());
    }

    #[test]
    fn padding_extends_with_zeros() {
        let c = BinaryCodec::padded(16, 15, 300).unwrap();
        let v = c.encode(3.0).unwrap();
        assert_eq!(v.len(), 300);
        assert!(v[32..].iter().all(|&b| b == 0.0));
        assert!(BinaryCodec::padded(16, 15, 10).is_err());
    }
}
