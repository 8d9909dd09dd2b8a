//! Printable-ASCII numeral codec.
//!
//! Integers are written in base 95 over codepoints 32..=126, most significant
//! digit first. Non-negative decimals are written as a float record:
//! `base94(I) '~' base94(d)` where the value is `I * 10^-d` and the base-94
//! digits use codepoints 32..=125, so `'~'` (126) never appears inside a digit
//! run. Matrices are a header record `base94(rows) '~' base94(cols)` followed
//! by one float record per element, all separated by `'\n'`.

use thiserror::Error;

/// First codepoint of both digit alphabets.
pub const DIGIT_BASE: u8 = 32;
/// Float-record connector.
pub const CONNECTOR: u8 = b'~';
/// Record separator.
pub const SEPARATOR: u8 = b'\n';

const RADIX_INT: u64 = 95;
const RADIX_FLOAT: u64 = 94;

/// Largest supported decimal-place count for float records.
pub const MAX_PLACES: u32 = 15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("empty input")]
    Empty,
    #[error("invalid codepoint {code} at position {pos}")]
    InvalidChar { pos: usize, code: u32 },
    #[error("value {0} is negative; the codec only encodes non-negative numbers")]
    Negative(f64),
    #[error("value is not finite")]
    NonFinite,
    #[error("decoded number overflows 64 bits at position {pos}")]
    Overflow { pos: usize },
    #[error("{places} decimal places exceed the supported maximum of {MAX_PLACES}")]
    TooManyPlaces { places: u32 },
    #[error("malformed float record at position {pos}: {reason}")]
    MalformedRecord { pos: usize, reason: &'static str },
    #[error("framing error: expected {expected} element records, found {found}")]
    Framing { expected: usize, found: usize },
    #[error("invalid quantization spec: {0}")]
    InvalidSpec(String),
    #[error("matrix shape {rows}x{cols} does not match {len} values")]
    ShapeMismatch { rows: usize, cols: usize, len: usize },
}

pub type Result<T> = std::result::Result<T, CodecError>;

fn push_digits(out: &mut String, mut n: u64, radix: u64) {
    let mut buf = [0u8; 16];
    let mut i = buf.len();
    loop {
        i -= 1;
        buf[i] = DIGIT_BASE + (n % radix) as u8;
        n /= radix;
        if n == 0 {
            break;
        }
    }
    // digits are ASCII by construction
    out.extend(buf[i..].iter().map(|&b| b as char));
}

/// Parses a digit run; `offset` is the run's position inside the enclosing blob.
fn parse_digits(bytes: &[u8], radix: u64, offset: usize) -> Result<u64> {
    if bytes.is_empty() {
        return Err(CodecError::Empty);
    }
    let top = DIGIT_BASE as u64 + radix - 1;
    let mut n: u64 = 0;
    for (i, &b) in bytes.iter().enumerate() {
        let pos = offset + i;
        if (b as u64) < DIGIT_BASE as u64 || (b as u64) > top {
            return Err(CodecError::InvalidChar { pos, code: b as u32 });
        }
        let v = (b - DIGIT_BASE) as u64;
        n = n
            .checked_mul(radix)
            .and_then(|n| n.checked_add(v))
            .ok_or(CodecError::Overflow { pos })?;
    }
    Ok(n)
}

fn check_ascii(blob: &str) -> Result<&[u8]> {
    // Any non-ASCII char shows up as a byte >= 0x80; report the char's codepoint.
    if let Some((pos, ch)) = blob.char_indices().find(|(_, c)| !c.is_ascii()) {
        return Err(CodecError::InvalidChar { pos, code: ch as u32 });
    }
    Ok(blob.as_bytes())
}

/// Encodes `n` in base 95.
pub fn encode_u(n: u64) -> String {
    let mut s = String::with_capacity(10);
    push_digits(&mut s, n, RADIX_INT);
    s
}

/// Inverse of [`encode_u`].
pub fn decode_u(blob: &str) -> Result<u64> {
    parse_digits(check_ascii(blob)?, RADIX_INT, 0)
}

/// Splits a non-negative value into its decimal significand `I` and place
/// count `d`, rounding to `places` digits.
pub fn decompose(value: f64, places: u32) -> Result<FloatDecomposition> {
    if !value.is_finite() {
        return Err(CodecError::NonFinite);
    }
    if value < 0.0 {
        return Err(CodecError::Negative(value));
    }
    if places > MAX_PLACES {
        return Err(CodecError::TooManyPlaces { places });
    }
    // Decimal formatting is exact on the binary value, so the digit string is
    // the correctly rounded decimal of `value`.
    let text = format!("{:.*}", places as usize, value + 0.0);
    let digits: String = text.chars().filter(|c| *c != '.').collect();
    let significand = digits
        .parse::<u64>()
        .map_err(|_| CodecError::Overflow { pos: 0 })?;
    Ok(FloatDecomposition {
        significand,
        places,
    })
}

/// `f = I * 10^-d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FloatDecomposition {
    pub significand: u64,
    pub places: u32,
}

impl FloatDecomposition {
    /// Nearest double to the exact decimal `I * 10^-d`.
    pub fn value(&self) -> f64 {
        if self.places == 0 {
            return self.significand as f64;
        }
        format!("{}e-{}", self.significand, self.places)
            .parse()
            .expect("well-formed decimal literal")
    }
}

/// Encodes a non-negative value as a float record with `places` decimal places.
/// Values carrying more precision than `places` are rounded first.
pub fn encode_f(value: f64, places: u32) -> Result<String> {
    let dec = decompose(value, places)?;
    let mut s = String::with_capacity(12);
    push_float_record(&mut s, dec.significand, dec.places as u64);
    Ok(s)
}

fn push_float_record(out: &mut String, left: u64, right: u64) {
    push_digits(out, left, RADIX_FLOAT);
    out.push(CONNECTOR as char);
    push_digits(out, right, RADIX_FLOAT);
}

/// Parses `left '~' right`, both base 94. `offset` locates the record in its blob.
fn parse_pair(bytes: &[u8], offset: usize) -> Result<(u64, u64)> {
    if bytes.is_empty() {
        return Err(CodecError::Empty);
    }
    let mut tildes = bytes.iter().enumerate().filter(|(_, &b)| b == CONNECTOR);
    let split = match (tildes.next(), tildes.next()) {
        (None, _) => {
            return Err(CodecError::MalformedRecord {
                pos: offset,
                reason: "missing '~' connector",
            })
        }
        (Some(_), Some((second, _))) => {
            return Err(CodecError::MalformedRecord {
                pos: offset + second,
                reason: "more than one '~' connector",
            })
        }
        (Some((i, _)), None) => i,
    };
    let (left, right) = (&bytes[..split], &bytes[split + 1..]);
    if left.is_empty() {
        return Err(CodecError::MalformedRecord {
            pos: offset,
            reason: "empty significand part",
        });
    }
    if right.is_empty() {
        return Err(CodecError::MalformedRecord {
            pos: offset + split,
            reason: "empty decimal-places part",
        });
    }
    let i = parse_digits(left, RADIX_FLOAT, offset)?;
    let d = parse_digits(right, RADIX_FLOAT, offset + split + 1)?;
    Ok((i, d))
}

fn decode_record(bytes: &[u8], offset: usize) -> Result<f64> {
    let (significand, d) = parse_pair(bytes, offset)?;
    let places = u32::try_from(d)
        .ok()
        .filter(|&p| p <= MAX_PLACES)
        .ok_or(CodecError::TooManyPlaces {
            places: d.min(u32::MAX as u64) as u32,
        })?;
    Ok(FloatDecomposition {
        significand,
        places,
    }
    .value())
}

/// Inverse of [`encode_f`].
pub fn decode_f(blob: &str) -> Result<f64> {
    decode_record(check_ascii(blob)?, 0)
}

/// Fixed-point rounding grid with clamping bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizationSpec {
    pub places: u32,
    pub lo: f64,
    pub hi: f64,
}

impl QuantizationSpec {
    pub fn new(places: u32, lo: f64, hi: f64) -> Result<Self> {
        let spec = Self { places, lo, hi };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) {
            return Err(CodecError::InvalidSpec("bounds must be finite".into()));
        }
        if self.lo > self.hi {
            return Err(CodecError::InvalidSpec(format!(
                "lo {} exceeds hi {}",
                self.lo, self.hi
            )));
        }
        if self.places > MAX_PLACES {
            return Err(CodecError::TooManyPlaces {
                places: self.places,
            });
        }
        Ok(())
    }

    /// The color grid: one decimal place on [0, 2].
    pub fn color() -> Self {
        Self {
            places: 1,
            lo: 0.0,
            hi: 2.0,
        }
    }

    pub fn step(&self) -> f64 {
        10f64.powi(-(self.places as i32))
    }
}

/// `clamp(round(value * 10^p) / 10^p, lo, hi)` with half-away-from-zero rounding.
pub fn quantize(value: f64, spec: &QuantizationSpec) -> f64 {
    let scale = 10f64.powi(spec.places as i32);
    // Division by an exact power of ten lands on the nearest double to the decimal.
    let q = (value * scale).round() / scale;
    if q.is_nan() {
        return spec.lo;
    }
    // `+ 0.0` folds a rounded -0.0 into +0.0
    q.clamp(spec.lo, spec.hi) + 0.0
}

/// Encodes a row-major `rows x cols` matrix, quantizing each element first.
pub fn encode_matrix(
    values: &[f64],
    rows: usize,
    cols: usize,
    spec: &QuantizationSpec,
) -> Result<String> {
    spec.validate()?;
    if rows.checked_mul(cols) != Some(values.len()) {
        return Err(CodecError::ShapeMismatch {
            rows,
            cols,
            len: values.len(),
        });
    }
    if spec.lo < 0.0 {
        return Err(CodecError::Negative(spec.lo));
    }
    let mut out = String::with_capacity(4 + values.len() * 5);
    push_float_record(&mut out, rows as u64, cols as u64);
    for &v in values {
        let dec = decompose(quantize(v, spec), spec.places)?;
        out.push(SEPARATOR as char);
        push_float_record(&mut out, dec.significand, dec.places as u64);
    }
    Ok(out)
}

/// A decoded matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

/// Reads the `rows '~' cols` header record of a matrix blob.
pub fn matrix_shape(header: &str) -> Result<(usize, usize)> {
    let (rows, cols) = parse_pair(check_ascii(header)?, 0)?;
    match (usize::try_from(rows), usize::try_from(cols)) {
        (Ok(r), Ok(c)) => Ok((r, c)),
        _ => Err(CodecError::Overflow { pos: 0 }),
    }
}

/// Inverse of [`encode_matrix`]. A single trailing separator is tolerated.
pub fn decode_matrix(blob: &str) -> Result<DecodedMatrix> {
    let bytes = check_ascii(blob)?;
    if let Some(pos) = bytes
        .iter()
        .position(|&b| b != SEPARATOR && !(DIGIT_BASE..=CONNECTOR).contains(&b))
    {
        return Err(CodecError::InvalidChar {
            pos,
            code: bytes[pos] as u32,
        });
    }
    let bytes = bytes.strip_suffix(&[SEPARATOR]).unwrap_or(bytes);
    if bytes.is_empty() {
        return Err(CodecError::Empty);
    }
    let mut records = Vec::new();
    let mut start = 0;
    for (i, &b) in bytes.iter().enumerate() {
        if b == SEPARATOR {
            records.push((start, &bytes[start..i]));
            start = i + 1;
        }
    }
    records.push((start, &bytes[start..]));

    let (h_off, header) = records[0];
    let (rows, cols) = parse_pair(header, h_off)?;
    let expected = usize::try_from(rows)
        .ok()
        .zip(usize::try_from(cols).ok())
        .and_then(|(r, c)| r.checked_mul(c))
        .ok_or(CodecError::Overflow { pos: h_off })?;
    let found = records.len() - 1;
    if found != expected {
        return Err(CodecError::Framing { expected, found });
    }
    let values = records[1..]
        .iter()
        .map(|&(off, rec)| decode_record(rec, off))
        .collect::<Result<Vec<_>>>()?;
    Ok(DecodedMatrix {
        rows: rows as usize,
        cols: cols as usize,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Repeated divmod, digit v -> chr(32 + v).
    fn oracle_digits(mut n: u128, radix: u128) -> String {
        if n == 0 {
            return " ".into();
        }
        let mut rev = Vec::new();
        while n > 0 {
            rev.push(char::from(32 + (n % radix) as u8));
            n /= radix;
        }
        rev.iter().rev().collect()
    }

    #[test]
    fn integer_examples() {
        assert_eq!(encode_u(0), " ");
        assert_eq!(encode_u(94), "~");
        assert_eq!(encode_u(95), "! ");
        assert_eq!(decode_u(" ").unwrap(), 0);
        assert_eq!(decode_u("!!").unwrap(), 96);
        assert_eq!(decode_u("~~").unwrap(), 9024);
        assert_eq!(encode_u(123_456_789), "!P~H.");
        assert_eq!(encode_u(u64::MAX), "=9TA\\}cdoC");
    }

    #[test]
    fn integer_decode_errors() {
        assert_eq!(decode_u(""), Err(CodecError::Empty));
        assert_eq!(
            decode_u("!\t!"),
            Err(CodecError::InvalidChar { pos: 1, code: 9 })
        );
        assert_eq!(
            decode_u("ab\u{7f}"),
            Err(CodecError::InvalidChar { pos: 2, code: 127 })
        );
        assert!(matches!(
            decode_u("~~~~~~~~~~~"),
            Err(CodecError::Overflow { .. })
        ));
    }

    #[test]
    fn float_examples() {
        assert_eq!(encode_f(1.5, 1).unwrap(), "/~!");
        assert_eq!(encode_f(0.0, 1).unwrap(), " ~!");
        assert_eq!(encode_f(7.0, 0).unwrap(), "'~ ");
        assert_eq!(encode_f(2.5431, 4).unwrap(), "\"rS~$");
        assert_eq!(decode_f("/~!").unwrap(), 1.5);
        assert_eq!(decode_f(" ~ ").unwrap(), 0.0);
    }

    #[test]
    fn float_errors() {
        assert!(matches!(encode_f(-0.5, 1), Err(CodecError::Negative(_))));
        assert_eq!(encode_f(f64::NAN, 1), Err(CodecError::NonFinite));
        assert!(matches!(
            decode_f("!~"),
            Err(CodecError::MalformedRecord { .. })
        ));
        assert!(matches!(
            decode_f("~!"),
            Err(CodecError::MalformedRecord { .. })
        ));
        assert!(matches!(
            decode_f("!!"),
            Err(CodecError::MalformedRecord { .. })
        ));
        assert!(matches!(
            decode_f("!~!~!"),
            Err(CodecError::MalformedRecord { pos: 3, .. })
        ));
        assert_eq!(
            decode_f("!\u{0}~!"),
            Err(CodecError::InvalidChar { pos: 1, code: 0 })
        );
    }

    #[test]
    fn quantize_examples() {
        let spec = QuantizationSpec::color();
        assert_eq!(quantize(1.27, &spec), 1.3);
        assert_eq!(quantize(2.0, &spec), 2.0);
        assert_eq!(quantize(0.25, &spec), 0.3);
        assert_eq!(quantize(-4.0, &spec), 0.0);
        assert_eq!(quantize(9.0, &spec), 2.0);
        let mut seen: Vec<u64> = (0..=20_000)
            .map(|i| quantize(i as f64 * 1e-4, &spec).to_bits())
            .collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 21);
        assert!(QuantizationSpec::new(1, 2.0, 1.0).is_err());
    }

    #[test]
    fn matrix_examples() {
        let spec = QuantizationSpec::color();
        assert_eq!(encode_matrix(&[1.5], 1, 1, &spec).unwrap(), "!~!\n/~!");
        assert_eq!(encode_matrix(&[], 0, 0, &spec).unwrap(), " ~ ");
        let empty = decode_matrix(" ~ ").unwrap();
        assert_eq!((empty.rows, empty.cols, empty.values.len()), (0, 0, 0));
        let m = decode_matrix("!~\"\n/~!\n!~!").unwrap();
        assert_eq!((m.rows, m.cols), (1, 2));
        assert_eq!(m.values, vec![1.5, 0.1]);
    }

    #[test]
    fn matrix_errors() {
        let spec = QuantizationSpec::color();
        let blob = encode_matrix(&[0.1, 0.2, 0.3, 0.4], 2, 2, &spec).unwrap();
        let cut = &blob[..blob.rfind('\n').unwrap()];
        assert_eq!(
            decode_matrix(cut),
            Err(CodecError::Framing {
                expected: 4,
                found: 3
            })
        );
        let stray = blob.replacen('\n', "\t", 1);
        assert!(matches!(
            decode_matrix(&stray),
            Err(CodecError::InvalidChar { code: 9, .. })
        ));
        assert!(matches!(
            encode_matrix(&[1.0], 2, 1, &spec),
            Err(CodecError::ShapeMismatch { .. })
        ));
        let signed = QuantizationSpec::new(1, -1.0, 1.0).unwrap();
        assert!(encode_matrix(&[0.5], 1, 1, &signed).is_err());
    }

    proptest! {
        #[test]
        fn integer_matches_oracle(n in any::<u64>()) {
            let enc = encode_u(n);
            prop_assert_eq!(&enc, &oracle_digits(n as u128, 95));
            prop_assert_eq!(decode_u(&enc).unwrap(), n);
        }

        #[test]
        fn float_roundtrip(i in 0u64..1_000_000_000_000, d in 0u32..=MAX_PLACES) {
            let v = FloatDecomposition { significand: i, places: d }.value();
            let enc = encode_f(v, d).unwrap();
            prop_assert!(enc.bytes().filter(|&b| b == b'~').count() == 1);
            prop_assert!(enc.bytes().all(|b| (32..=126).contains(&b)));
            prop_assert_eq!(decode_f(&enc).unwrap(), v);
        }

        #[test]
        fn matrix_roundtrip_is_quantize(
            rows in 0usize..6,
            cols in 0usize..6,
            seed in prop::collection::vec(-1.0f64..3.0, 36),
            places in 0u32..4,
        ) {
            let spec = QuantizationSpec::new(places, 0.0, 2.0).unwrap();
            let values = &seed[..rows * cols];
            let blob = encode_matrix(values, rows, cols, &spec).unwrap();
            prop_assert!(blob.bytes().all(|b| b == 10 || (32..=126).contains(&b)));
            let back = decode_matrix(&blob).unwrap();
            prop_assert_eq!((back.rows, back.cols), (rows, cols));
            let expect: Vec<f64> = values.iter().map(|&v| quantize(v, &spec)).collect();
            prop_assert_eq!(back.values, expect);
        }
    }
}
