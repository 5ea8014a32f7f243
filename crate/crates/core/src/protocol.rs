//! Line-oriented wire protocol for sensor frames.
//!
//! Grammar (ASCII, newline-delimited):
//!
//! ```text
//! FLOC1,<device_id>,<seq>,<timestamp>,<temp>,<ph>,<tds>,<floc>,<checksum>\n
//! ```
//!
//! Numeric fields are plain decimal digits with an optional fractional part
//! (no sign, no exponent). The checksum is the XOR-fold of every payload
//! byte — from the first byte of `FLOC1` through the last byte of the floc
//! field, exclusive of the comma preceding the checksum — rendered as two
//! uppercase hex digits.
//!
//! The parser accepts any decimal precision; the encoder emits the
//! canonical form: temp/ph/tds rounded half-away-from-zero to one decimal
//! and printed with minimal digits, floc as the shortest exact decimal.
//! `parse(encode(f)) == f` holds for every frame already in canonical form,
//! and `encode ∘ parse` is idempotent on any accepted line.

use crate::datamodel::{valid_device_id, SensorFrame, WaterSample};

pub const MAGIC: &str = "FLOC1";
pub const FIELD_COUNT: usize = 9;

/// XOR-fold of `payload`, rendered as exactly two uppercase hex digits.
pub fn checksum(payload: &[u8]) -> String {
    let folded = payload.iter().fold(0u8, |acc, b| acc ^ b);
    format!("{folded:02X}")
}

/// Why a line was rejected. Every variant carries the offending line
/// (lossily decoded) so rejects can be logged verbatim.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("bad magic {got:?} (line {line:?})")]
    BadMagic { got: String, line: String },
    #[error("{got} fields, expected {FIELD_COUNT} (line {line:?})")]
    FieldCount { got: usize, line: String },
    #[error("checksum mismatch: computed {computed}, transmitted {transmitted} (line {line:?})")]
    ChecksumMismatch { computed: String, transmitted: String, line: String },
    #[error("field {field} invalid: {reason} (line {line:?})")]
    NumericParse { field: &'static str, reason: String, line: String },
}

impl ParseError {
    /// Stable per-reason key for reject counters.
    pub fn reason_key(&self) -> &'static str {
        match self {
            ParseError::BadMagic { .. } => "bad_magic",
            ParseError::FieldCount { .. } => "field_count",
            ParseError::ChecksumMismatch { .. } => "checksum_mismatch",
            ParseError::NumericParse { .. } => "numeric_parse",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
}

fn lossy(line: &[u8]) -> String {
    String::from_utf8_lossy(line).into_owned()
}

/// Plain unsigned decimal with optional fractional part: `[0-9]+(\.[0-9]+)?`.
fn parse_decimal(field: &'static str, bytes: &[u8], line: &[u8]) -> Result<f64, ParseError> {
    let err = |reason: String| ParseError::NumericParse { field, reason, line: lossy(line) };
    let text = std::str::from_utf8(bytes).map_err(|_| err("not ASCII".to_string()))?;
    let mut parts = text.splitn(2, '.');
    let int_part = parts.next().unwrap_or("");
    let frac_part = parts.next();
    if int_part.is_empty() || !int_part.bytes().all(|b| b.is_ascii_digit()) {
        return Err(err(format!("{text:?} is not a plain decimal")));
    }
    if let Some(frac) = frac_part {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err(format!("{text:?} is not a plain decimal")));
        }
    }
    text.parse::<f64>().map_err(|e| err(e.to_string()))
}

fn parse_unsigned(field: &'static str, bytes: &[u8], line: &[u8]) -> Result<u64, ParseError> {
    let err = |reason: String| ParseError::NumericParse { field, reason, line: lossy(line) };
    let text = std::str::from_utf8(bytes).map_err(|_| err("not ASCII".to_string()))?;
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(err(format!("{text:?} is not an unsigned integer")));
    }
    text.parse::<u64>().map_err(|e| err(e.to_string()))
}

/// Parse one raw line (bytes straight off the wire; trailing `\n` or `\r\n`
/// tolerated) into a validated [`SensorFrame`].
pub fn parse_frame_bytes(raw: &[u8]) -> Result<SensorFrame, ParseError> {
    let mut line = raw;
    if line.last() == Some(&b'\n') {
        line = &line[..line.len() - 1];
    }
    if line.last() == Some(&b'\r') {
        line = &line[..line.len() - 1];
    }

    let fields: Vec<&[u8]> = line.split(|b| *b == b',').collect();
    if fields.len() != FIELD_COUNT {
        return Err(ParseError::FieldCount { got: fields.len(), line: lossy(line) });
    }
    if fields[0] != MAGIC.as_bytes() {
        return Err(ParseError::BadMagic { got: lossy(fields[0]), line: lossy(line) });
    }

    let device_id = std::str::from_utf8(fields[1]).unwrap_or("\u{fffd}").to_string();
    if !valid_device_id(&device_id) {
        return Err(ParseError::NumericParse {
            field: "device_id",
            reason: format!("{device_id:?} must be 1-32 chars of [A-Za-z0-9_-]"),
            line: lossy(line),
        });
    }
    let seq = parse_unsigned("seq", fields[2], line)?;
    let timestamp = parse_unsigned("timestamp", fields[3], line)?;
    let temp = parse_decimal("temp", fields[4], line)?;
    let ph = parse_decimal("ph", fields[5], line)?;
    let tds = parse_decimal("tds", fields[6], line)?;
    let floc = parse_decimal("floc", fields[7], line)?;

    let sample = WaterSample::new(temp, ph, tds, floc);
    if let Err(clause) = sample.validate() {
        let field = if clause.starts_with("temp") {
            "temp"
        } else if clause.starts_with("ph") {
            "ph"
        } else if clause.starts_with("tds") {
            "tds"
        } else {
            "floc"
        };
        return Err(ParseError::NumericParse { field, reason: clause, line: lossy(line) });
    }

    // Checksum field: exactly two uppercase hex digits.
    let transmitted = fields[8];
    let is_upper_hex = |b: u8| b.is_ascii_digit() || (b'A'..=b'F').contains(&b);
    if transmitted.len() != 2 || !transmitted.iter().all(|b| is_upper_hex(*b)) {
        return Err(ParseError::NumericParse {
            field: "checksum",
            reason: format!("{:?} is not two uppercase hex digits", lossy(transmitted)),
            line: lossy(line),
        });
    }
    // Payload = everything before the comma that precedes the checksum.
    let payload_len = line.len() - transmitted.len() - 1;
    let computed = checksum(&line[..payload_len]);
    if computed.as_bytes() != transmitted {
        return Err(ParseError::ChecksumMismatch {
            computed,
            transmitted: lossy(transmitted),
            line: lossy(line),
        });
    }

    Ok(SensorFrame { device_id, seq, timestamp, sample })
}

/// Parse one line of text. See [`parse_frame_bytes`].
pub fn parse_frame(line: &str) -> Result<SensorFrame, ParseError> {
    parse_frame_bytes(line.as_bytes())
}

/// Canonical tenths rendering: round half-away-from-zero to one decimal,
/// print without the fractional digit when it is zero.
fn canon_tenths(value: f64) -> (f64, String) {
    let scaled = (value * 10.0).round();
    let rounded = scaled / 10.0;
    let text = if scaled % 10.0 == 0.0 { format!("{rounded}") } else { format!("{rounded:.1}") };
    (rounded, text)
}

/// Encode a frame as its canonical protocol line, including the trailing
/// newline. Fails if the frame (after canonical rounding of temp/ph/tds)
/// violates the frame invariants.
pub fn encode_frame(frame: &SensorFrame) -> Result<String, EncodeError> {
    frame.validate().map_err(EncodeError::InvalidFrame)?;

    let (temp, temp_text) = canon_tenths(frame.sample.temp);
    let (ph, ph_text) = canon_tenths(frame.sample.ph);
    let (tds, tds_text) = canon_tenths(frame.sample.tds);
    let canonical = WaterSample::new(temp, ph, tds, frame.sample.floc);
    canonical
        .validate()
        .map_err(|clause| EncodeError::InvalidFrame(format!("after canonical rounding: {clause}")))?;

    let payload = format!(
        "{MAGIC},{},{},{},{},{},{},{}",
        frame.device_id, frame.seq, frame.timestamp, temp_text, ph_text, tds_text, frame.sample.floc
    );
    let sum = checksum(payload.as_bytes());
    Ok(format!("{payload},{sum}\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    // XOR-fold of "FLOC1,TANK-A,1,1602998400,29.5,6.9,1.7,10", computed
    // with an independent byte-XOR script and frozen here.
    const GOLDEN_LINE: &str = "FLOC1,TANK-A,1,1602998400,29.5,6.9,1.7,10,47";

    #[test]
    fn checksum_known_values() {
        assert_eq!(checksum(b""), "00");
        assert_eq!(checksum(b"A"), "41");
        assert_eq!(checksum(b"AB"), "03");
        assert_eq!(checksum(b"FLOC1,TANK-A,1,1602998400,29.5,6.9,1.7,10"), "47");
    }

    #[test]
    fn parse_golden_line() {
        let frame = parse_frame(GOLDEN_LINE).unwrap();
        assert_eq!(frame.device_id, "TANK-A");
        assert_eq!(frame.seq, 1);
        assert_eq!(frame.timestamp, 1602998400);
        assert_eq!(frame.sample.temp, 29.5);
        assert_eq!(frame.sample.ph, 6.9);
        assert_eq!(frame.sample.tds, 1.7);
        assert_eq!(frame.sample.floc, 10.0);
        assert_eq!(frame.sample.do_mg_l, None);
    }

    #[test]
    fn parse_tolerates_trailing_newline() {
        let with_nl = format!("{GOLDEN_LINE}\n");
        assert_eq!(parse_frame(&with_nl).unwrap(), parse_frame(GOLDEN_LINE).unwrap());
        let with_crlf = format!("{GOLDEN_LINE}\r\n");
        assert_eq!(parse_frame(&with_crlf).unwrap(), parse_frame(GOLDEN_LINE).unwrap());
    }

    #[test]
    fn parse_rejects_checksum_mismatch() {
        let line = "FLOC1,TANK-A,1,1602998400,29.5,6.9,1.7,10,00";
        match parse_frame(line).unwrap_err() {
            ParseError::ChecksumMismatch { computed, transmitted, .. } => {
                assert_eq!(computed, "47");
                assert_eq!(transmitted, "00");
            }
            other => panic!("expected ChecksumMismatch, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_non_numeric_field() {
        let line = "FLOC1,TANK-A,1,1602998400,hot,6.9,1.7,10,XX";
        match parse_frame(line).unwrap_err() {
            ParseError::NumericParse { field, .. } => assert_eq!(field, "temp"),
            other => panic!("expected NumericParse, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_wrong_field_count() {
        let line = "FLOC1,TANK-A,1,1602998400,29.5,6.9,1.7,10";
        match parse_frame(line).unwrap_err() {
            ParseError::FieldCount { got, .. } => assert_eq!(got, 8),
            other => panic!("expected FieldCount, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_bad_magic() {
        let payload = "FLOC2,TANK-A,1,1602998400,29.5,6.9,1.7,10";
        let line = format!("{payload},{}", checksum(payload.as_bytes()));
        assert!(matches!(parse_frame(&line).unwrap_err(), ParseError::BadMagic { .. }));
    }

    #[test]
    fn parse_rejects_out_of_range_values() {
        let payload = "FLOC1,TANK-A,1,1602998400,75.0,6.9,1.7,10";
        let line = format!("{payload},{}", checksum(payload.as_bytes()));
        match parse_frame(&line).unwrap_err() {
            ParseError::NumericParse { field, .. } => assert_eq!(field, "temp"),
            other => panic!("expected NumericParse, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_signs_and_exponents() {
        for bad in ["-29.5", "+29.5", "2e1", ".5", "29."] {
            let payload = format!("FLOC1,TANK-A,1,1602998400,{bad},6.9,1.7,10");
            let line = format!("{payload},{}", checksum(payload.as_bytes()));
            assert!(
                matches!(parse_frame(&line), Err(ParseError::NumericParse { field: "temp", .. })),
                "{bad} should be rejected"
            );
        }
    }

    #[test]
    fn parse_rejects_bad_device_id() {
        for bad_id in ["", "has space", &"x".repeat(33)] {
            let payload = format!("FLOC1,{bad_id},1,1602998400,29.5,6.9,1.7,10");
            let line = format!("{payload},{}", checksum(payload.as_bytes()));
            let err = parse_frame(&line).unwrap_err();
            match &err {
                // "" makes an empty field; id with a comma would shift the count.
                ParseError::NumericParse { field, .. } => assert_eq!(*field, "device_id"),
                ParseError::FieldCount { .. } => {}
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn encode_golden_frame() {
        let frame = SensorFrame {
            device_id: "TANK-A".to_string(),
            seq: 1,
            timestamp: 1602998400,
            sample: WaterSample::new(29.5, 6.9, 1.7, 10.0),
        };
        assert_eq!(encode_frame(&frame).unwrap(), format!("{GOLDEN_LINE}\n"));
    }

    #[test]
    fn encode_parse_round_trip() {
        let frame = SensorFrame {
            device_id: "pond_02".to_string(),
            seq: 993,
            timestamp: 1700000000,
            sample: WaterSample::new(28.0, 7.2, 680.4, 45.25),
        };
        let line = encode_frame(&frame).unwrap();
        assert_eq!(parse_frame(&line).unwrap(), frame);
    }

    #[test]
    fn encode_normalizes_precision() {
        let frame = SensorFrame {
            device_id: "T".to_string(),
            seq: 0,
            timestamp: 0,
            sample: WaterSample::new(29.0, 6.95, 1.7499, 10.0),
        };
        let line = encode_frame(&frame).unwrap();
        // 29.0 -> "29" (minimal digits), 6.95 -> "7" (half away from zero,
        // then minimal), 1.7499 -> "1.7".
        assert!(line.starts_with("FLOC1,T,0,0,29,7,1.7,10,"), "{line}");
        // Idempotence: re-encoding the parse yields the same canonical line.
        let reparsed = parse_frame(&line).unwrap();
        assert_eq!(encode_frame(&reparsed).unwrap(), line);
    }

    #[test]
    fn encode_rejects_invalid_frames() {
        let comma_id = SensorFrame {
            device_id: "TANK,A".to_string(),
            seq: 1,
            timestamp: 0,
            sample: WaterSample::new(29.5, 6.9, 1.7, 10.0),
        };
        assert!(matches!(encode_frame(&comma_id), Err(EncodeError::InvalidFrame(_))));

        let out_of_range = SensorFrame {
            device_id: "TANK-A".to_string(),
            seq: 1,
            timestamp: 0,
            sample: WaterSample::new(29.5, 6.9, 1.7, -1.0),
        };
        assert!(encode_frame(&out_of_range).is_err());

        // Valid before rounding, out of range after: 59.96 rounds to 60.0.
        let boundary = SensorFrame {
            device_id: "TANK-A".to_string(),
            seq: 1,
            timestamp: 0,
            sample: WaterSample::new(59.96, 6.9, 1.7, 10.0),
        };
        match encode_frame(&boundary).unwrap_err() {
            EncodeError::InvalidFrame(reason) => assert!(reason.contains("rounding"), "{reason}"),
        }
    }

    #[test]
    fn parser_never_panics_on_junk() {
        for junk in [
            "", "\n", ",,,,,,,,", "FLOC1", "FLOC1,,,,,,,,",
            "FLOC1,TANK-A,1,1602998400,29.5,6.9,1.7,10,4",
            "FLOC1,TANK-A,1,1602998400,29.5,6.9,1.7,10,4g",
            "\u{0}\u{1}\u{2}", "FLOC1,\u{fffd},1,2,3,4,5,6,77",
        ] {
            let _ = parse_frame(junk);
        }
        let _ = parse_frame_bytes(&[0xff, 0xfe, b',', 0x80, b'\n']);
    }
}
