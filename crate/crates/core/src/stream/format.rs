//! The `.cir` stream file.
//!
//! A JSON document with one top-level key per line and one experience per
//! line:
//!
//! ```text
//! {
//! "version": 1,
//! "config": {...},
//! "schedule": {"n_classes":C,"n_experiences":N,"presence":"<base64>",
//!              "first_occurrence":[...],"repetition_probs":[...],"fixups":[...]},
//! "experiences": [
//! {"index":1,"classes":[...],"samples":{"<class>":[ids...],...}},
//! ...
//! ]
//! }
//! ```
//!
//! `presence` packs the class-major C×N bit matrix MSB-first into bytes
//! (`bit = class * N + (t - 1)`), zero-padded to a whole byte, then encodes
//! it with standard padded base64.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::assign::{Experience, Stream};
use super::config::StreamConfig;
use super::schedule::{ClassSchedule, Fixup};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ScheduleRecord {
    n_classes: usize,
    n_experiences: usize,
    presence: String,
    first_occurrence: Vec<usize>,
    repetition_probs: Vec<f64>,
    fixups: Vec<Fixup>,
}

#[derive(Deserialize)]
struct StreamRecord {
    version: u32,
    config: StreamConfig,
    schedule: ScheduleRecord,
    experiences: Vec<Experience>,
}

pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    bits.chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |byte, (i, &b)| byte | (u8::from(b) << (7 - i)))
        })
        .collect()
}

pub fn unpack_bits(bytes: &[u8], n: usize) -> Option<Vec<bool>> {
    if bytes.len() != n.div_ceil(8) {
        return None;
    }
    Some((0..n).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0).collect())
}

pub fn serialize_stream(stream: &Stream) -> Vec<u8> {
    let s = &stream.schedule;
    let schedule = ScheduleRecord {
        n_classes: s.n_classes(),
        n_experiences: s.n_experiences(),
        presence: STANDARD.encode(pack_bits(s.presence_bits())),
        first_occurrence: s.first_occurrence.clone(),
        repetition_probs: s.repetition_probs.clone(),
        fixups: s.fixups.clone(),
    };
    let mut out = String::new();
    out.push_str("{\n");
    out.push_str(&format!("\"version\": {FORMAT_VERSION},\n"));
    out.push_str(&format!("\"config\": {},\n", json(&stream.config)));
    out.push_str(&format!("\"schedule\": {},\n", json(&schedule)));
    out.push_str("\"experiences\": [\n");
    for (i, exp) in stream.experiences.iter().enumerate() {
        out.push_str(&json(exp));
        out.push_str(if i + 1 < stream.experiences.len() { ",\n" } else { "\n" });
    }
    out.push_str("]\n}\n");
    out.into_bytes()
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("stream records serialize")
}

/// Byte offset of a 1-based line/column position reported by the parser.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    let line_start: usize = bytes
        .split_inclusive(|&b| b == b'\n')
        .take(line.saturating_sub(1))
        .map(<[u8]>::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(bytes.len())
}

fn field_offset(bytes: &[u8], key: &str) -> usize {
    let needle = format!("\"{key}\"");
    bytes
        .windows(needle.len())
        .position(|w| w == needle.as_bytes())
        .unwrap_or(0)
}

pub fn deserialize_stream(bytes: &[u8]) -> Result<Stream> {
    let record: StreamRecord = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let at = |key: &str, message: String| Error::Parse {
        offset: field_offset(bytes, key),
        message,
    };
    if record.version != FORMAT_VERSION {
        return Err(at(
            "version",
            format!("unsupported stream format version {}", record.version),
        ));
    }
    let sched = record.schedule;
    let packed = STANDARD
        .decode(sched.presence.as_bytes())
        .map_err(|e| at("presence", format!("invalid base64: {e}")))?;
    let presence = unpack_bits(&packed, sched.n_classes * sched.n_experiences).ok_or_else(|| {
        at(
            "presence",
            format!(
                "presence matrix has {} bytes, expected {}",
                packed.len(),
                (sched.n_classes * sched.n_experiences).div_ceil(8)
            ),
        )
    })?;
    let schedule = ClassSchedule::from_parts(
        sched.n_classes,
        sched.n_experiences,
        presence,
        sched.first_occurrence,
        sched.repetition_probs,
        sched.fixups,
    )
    .map_err(|e| at("schedule", e.to_string()))?;
    record
        .config
        .validate()
        .map_err(|e| at("config", e.to_string()))?;
    let stream = Stream {
        config: record.config,
        schedule,
        experiences: record.experiences,
    };
    stream
        .validate()
        .map_err(|e| at("experiences", e.to_string()))?;
    Ok(stream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::config::{FirstOccurrenceDist, RepetitionSpec};

    fn sample() -> Stream {
        Stream::generate(&StreamConfig {
            n_experiences: 7,
            experience_size: 25,
            n_classes: 6,
            samples_per_class: 30,
            first_occurrence: FirstOccurrenceDist::Geometric { p: 0.4 },
            repetition: RepetitionSpec::Zipf { exponent: 0.7 },
            seed: 99,
        })
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let s = sample();
        let bytes = serialize_stream(&s);
        assert_eq!(deserialize_stream(&bytes).unwrap(), s);
    }

    #[test]
    fn truncated_input_reports_offset() {
        let bytes = serialize_stream(&sample());
        let cut = &bytes[..bytes.len() / 2];
        match deserialize_stream(cut) {
            Err(Error::Parse { offset, .. }) => assert!(offset <= cut.len()),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_offset_points_at_the_damage() {
        let mut bytes = serialize_stream(&sample());
        let pos = bytes.iter().position(|&b| b == b':').unwrap();
        bytes[pos] = b'#';
        match deserialize_stream(&bytes) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, pos),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn corrupted_presence_is_rejected() {
        let text = String::from_utf8(serialize_stream(&sample())).unwrap();
        let start = text.find("\"presence\":\"").unwrap() + 12;
        let mut broken = text.clone();
        broken.replace_range(start..start + 4, "AAAA");
        assert!(matches!(
            deserialize_stream(broken.as_bytes()),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn bit_packing_is_msb_first() {
        let bits = [true, false, false, false, false, false, false, true, true];
        assert_eq!(pack_bits(&bits), vec![0x81, 0x80]);
        assert_eq!(unpack_bits(&[0x81, 0x80], 9).unwrap(), bits);
        assert!(unpack_bits(&[0x81], 9).is_none());
    }
}
