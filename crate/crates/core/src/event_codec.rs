//! Text (CSV) and binary (EVS1) event containers.
//!
//! EVS1 layout, all integers little-endian:
//!
//! ```text
//! header (14 bytes): "EVS1\n" | version u8 = 1 | width u16 | height u16 | 4 reserved zero bytes
//! record (16 bytes): t u64 | x u16 | y u16 | p u8 (0 = OFF, 1 = ON) | 3 zero pad bytes
//! ```

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::event_model::{Event, EventStream, Polarity, SensorGeometry};

pub const EVS1_MAGIC: &[u8; 5] = b"EVS1\n";
pub const EVS1_VERSION: u8 = 1;
pub const EVS1_HEADER_LEN: usize = 14;
pub const EVS1_RECORD_LEN: usize = 16;

/// Options for [`decode_csv`].
#[derive(Debug, Clone, Copy, Default)]
pub struct CsvOptions {
    /// Sensor geometry; inferred as `(max x + 1, max y + 1)` when absent.
    pub geometry: Option<SensorGeometry>,
    /// Stable-sort out-of-order input by timestamp instead of rejecting it.
    pub sort: bool,
}

/// Parses `t_us,x,y,p` lines, with an optional `t,x,y,p` header line.
pub fn decode_csv(text: &str, opts: CsvOptions) -> Result<EventStream> {
    let mut events = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if i == 0 && line.trim() == "t,x,y,p" {
            continue;
        }
        let event = parse_csv_line(line).map_err(|message| Error::Parse { line: line_no, message })?;
        if let Some(prev) = events.last().map(|e: &Event| e.t) {
            if event.t < prev && !opts.sort {
                return Err(Error::Order {
                    line: line_no,
                    t: event.t,
                    prev,
                });
            }
        }
        events.push(event);
    }
    if opts.sort {
        events.sort_by_key(|e| e.t);
    }
    let geometry = match opts.geometry {
        Some(g) => g,
        None => infer_geometry(&events)?,
    };
    check_bounds(&events, geometry)?;
    Ok(EventStream::new(geometry, events))
}

fn parse_csv_line(line: &str) -> std::result::Result<Event, String> {
    let mut fields = line.split(',');
    let mut next = |name: &str| {
        fields
            .next()
            .map(str::trim)
            .ok_or_else(|| format!("missing field '{name}'"))
    };
    let t_str = next("t")?;
    let x_str = next("x")?;
    let y_str = next("y")?;
    let p_str = next("p")?;
    if fields.next().is_some() {
        return Err("expected 4 fields".into());
    }
    let t = t_str
        .parse::<u64>()
        .map_err(|e| format!("bad timestamp '{t_str}': {e}"))?;
    let x = x_str.parse::<u16>().map_err(|e| format!("bad x '{x_str}': {e}"))?;
    let y = y_str.parse::<u16>().map_err(|e| format!("bad y '{y_str}': {e}"))?;
    let p = match p_str {
        "0" => Polarity::Off,
        "1" => Polarity::On,
        other => return Err(format!("bad polarity '{other}', expected 0 or 1")),
    };
    Ok(Event::new(t, x, y, p))
}

fn infer_geometry(events: &[Event]) -> Result<SensorGeometry> {
    let max_x = events.iter().map(|e| e.x as u32).max().unwrap_or(0);
    let max_y = events.iter().map(|e| e.y as u32).max().unwrap_or(0);
    let width = u16::try_from(max_x + 1).map_err(|_| Error::InvalidArgument("inferred width exceeds 65535".into()))?;
    let height =
        u16::try_from(max_y + 1).map_err(|_| Error::InvalidArgument("inferred height exceeds 65535".into()))?;
    SensorGeometry::new(width, height)
}

fn check_bounds(events: &[Event], g: SensorGeometry) -> Result<()> {
    for (index, e) in events.iter().enumerate() {
        if !g.contains(e.x, e.y) {
            return Err(Error::CoordinateOutOfRange {
                index,
                x: e.x,
                y: e.y,
                width: g.width,
                height: g.height,
            });
        }
    }
    Ok(())
}

/// Canonical CSV: no header, one `t,x,y,p` line per event, newline-terminated.
pub fn encode_csv(stream: &EventStream) -> String {
    let mut out = String::with_capacity(stream.events.len() * 20);
    for e in &stream.events {
        let _ = writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.p.as_bit());
    }
    out
}

/// Non-fatal irregularities found while decoding EVS1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Evs1Warning {
    NonZeroReserved,
    NonZeroPad { record: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evs1Decoded {
    pub stream: EventStream,
    pub warnings: Vec<Evs1Warning>,
}

pub fn encode_evs1(stream: &EventStream) -> Vec<u8> {
    let g = stream.geometry;
    let mut out = Vec::with_capacity(EVS1_HEADER_LEN + EVS1_RECORD_LEN * stream.events.len());
    out.extend_from_slice(EVS1_MAGIC);
    out.push(EVS1_VERSION);
    out.extend_from_slice(&g.width.to_le_bytes());
    out.extend_from_slice(&g.height.to_le_bytes());
    out.extend_from_slice(&[0; 4]);
    for e in &stream.events {
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.p.as_bit());
        out.extend_from_slice(&[0; 3]);
    }
    out
}

/// Decodes EVS1, discarding warnings.
pub fn decode_evs1(bytes: &[u8]) -> Result<EventStream> {
    decode_evs1_with_warnings(bytes).map(|d| d.stream)
}

pub fn decode_evs1_with_warnings(bytes: &[u8]) -> Result<Evs1Decoded> {
    if bytes.len() < EVS1_MAGIC.len() || &bytes[..EVS1_MAGIC.len()] != EVS1_MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < EVS1_HEADER_LEN {
        return Err(Error::Truncated(format!(
            "header needs {EVS1_HEADER_LEN} bytes, got {}",
            bytes.len()
        )));
    }
    let version = bytes[5];
    if version != EVS1_VERSION {
        return Err(Error::BadVersion(version));
    }
    let width = u16::from_le_bytes([bytes[6], bytes[7]]);
    let height = u16::from_le_bytes([bytes[8], bytes[9]]);
    let geometry = SensorGeometry::new(width, height)?;
    let mut warnings = Vec::new();
    if bytes[10..14] != [0; 4] {
        warnings.push(Evs1Warning::NonZeroReserved);
    }

    let body = &bytes[EVS1_HEADER_LEN..];
    if !body.len().is_multiple_of(EVS1_RECORD_LEN) {
        return Err(Error::Truncated(format!(
            "body of {} bytes is not a whole number of {EVS1_RECORD_LEN}-byte records",
            body.len()
        )));
    }
    let mut events = Vec::with_capacity(body.len() / EVS1_RECORD_LEN);
    for (index, rec) in body.chunks_exact(EVS1_RECORD_LEN).enumerate() {
        let t = u64::from_le_bytes(rec[0..8].try_into().expect("8-byte slice"));
        let x = u16::from_le_bytes([rec[8], rec[9]]);
        let y = u16::from_le_bytes([rec[10], rec[11]]);
        let p = Polarity::from_bit(rec[12]).ok_or(Error::BadPolarity { index, value: rec[12] })?;
        if rec[13..16] != [0; 3] {
            warnings.push(Evs1Warning::NonZeroPad { record: index });
        }
        if !geometry.contains(x, y) {
            return Err(Error::CoordinateOutOfRange {
                index,
                x,
                y,
                width,
                height,
            });
        }
        if let Some(prev) = events.last().map(|e: &Event| e.t) {
            if t < prev {
                return Err(Error::Order {
                    line: index + 1,
                    t,
                    prev,
                });
            }
        }
        events.push(Event::new(t, x, y, p));
    }
    Ok(Evs1Decoded {
        stream: EventStream::new(geometry, events),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(w: u16, h: u16) -> SensorGeometry {
        SensorGeometry::new(w, h).unwrap()
    }

    #[test]
    fn csv_decodes_two_events() {
        let s = decode_csv("0,3,4,1\n100,3,4,0\n", CsvOptions::default()).unwrap();
        assert_eq!(s.events.len(), 2);
        assert_eq!(s.events[1], Event::new(100, 3, 4, Polarity::Off));
        assert_eq!(s.geometry, g(4, 5));
    }

    #[test]
    fn csv_header_is_skipped() {
        let s = decode_csv("t,x,y,p\n7,1,1,1\n", CsvOptions::default()).unwrap();
        assert_eq!(s.events, vec![Event::new(7, 1, 1, Polarity::On)]);
    }

    #[test]
    fn csv_parse_error_names_line() {
        let err = decode_csv("abc,3,4,1", CsvOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = decode_csv("0,1,1,1\n5,1,1,2\n", CsvOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = decode_csv("0,1,1\n", CsvOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = decode_csv("0,1,1,1,9\n", CsvOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn csv_out_of_order_rejected_unless_sorting() {
        let text = "10,0,0,1\n5,1,0,0\n";
        assert!(matches!(
            decode_csv(text, CsvOptions::default()),
            Err(Error::Order { line: 2, .. })
        ));
        let s = decode_csv(
            text,
            CsvOptions {
                geometry: None,
                sort: true,
            },
        )
        .unwrap();
        assert_eq!(s.events.iter().map(|e| e.t).collect::<Vec<_>>(), vec![5, 10]);
    }

    #[test]
    fn csv_coordinates_checked_against_supplied_geometry() {
        let opts = CsvOptions {
            geometry: Some(g(2, 2)),
            sort: false,
        };
        assert!(matches!(
            decode_csv("0,2,0,1\n", opts),
            Err(Error::CoordinateOutOfRange { .. })
        ));
    }

    #[test]
    fn csv_encode_examples() {
        let s = EventStream::new(g(4, 4), vec![Event::new(0, 1, 2, Polarity::On)]);
        assert_eq!(encode_csv(&s), "0,1,2,1\n");
        assert_eq!(encode_csv(&EventStream::empty(g(4, 4))), "");
    }

    #[test]
    fn csv_canonical_text_round_trips() {
        let text = "0,3,4,1\n100,3,4,0\n100,0,0,1\n";
        let s = decode_csv(text, CsvOptions::default()).unwrap();
        assert_eq!(encode_csv(&s), text);
    }

    #[test]
    fn evs1_golden_record() {
        let s = EventStream::new(g(4, 4), vec![Event::new(7, 1, 2, Polarity::On)]);
        let bytes = encode_evs1(&s);
        assert_eq!(
            &bytes[..EVS1_HEADER_LEN],
            &[b'E', b'V', b'S', b'1', b'\n', 1, 4, 0, 4, 0, 0, 0, 0, 0]
        );
        assert_eq!(
            &bytes[EVS1_HEADER_LEN..],
            &[0x07, 0, 0, 0, 0, 0, 0, 0, 0x01, 0, 0x02, 0, 0x01, 0, 0, 0]
        );
        assert_eq!(decode_evs1(&bytes).unwrap(), s);
    }

    #[test]
    fn evs1_truncated_body() {
        let mut bytes = encode_evs1(&EventStream::empty(g(4, 4)));
        bytes.extend_from_slice(&[0; 15]);
        assert!(matches!(decode_evs1(&bytes), Err(Error::Truncated(_))));
        assert!(matches!(decode_evs1(&bytes[..10]), Err(Error::Truncated(_))));
    }

    #[test]
    fn evs1_bad_magic_and_version() {
        assert!(matches!(decode_evs1(b"EVS2\n\x01"), Err(Error::BadMagic)));
        assert!(matches!(decode_evs1(b""), Err(Error::BadMagic)));
        let mut bytes = encode_evs1(&EventStream::empty(g(4, 4)));
        bytes[5] = 2;
        assert!(matches!(decode_evs1(&bytes), Err(Error::BadVersion(2))));
    }

    #[test]
    fn evs1_coordinate_out_of_range() {
        let bad = EventStream::new(g(4, 4), vec![Event::new(0, 4, 0, Polarity::On)]);
        assert!(matches!(
            decode_evs1(&encode_evs1(&bad)),
            Err(Error::CoordinateOutOfRange { index: 0, .. })
        ));
    }

    #[test]
    fn evs1_nonzero_pad_is_a_warning() {
        let s = EventStream::new(g(4, 4), vec![Event::new(3, 0, 0, Polarity::Off)]);
        let mut bytes = encode_evs1(&s);
        bytes[EVS1_HEADER_LEN + 15] = 0xff;
        bytes[12] = 1;
        let d = decode_evs1_with_warnings(&bytes).unwrap();
        assert_eq!(d.stream, s);
        assert_eq!(
            d.warnings,
            vec![Evs1Warning::NonZeroReserved, Evs1Warning::NonZeroPad { record: 0 }]
        );
    }

    #[test]
    fn evs1_bad_polarity_and_order() {
        let s = EventStream::new(
            g(4, 4),
            vec![Event::new(9, 0, 0, Polarity::On), Event::new(3, 0, 0, Polarity::On)],
        );
        let mut bytes = encode_evs1(&s);
        assert!(matches!(decode_evs1(&bytes), Err(Error::Order { line: 2, .. })));
        bytes[EVS1_HEADER_LEN + 12] = 7;
        assert!(matches!(
            decode_evs1(&bytes),
            Err(Error::BadPolarity { index: 0, value: 7 })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_stream() -> impl Strategy<Value = EventStream> {
            (1u16..2000, 1u16..2000).prop_flat_map(|(w, h)| {
                proptest::collection::vec((0u64..u64::MAX / 2, 0..w, 0..h, any::<bool>()), 0..64).prop_map(move |raw| {
                    let mut events: Vec<Event> = raw
                        .into_iter()
                        .map(|(t, x, y, on)| Event::new(t, x, y, if on { Polarity::On } else { Polarity::Off }))
                        .collect();
                    events.sort_by_key(|e| e.t);
                    EventStream::new(SensorGeometry::new(w, h).unwrap(), events)
                })
            })
        }

        proptest! {
            #[test]
            fn evs1_round_trip(s in arb_stream()) {
                let bytes = encode_evs1(&s);
                prop_assert_eq!(bytes.len(), EVS1_HEADER_LEN + EVS1_RECORD_LEN * s.len());
                prop_assert_eq!(decode_evs1(&bytes).unwrap(), s);
            }

            #[test]
            fn csv_round_trip(s in arb_stream()) {
                let text = encode_csv(&s);
                let opts = CsvOptions { geometry: Some(s.geometry), sort: false };
                let back = decode_csv(&text, opts).unwrap();
                prop_assert_eq!(&back, &s);
                prop_assert_eq!(encode_csv(&back), text);
            }

            #[test]
            fn evs1_decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
                let mut framed = EVS1_MAGIC.to_vec();
                framed.push(EVS1_VERSION);
                framed.extend_from_slice(&bytes);
                let _ = decode_evs1(&framed);
                let _ = decode_evs1(&bytes);
            }
        }
    }
}
