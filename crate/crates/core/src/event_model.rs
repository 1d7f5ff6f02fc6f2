//! Event data types, stream validation and tumbling-window batching.

use std::fmt;

use crate::error::{Error, Result};

/// Sign of the brightness change carried by an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarity {
    Off,
    On,
}

impl Polarity {
    /// Signed representation: ON = +1, OFF = -1.
    pub fn sign(self) -> i8 {
        match self {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }

    /// Serialized representation: ON = 1, OFF = 0.
    pub fn as_bit(self) -> u8 {
        match self {
            Polarity::On => 1,
            Polarity::Off => 0,
        }
    }

    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Polarity::Off),
            1 => Some(Polarity::On),
            _ => None,
        }
    }

    pub fn from_sign(sign: i8) -> Option<Self> {
        match sign {
            1 => Some(Polarity::On),
            -1 => Some(Polarity::Off),
            _ => None,
        }
    }
}

/// A single polarity change at one pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    /// Timestamp in microseconds.
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, p: Polarity) -> Self {
        Self { t, x, y, p }
    }

    /// Total order used whenever independently generated events are merged.
    pub fn sort_key(&self) -> (u64, u16, u16, Polarity) {
        (self.t, self.y, self.x, self.p)
    }
}

/// Sensor resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SensorGeometry {
    pub width: u16,
    pub height: u16,
}

impl SensorGeometry {
    /// EVK-4 resolution.
    pub const EVK4: SensorGeometry = SensorGeometry {
        width: 1280,
        height: 720,
    };

    pub fn new(width: u16, height: u16) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "sensor geometry must be at least 1x1, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }

    /// Row-major pixel index.
    pub fn index(&self, x: u16, y: u16) -> usize {
        y as usize * self.width as usize + x as usize
    }
}

impl Default for SensorGeometry {
    fn default() -> Self {
        Self::EVK4
    }
}

impl fmt::Display for SensorGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// A time-ordered sequence of events from one sensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    pub geometry: SensorGeometry,
    pub events: Vec<Event>,
}

impl EventStream {
    /// Wraps events without checking invariants; see [`validate_stream`].
    pub fn new(geometry: SensorGeometry, events: Vec<Event>) -> Self {
        Self { geometry, events }
    }

    /// Wraps events, failing on the first invariant violation.
    pub fn try_new(geometry: SensorGeometry, events: Vec<Event>) -> Result<Self> {
        let stream = Self { geometry, events };
        match validate_stream(&stream).into_iter().next() {
            None => Ok(stream),
            Some(v) => Err(Error::InvalidStream(v)),
        }
    }

    pub fn empty(geometry: SensorGeometry) -> Self {
        Self::new(geometry, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn first_t(&self) -> Option<u64> {
        self.events.first().map(|e| e.t)
    }

    pub fn last_t(&self) -> Option<u64> {
        self.events.last().map(|e| e.t)
    }

    /// Time between first and last event, 0 for streams with fewer than two events.
    pub fn duration_us(&self) -> u64 {
        match (self.first_t(), self.last_t()) {
            (Some(a), Some(b)) => b - a,
            _ => 0,
        }
    }

    pub fn count_polarity(&self, p: Polarity) -> usize {
        self.events.iter().filter(|e| e.p == p).count()
    }

    /// Keeps the events whose mask entry is true, preserving order.
    pub fn retain_mask(&self, keep: &[bool]) -> EventStream {
        debug_assert_eq!(keep.len(), self.events.len());
        let events = self
            .events
            .iter()
            .zip(keep)
            .filter_map(|(e, &k)| k.then_some(*e))
            .collect();
        EventStream::new(self.geometry, events)
    }
}

/// Merges streams sharing one geometry into one stream ordered by `(t, y, x, p)`.
pub fn merge_streams(geometry: SensorGeometry, streams: &[EventStream]) -> EventStream {
    let mut events: Vec<Event> = streams.iter().flat_map(|s| s.events.iter().copied()).collect();
    events.sort_by_key(Event::sort_key);
    EventStream::new(geometry, events)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationRule {
    NonMonotonic,
    XOutOfRange,
    YOutOfRange,
}

/// One broken stream invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub rule: ViolationRule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.rule {
            ViolationRule::NonMonotonic => write!(f, "non-monotonic at index {}", self.index),
            ViolationRule::XOutOfRange => write!(f, "x out of range at index {}", self.index),
            ViolationRule::YOutOfRange => write!(f, "y out of range at index {}", self.index),
        }
    }
}

/// Lists every invariant violation; an empty list means the stream is valid.
pub fn validate_stream(stream: &EventStream) -> Vec<Violation> {
    let mut out = Vec::new();
    let g = stream.geometry;
    let mut prev_t = None;
    for (index, e) in stream.events.iter().enumerate() {
        if let Some(pt) = prev_t {
            if e.t < pt {
                out.push(Violation {
                    index,
                    rule: ViolationRule::NonMonotonic,
                });
            }
        }
        if e.x >= g.width {
            out.push(Violation {
                index,
                rule: ViolationRule::XOutOfRange,
            });
        }
        if e.y >= g.height {
            out.push(Violation {
                index,
                rule: ViolationRule::YOutOfRange,
            });
        }
        prev_t = Some(e.t);
    }
    out
}

/// A tumbling window over a parent stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventBatch<'a> {
    pub window_start_us: u64,
    pub window_end_us: u64,
    pub events: &'a [Event],
}

impl EventBatch<'_> {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Splits a sorted stream into contiguous, non-overlapping windows of `window_us`
/// aligned to `origin_us`.
///
/// Windows run from the one holding the first event to the one holding the last;
/// empty windows in between are emitted so that batch `k` always starts at
/// `first_start + k * window_us`. `origin_us` defaults to the first event when `None`.
pub fn batch_events(stream: &EventStream, window_us: u64, origin_us: Option<u64>) -> Result<Vec<EventBatch<'_>>> {
    if window_us == 0 {
        return Err(Error::InvalidArgument("window_us must be >= 1".into()));
    }
    let events = stream.events.as_slice();
    let (Some(first), Some(last)) = (events.first(), events.last()) else {
        return Ok(Vec::new());
    };
    let origin = origin_us.unwrap_or(first.t);
    if origin > first.t {
        return Err(Error::InvalidArgument(format!(
            "batch origin {origin} us is after the first event at {} us",
            first.t
        )));
    }
    let first_idx = (first.t - origin) / window_us;
    let last_idx = (last.t - origin) / window_us;
    let mut batches = Vec::with_capacity((last_idx - first_idx + 1) as usize);
    let mut cursor = 0usize;
    for k in first_idx..=last_idx {
        let start = origin + k * window_us;
        let end = start.saturating_add(window_us);
        let len = events[cursor..].partition_point(|e| e.t < end);
        batches.push(EventBatch {
            window_start_us: start,
            window_end_us: end,
            events: &events[cursor..cursor + len],
        });
        cursor += len;
    }
    debug_assert_eq!(cursor, events.len());
    Ok(batches)
}
