//! Spatio-temporal-contrast, refractory, event-rate-control and anti-flicker filters.
//!
//! Every filter only drops events: output order is input order and the output
//! is a sub-multiset of the input. Per-pixel state machines are run one sensor
//! row at a time, in parallel, and the result is merged by event index so it
//! does not depend on the thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::event_model::{batch_events, Event, EventStream, Polarity};
use crate::freqmap::{FreqMapConfig, FreqMapper};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StcConfig {
    /// Maximum gap between consecutive same-polarity events of one burst.
    pub burst_window_us: u64,
    /// Keep the events after the second one in a burst.
    pub keep_trail: bool,
}

impl StcConfig {
    pub fn new(burst_window_us: u64, keep_trail: bool) -> Result<Self> {
        if burst_window_us == 0 {
            return Err(Error::InvalidArgument("burst_window_us must be >= 1".into()));
        }
        Ok(Self {
            burst_window_us,
            keep_trail,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErcConfig {
    /// Rate cap in events per second.
    pub max_rate_eps: u64,
    pub window_us: u64,
}

impl ErcConfig {
    pub fn new(max_rate_eps: u64, window_us: u64) -> Result<Self> {
        if max_rate_eps == 0 || window_us == 0 {
            return Err(Error::InvalidArgument("ERC rate cap and window must be >= 1".into()));
        }
        Ok(Self {
            max_rate_eps,
            window_us,
        })
    }

    /// Events allowed per control window.
    pub fn cap(&self) -> u64 {
        ((self.max_rate_eps as u128 * self.window_us as u128) / 1_000_000) as u64
    }
}

/// Closed frequency band `[lo_hz, hi_hz]` to reject.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlickerBand {
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl FlickerBand {
    pub fn new(lo_hz: f64, hi_hz: f64) -> Result<Self> {
        if !(lo_hz.is_finite() && hi_hz.is_finite() && lo_hz > 0.0 && lo_hz < hi_hz) {
            return Err(Error::InvalidArgument(format!(
                "flicker band needs 0 < lo < hi, got [{lo_hz}, {hi_hz}]"
            )));
        }
        Ok(Self { lo_hz, hi_hz })
    }

    pub fn contains(&self, f: f64) -> bool {
        f >= self.lo_hz && f <= self.hi_hz
    }
}

/// Runs `decide` once per sensor row over the indices of that row's events
/// (in stream order) and gathers a keep-mask for the whole stream.
fn row_mask<F>(stream: &EventStream, decide: F) -> Vec<bool>
where
    F: Fn(&[Event], &[usize], &mut [bool]) + Sync,
{
    let g = stream.geometry;
    let mut rows = vec![Vec::new(); g.height as usize];
    let last = rows.len() - 1;
    for (i, e) in stream.events.iter().enumerate() {
        rows[(e.y as usize).min(last)].push(i);
    }
    let decided: Vec<Vec<bool>> = rows
        .par_iter()
        .map(|idx| {
            let mut keep = vec![false; idx.len()];
            decide(&stream.events, idx, &mut keep);
            keep
        })
        .collect();
    let mut mask = vec![false; stream.events.len()];
    for (idx, keep) in rows.iter().zip(decided) {
        for (&i, k) in idx.iter().zip(keep) {
            mask[i] = k;
        }
    }
    mask
}

/// Keeps the second event of every same-polarity burst (and the rest of the
/// burst when `keep_trail`); first events and isolated events are dropped.
/// A burst continues while each event follows the previous event of the same
/// pixel within `burst_window_us` with the same polarity.
pub fn stc_filter(stream: &EventStream, cfg: &StcConfig) -> EventStream {
    let width = stream.geometry.width as usize;
    let mask = row_mask(stream, |events, idx, keep| {
        // per pixel: (last t, last polarity, position within current burst)
        let mut state: Vec<Option<(u64, Polarity, u32)>> = vec![None; width];
        for (k, &i) in idx.iter().enumerate() {
            let e = &events[i];
            let slot = &mut state[e.x as usize];
            let pos = match *slot {
                Some((t, p, pos)) if p == e.p && e.t - t <= cfg.burst_window_us => pos + 1,
                _ => 0,
            };
            *slot = Some((e.t, e.p, pos));
            keep[k] = pos == 1 || (pos >= 2 && cfg.keep_trail);
        }
    });
    stream.retain_mask(&mask)
}

/// Per pixel, keeps an event iff at least `dead_time_us` passed since the last kept one.
pub fn refractory_filter(stream: &EventStream, dead_time_us: u64) -> EventStream {
    if dead_time_us == 0 {
        return stream.clone();
    }
    let width = stream.geometry.width as usize;
    let mask = row_mask(stream, |events, idx, keep| {
        let mut last: Vec<Option<u64>> = vec![None; width];
        for (k, &i) in idx.iter().enumerate() {
            let e = &events[i];
            let slot = &mut last[e.x as usize];
            if slot.is_none_or(|l| e.t - l >= dead_time_us) {
                *slot = Some(e.t);
                keep[k] = true;
            }
        }
    });
    stream.retain_mask(&mask)
}

/// Uniform-stride decimation: in each control window holding `N > C` events,
/// keeps the events at window-relative indices `floor(k * N / C)`, `k < C`.
/// Windows are aligned to the first event.
pub fn erc_decimate(stream: &EventStream, cfg: &ErcConfig) -> EventStream {
    let cap = cfg.cap() as u128;
    let batches = match batch_events(stream, cfg.window_us, None) {
        Ok(b) => b,
        Err(_) => return stream.clone(),
    };
    let mut events = Vec::with_capacity(stream.len());
    for b in batches {
        let n = b.events.len() as u128;
        if n <= cap {
            events.extend_from_slice(b.events);
        } else {
            events.extend((0..cap).map(|k| b.events[(k * n / cap) as usize]));
        }
    }
    EventStream::new(stream.geometry, events)
}

/// Drops, window by window, every event of a pixel whose frequency estimate in
/// that window falls inside one of `bands`. Per-pixel transition state carries
/// across windows.
pub fn anti_flicker(stream: &EventStream, bands: &[FlickerBand], window_us: u64) -> Result<EventStream> {
    if bands.is_empty() || stream.is_empty() {
        return Ok(stream.clone());
    }
    let cfg = FreqMapConfig::default().with_window_us(window_us);
    let mut mapper = FreqMapper::new(stream.geometry, cfg)?;
    let mut events = Vec::with_capacity(stream.len());
    for b in batch_events(stream, window_us, None)? {
        let map = mapper.process_batch(b.events);
        events.extend(b.events.iter().filter(|e| {
            !map.get(e.x, e.y)
                .is_some_and(|f| bands.iter().any(|band| band.contains(f)))
        }));
    }
    Ok(EventStream::new(stream.geometry, events))
}
