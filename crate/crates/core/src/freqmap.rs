//! Per-pixel frequency estimation from hypertransitions.
//!
//! A hypertransition is a change of polarity at one pixel in a chosen
//! direction (by default ON followed by OFF). The interval between successive
//! hypertransitions at a pixel is one period of the local periodic signal, so
//! the reciprocal of the mean (or median) interval estimates its frequency.
//!
//! Two ways to turn a stream into maps are provided:
//!
//! * [`compute_freq_map`] looks at one batch in isolation. Only intervals
//!   whose both ends fall inside the batch count, so a window must span more
//!   than `min_intervals` periods for a pixel to be estimated.
//! * [`FreqMapper`] carries each pixel's last transition across consecutive
//!   batches, so intervals spanning a batch boundary are not lost and the
//!   window only sets the output cadence.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::event_model::{batch_events, Event, EventBatch, EventStream, Polarity, SensorGeometry};
use crate::image_io::RgbImage;

/// Upper bound of the validity clamp: half the 10 kHz pixel sampling rate.
pub const NYQUIST_HZ: f64 = 5000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Transition {
    #[default]
    OnToOff,
    OffToOn,
}

impl Transition {
    fn endpoints(self) -> (Polarity, Polarity) {
        match self {
            Transition::OnToOff => (Polarity::On, Polarity::Off),
            Transition::OffToOn => (Polarity::Off, Polarity::On),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Estimator {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqMapConfig {
    pub transition: Transition,
    pub window_us: u64,
    pub min_intervals: usize,
    pub estimator: Estimator,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
}

impl Default for FreqMapConfig {
    fn default() -> Self {
        Self {
            transition: Transition::OnToOff,
            window_us: 20_000,
            min_intervals: 2,
            estimator: Estimator::Mean,
            f_min_hz: 1.0,
            f_max_hz: NYQUIST_HZ,
        }
    }
}

impl FreqMapConfig {
    /// 20 ms batches for rotating and vibrating machinery.
    pub fn vibration() -> Self {
        Self::default()
    }

    /// 15 ms batches for large structures.
    pub fn structures() -> Self {
        Self {
            window_us: 15_000,
            ..Self::default()
        }
    }

    /// 50 ms batches for light flicker.
    pub fn flicker() -> Self {
        Self {
            window_us: 50_000,
            ..Self::default()
        }
    }

    pub fn with_window_us(self, window_us: u64) -> Self {
        Self { window_us, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_us < 1000 {
            return Err(Error::InvalidArgument(format!(
                "window must be at least 1000 us, got {}",
                self.window_us
            )));
        }
        if self.min_intervals == 0 {
            return Err(Error::InvalidArgument("min_intervals must be >= 1".into()));
        }
        let (lo, hi) = (self.f_min_hz, self.f_max_hz);
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi && hi <= NYQUIST_HZ) {
            return Err(Error::InvalidArgument(format!(
                "frequency clamp must satisfy 0 < f_min < f_max <= {NYQUIST_HZ}, got [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// Hypertransition bookkeeping for one pixel.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PixelTransitionState {
    pub last_polarity: Option<Polarity>,
    pub last_transition_t: Option<u64>,
    /// Intervals between successive transitions, microseconds, all > 0.
    pub intervals: Vec<u64>,
}

/// Feeds one event of a pixel's time-ordered sequence into its state.
///
/// Returns the new interval when the event completes a transition in the
/// configured direction and an earlier transition exists.
pub fn update_pixel_state(state: &mut PixelTransitionState, event: &Event, transition: Transition) -> Option<u64> {
    let (from, to) = transition.endpoints();
    let mut interval = None;
    if state.last_polarity == Some(from) && event.p == to {
        if let Some(prev) = state.last_transition_t {
            let dt = event.t.saturating_sub(prev);
            if dt > 0 {
                state.intervals.push(dt);
                interval = Some(dt);
            }
        }
        state.last_transition_t = Some(event.t);
    }
    state.last_polarity = Some(event.p);
    interval
}

/// Frequency in Hz from hypertransition intervals, or `None` (unestimated)
/// when there are too few intervals or the result leaves the validity clamp.
pub fn estimate_frequency(intervals: &[u64], cfg: &FreqMapConfig) -> Option<f64> {
    if intervals.is_empty() || intervals.len() < cfg.min_intervals {
        return None;
    }
    let period_us = match cfg.estimator {
        Estimator::Mean => intervals.iter().map(|&v| v as f64).sum::<f64>() / intervals.len() as f64,
        Estimator::Median => {
            let mut v: Vec<u64> = intervals.to_vec();
            v.sort_unstable();
            let n = v.len();
            if n % 2 == 1 {
                v[n / 2] as f64
            } else {
                (v[n / 2 - 1] as f64 + v[n / 2] as f64) / 2.0
            }
        }
    };
    let f = 1e6 / period_us;
    (f >= cfg.f_min_hz && f <= cfg.f_max_hz).then_some(f)
}

/// Per-pixel frequencies; `None` marks an unestimated pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMap {
    pub geometry: SensorGeometry,
    pub values: Vec<Option<f64>>,
}

impl FrequencyMap {
    pub fn unestimated(geometry: SensorGeometry) -> Self {
        Self {
            geometry,
            values: vec![None; geometry.pixel_count()],
        }
    }

    pub fn get(&self, x: u16, y: u16) -> Option<f64> {
        self.values[self.geometry.index(x, y)]
    }

    pub fn set(&mut self, x: u16, y: u16, f: Option<f64>) {
        let i = self.geometry.index(x, y);
        self.values[i] = f;
    }

    pub fn estimated_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Estimated pixels as `(x, y, hz)` in row-major order.
    pub fn estimates(&self) -> impl Iterator<Item = (u16, u16, f64)> + '_ {
        let w = self.geometry.width as usize;
        self.values
            .iter()
            .enumerate()
            .filter_map(move |(i, v)| v.map(|f| ((i % w) as u16, (i / w) as u16, f)))
    }

    /// `x,y,freq_hz` rows for estimated pixels, with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,freq_hz\n");
        for (x, y, f) in self.estimates() {
            let _ = writeln!(out, "{x},{y},{f}");
        }
        out
    }

    /// Parses the output of [`FrequencyMap::to_csv`]; geometry is inferred
    /// from the largest coordinates when not given.
    pub fn from_csv(text: &str, geometry: Option<SensorGeometry>) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line == "x,y,freq_hz") {
                continue;
            }
            let bad = |m: &str| Error::Parse {
                line: i + 1,
                message: m.to_string(),
            };
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 {
                return Err(bad("expected x,y,freq_hz"));
            }
            let x: u16 = parts[0].trim().parse().map_err(|_| bad("bad x"))?;
            let y: u16 = parts[1].trim().parse().map_err(|_| bad("bad y"))?;
            let f: f64 = parts[2].trim().parse().map_err(|_| bad("bad frequency"))?;
            rows.push((x, y, f));
        }
        let geometry = match geometry {
            Some(g) => g,
            None => {
                let w = rows.iter().map(|r| r.0 as u32 + 1).max().unwrap_or(1);
                let h = rows.iter().map(|r| r.1 as u32 + 1).max().unwrap_or(1);
                SensorGeometry::new(
                    u16::try_from(w).map_err(|_| Error::InvalidArgument("width too large".into()))?,
                    u16::try_from(h).map_err(|_| Error::InvalidArgument("height too large".into()))?,
                )?
            }
        };
        let mut map = FrequencyMap::unestimated(geometry);
        for (x, y, f) in rows {
            if !geometry.contains(x, y) {
                return Err(Error::CoordinateOutOfRange {
                    index: 0,
                    x,
                    y,
                    width: geometry.width,
                    height: geometry.height,
                });
            }
            map.set(x, y, Some(f));
        }
        Ok(map)
    }
}

/// Event indices grouped by sensor row.
fn rows_of(events: &[Event], geometry: SensorGeometry) -> Vec<Vec<usize>> {
    let mut rows = vec![Vec::new(); geometry.height as usize];
    for (i, e) in events.iter().enumerate() {
        if let Some(row) = rows.get_mut(e.y as usize) {
            if e.x < geometry.width {
                row.push(i);
            }
        }
    }
    rows
}

/// Frequency map of one batch, computed with fresh per-pixel state.
pub fn compute_freq_map(batch: &EventBatch<'_>, geometry: SensorGeometry, cfg: &FreqMapConfig) -> FrequencyMap {
    let width = geometry.width as usize;
    let rows = rows_of(batch.events, geometry);
    let values: Vec<Option<f64>> = rows
        .par_iter()
        .flat_map_iter(|row| {
            let mut states = vec![PixelTransitionState::default(); width];
            for &i in row {
                let e = &batch.events[i];
                update_pixel_state(&mut states[e.x as usize], e, cfg.transition);
            }
            states
                .into_iter()
                .map(|s| estimate_frequency(&s.intervals, cfg))
                .collect::<Vec<_>>()
        })
        .collect();
    FrequencyMap { geometry, values }
}

/// Streaming frequency mapper over consecutive batches of one stream.
///
/// Per-pixel transition state persists between batches. A pixel is estimated
/// in a batch when at least one interval closes inside it; the estimate uses
/// the intervals closed in the batch, topped up with the most recent earlier
/// intervals when fewer than `min_intervals` closed.
#[derive(Debug, Clone)]
pub struct FreqMapper {
    cfg: FreqMapConfig,
    geometry: SensorGeometry,
    states: Vec<PixelTransitionState>,
    latest: FrequencyMap,
}

impl FreqMapper {
    pub fn new(geometry: SensorGeometry, cfg: FreqMapConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            geometry,
            states: vec![PixelTransitionState::default(); geometry.pixel_count()],
            latest: FrequencyMap::unestimated(geometry),
        })
    }

    pub fn config(&self) -> &FreqMapConfig {
        &self.cfg
    }

    /// Processes the next batch; batches must be fed in time order.
    pub fn process_batch(&mut self, events: &[Event]) -> FrequencyMap {
        let width = self.geometry.width as usize;
        let rows = rows_of(events, self.geometry);
        let cfg = self.cfg;
        let values: Vec<Option<f64>> = self
            .states
            .par_chunks_mut(width)
            .zip(rows.par_iter())
            .flat_map_iter(|(states, row)| {
                let marks: Vec<usize> = states.iter().map(|s| s.intervals.len()).collect();
                for &i in row {
                    let e = &events[i];
                    update_pixel_state(&mut states[e.x as usize], e, cfg.transition);
                }
                states
                    .iter_mut()
                    .zip(marks)
                    .map(|(s, mark)| {
                        let fresh = s.intervals.len() - mark;
                        let est = if fresh == 0 {
                            None
                        } else {
                            let take = fresh.max(cfg.min_intervals).min(s.intervals.len());
                            estimate_frequency(&s.intervals[s.intervals.len() - take..], &cfg)
                        };
                        let keep_from = s.intervals.len().saturating_sub(cfg.min_intervals);
                        s.intervals.drain(..keep_from);
                        est
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        for (slot, v) in self.latest.values.iter_mut().zip(&values) {
            if v.is_some() {
                *slot = *v;
            }
        }
        FrequencyMap {
            geometry: self.geometry,
            values,
        }
    }

    /// Most recent estimate of every pixel over all batches seen so far.
    pub fn latest(&self) -> &FrequencyMap {
        &self.latest
    }

    pub fn into_latest(self) -> FrequencyMap {
        self.latest
    }
}

/// Per-batch maps of a whole stream, state carried across batches.
pub fn stream_freq_maps<'a>(
    stream: &'a EventStream,
    cfg: &FreqMapConfig,
    origin_us: Option<u64>,
) -> Result<Vec<(EventBatch<'a>, FrequencyMap)>> {
    let mut mapper = FreqMapper::new(stream.geometry, *cfg)?;
    let batches = batch_events(stream, cfg.window_us, origin_us)?;
    Ok(batches
        .into_iter()
        .map(|b| {
            let m = mapper.process_batch(b.events);
            (b, m)
        })
        .collect())
}

/// Latest per-pixel estimate over a whole stream, state carried across batches.
pub fn recording_freq_map(stream: &EventStream, cfg: &FreqMapConfig) -> Result<FrequencyMap> {
    let mut mapper = FreqMapper::new(stream.geometry, *cfg)?;
    for b in batch_events(stream, cfg.window_us, None)? {
        mapper.process_batch(b.events);
    }
    Ok(mapper.into_latest())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Colormap {
    #[default]
    Turbo,
    Hsv,
}

pub const COLORMAP_LEN: usize = 256;
pub const UNESTIMATED_GREY: [u8; 3] = [128, 128, 128];
pub const LEGEND_WIDTH: usize = 32;
const LEGEND_MIN_HEIGHT: usize = 24;
const LEGEND_BAR_X: usize = 2;
const LEGEND_BAR_WIDTH: usize = 6;
const LEGEND_TEXT_X: usize = 10;

impl Colormap {
    pub fn color(self, index: usize) -> [u8; 3] {
        let x = index.min(COLORMAP_LEN - 1) as f64 / (COLORMAP_LEN - 1) as f64;
        let rgb = match self {
            Colormap::Turbo => turbo(x),
            Colormap::Hsv => hsv(x * 300.0),
        };
        rgb.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8)
    }

    /// Colormap index of `f` on a linear scale from `f_min` (0) to `f_max` (last).
    pub fn index_of(f: f64, f_min: f64, f_max: f64) -> usize {
        let u = ((f - f_min) / (f_max - f_min)).clamp(0.0, 1.0);
        (u * (COLORMAP_LEN - 1) as f64).round() as usize
    }
}

// Polynomial fit of the Turbo colormap.
fn turbo(x: f64) -> [f64; 3] {
    let r =
        0.13572138 + x * (4.61539260 + x * (-42.66032258 + x * (132.13108234 + x * (-152.94239396 + x * 59.28637943))));
    let g = 0.09140261 + x * (2.19418839 + x * (4.84296658 + x * (-14.18503333 + x * (4.27729857 + x * 2.82956604))));
    let b =
        0.10667330 + x * (12.64194608 + x * (-60.58204836 + x * (110.36276771 + x * (-89.90310912 + x * 27.34824973))));
    [r, g, b]
}

fn hsv(hue_deg: f64) -> [f64; 3] {
    let h = hue_deg / 60.0;
    let c = 1.0;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    match h as u32 {
        0 => [c, x, 0.0],
        1 => [x, c, 0.0],
        2 => [0.0, c, x],
        3 => [0.0, x, c],
        4 => [x, 0.0, c],
        _ => [c, 0.0, x],
    }
}

/// Renders estimated pixels through the colormap and unestimated ones grey,
/// with a color-scale legend (max at top, min at bottom) appended on the right.
pub fn render_freq_map(map: &FrequencyMap, cfg: &FreqMapConfig, colormap: Colormap) -> RgbImage {
    let w = map.geometry.width as usize;
    let h = map.geometry.height as usize;
    let out_h = h.max(LEGEND_MIN_HEIGHT);
    let mut img = RgbImage::new(w + LEGEND_WIDTH, out_h, [0, 0, 0]);
    for y in 0..h {
        for x in 0..w {
            let rgb = match map.values[y * w + x] {
                Some(f) => colormap.color(Colormap::index_of(f, cfg.f_min_hz, cfg.f_max_hz)),
                None => UNESTIMATED_GREY,
            };
            img.put(x, y, rgb);
        }
    }
    for y in 0..out_h {
        let u = 1.0 - y as f64 / (out_h - 1) as f64;
        let rgb = colormap.color((u * (COLORMAP_LEN - 1) as f64).round() as usize);
        for x in 0..LEGEND_BAR_WIDTH {
            img.put(w + LEGEND_BAR_X + x, y, rgb);
        }
    }
    draw_text(&mut img, w + LEGEND_TEXT_X, 0, &tick_label(cfg.f_max_hz));
    draw_text(&mut img, w + LEGEND_TEXT_X, out_h - GLYPH_H, &tick_label(cfg.f_min_hz));
    img
}

fn tick_label(f: f64) -> String {
    let mut s = if f >= 10.0 {
        format!("{f:.0}")
    } else {
        format!("{f:.1}")
    };
    s.truncate(5);
    s
}

const GLYPH_W: usize = 3;
const GLYPH_H: usize = 5;

fn glyph(c: char) -> [u8; GLYPH_H] {
    // rows top to bottom, 3 bits each, MSB = leftmost column
    match c {
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b111, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        '.' => [0b000, 0b000, 0b000, 0b000, 0b010],
        _ => [0; GLYPH_H],
    }
}

fn draw_text(img: &mut RgbImage, x0: usize, y0: usize, text: &str) {
    for (i, c) in text.chars().enumerate() {
        let rows = glyph(c);
        for (dy, bits) in rows.iter().enumerate() {
            for dx in 0..GLYPH_W {
                if bits & (1 << (GLYPH_W - 1 - dx)) != 0 {
                    let (x, y) = (x0 + i * (GLYPH_W + 1) + dx, y0 + dy);
                    if x < img.width && y < img.height {
                        img.put(x, y, [255, 255, 255]);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub lo_hz: f64,
    pub hi_hz: f64,
    pub count: usize,
}

impl HistogramBin {
    pub fn contains(&self, f: f64) -> bool {
        f >= self.lo_hz && f <= self.hi_hz
    }
}

/// Histogram of estimated frequencies.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Histogram {
    pub bins: Vec<HistogramBin>,
    pub dominant: Option<usize>,
}

impl Histogram {
    pub fn dominant_bin(&self) -> Option<&HistogramBin> {
        self.dominant.map(|i| &self.bins[i])
    }

    /// Indices of non-empty local maxima; a plateau counts once.
    pub fn modes(&self) -> Vec<usize> {
        let c: Vec<usize> = self.bins.iter().map(|b| b.count).collect();
        (0..c.len())
            .filter(|&i| c[i] > 0 && (i == 0 || c[i] > c[i - 1]) && (i + 1 == c.len() || c[i] >= c[i + 1]))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lo_hz,hi_hz,count\n");
        for b in &self.bins {
            let _ = writeln!(out, "{},{},{}", b.lo_hz, b.hi_hz, b.count);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut bins = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line == "lo_hz,hi_hz,count") {
                continue;
            }
            let bad = || Error::Parse {
                line: i + 1,
                message: "expected lo_hz,hi_hz,count".into(),
            };
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(bad());
            }
            bins.push(HistogramBin {
                lo_hz: parts[0].parse().map_err(|_| bad())?,
                hi_hz: parts[1].parse().map_err(|_| bad())?,
                count: parts[2].parse().map_err(|_| bad())?,
            });
        }
        let dominant = argmax_first(&bins);
        Ok(Self { bins, dominant })
    }
}

fn argmax_first(bins: &[HistogramBin]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, b) in bins.iter().enumerate() {
        if b.count > 0 && best.is_none_or(|j| b.count > bins[j].count) {
            best = Some(i);
        }
    }
    best
}

/// Histogram of estimated pixels over `n_bins` equal bins spanning the
/// observed range. The last bin is closed on the right.
pub fn freq_histogram(map: &FrequencyMap, n_bins: usize) -> Result<Histogram> {
    if n_bins == 0 {
        return Err(Error::InvalidArgument("n_bins must be >= 1".into()));
    }
    let values: Vec<f64> = map.values.iter().flatten().copied().collect();
    if values.is_empty() {
        return Ok(Histogram::default());
    }
    let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / n_bins as f64;
    let mut bins: Vec<HistogramBin> = (0..n_bins)
        .map(|i| HistogramBin {
            lo_hz: lo + i as f64 * width,
            hi_hz: if i + 1 == n_bins {
                hi
            } else {
                lo + (i + 1) as f64 * width
            },
            count: 0,
        })
        .collect();
    for f in values {
        let i = (((f - lo) / width) as usize).min(n_bins - 1);
        bins[i].count += 1;
    }
    let dominant = argmax_first(&bins);
    Ok(Histogram { bins, dominant })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_synth::{synth_flicker, FlickerParams, Rect, SensorModel};

    fn ev(t: u64, p: Polarity) -> Event {
        Event::new(t, 0, 0, p)
    }

    #[test]
    fn on_to_off_trace() {
        let mut s = PixelTransitionState::default();
        let out: Vec<Option<u64>> = [
            ev(0, Polarity::On),
            ev(5000, Polarity::Off),
            ev(10_000, Polarity::On),
            ev(15_000, Polarity::Off),
        ]
        .iter()
        .map(|e| update_pixel_state(&mut s, e, Transition::OnToOff))
        .collect();
        assert_eq!(out, vec![None, None, None, Some(10_000)]);
        assert_eq!(s.last_transition_t, Some(15_000));
        assert_eq!(s.intervals, vec![10_000]);
    }

    #[test]
    fn all_on_has_no_transitions() {
        let mut s = PixelTransitionState::default();
        for t in 0..10 {
            assert_eq!(
                update_pixel_state(&mut s, &ev(t * 100, Polarity::On), Transition::OnToOff),
                None
            );
        }
        assert_eq!(s.last_transition_t, None);
    }

    #[test]
    fn off_to_on_direction() {
        let mut s = PixelTransitionState::default();
        for (t, p) in [
            (0, Polarity::Off),
            (3, Polarity::On),
            (7, Polarity::Off),
            (10, Polarity::On),
        ] {
            update_pixel_state(&mut s, &ev(t, p), Transition::OffToOn);
        }
        assert_eq!(s.intervals, vec![7]);
    }

    #[test]
    fn forty_hz_flicker_intervals() {
        let g = SensorGeometry::new(2, 2).unwrap();
        let p = FlickerParams::new(Rect::new(0, 0, 1, 1), 40.0, 200_000);
        let stream = synth_flicker(g, &p, &SensorModel::default()).unwrap();
        let mut s = PixelTransitionState::default();
        let intervals: Vec<u64> = stream
            .events
            .iter()
            .filter_map(|e| update_pixel_state(&mut s, e, Transition::OnToOff))
            .collect();
        assert!(!intervals.is_empty());
        assert!(intervals.iter().all(|&d| d == 25_000));
    }

    #[test]
    fn estimator_examples() {
        let cfg = FreqMapConfig::default();
        assert_eq!(estimate_frequency(&[10_000, 10_000, 10_000], &cfg), Some(100.0));
        assert_eq!(estimate_frequency(&[], &cfg), None);
        assert_eq!(estimate_frequency(&[10_000], &cfg), None);
        assert_eq!(estimate_frequency(&[9000, 11_000, 10_000], &cfg), Some(100.0));
        let med = FreqMapConfig {
            estimator: Estimator::Median,
            ..cfg
        };
        assert_eq!(estimate_frequency(&[9000, 11_000, 10_000], &med), Some(100.0));
        assert_eq!(estimate_frequency(&[9000, 11_000, 10_500, 9500], &med), Some(100.0));
    }

    #[test]
    fn out_of_clamp_is_unestimated() {
        let cfg = FreqMapConfig::default();
        assert_eq!(estimate_frequency(&[100, 100], &cfg), None); // 10 kHz
        assert_eq!(estimate_frequency(&[2_000_000, 2_000_000], &cfg), None); // 0.5 Hz
        assert_eq!(estimate_frequency(&[200, 200], &cfg), Some(5000.0));
    }

    #[test]
    fn config_validation() {
        assert!(FreqMapConfig::default().validate().is_ok());
        assert!(FreqMapConfig::default().with_window_us(999).validate().is_err());
        let bad = FreqMapConfig {
            f_max_hz: 6000.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = FreqMapConfig {
            f_min_hz: 50.0,
            f_max_hz: 50.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(FreqMapConfig::structures().window_us, 15_000);
        assert_eq!(FreqMapConfig::flicker().window_us, 50_000);
        assert_eq!(FreqMapConfig::vibration().window_us, 20_000);
    }

    fn one_batch(stream: &EventStream) -> EventBatch<'_> {
        EventBatch {
            window_start_us: 0,
            window_end_us: u64::MAX,
            events: &stream.events,
        }
    }

    #[test]
    fn empty_batch_is_all_unestimated() {
        let g = SensorGeometry::new(8, 4).unwrap();
        let s = EventStream::empty(g);
        let m = compute_freq_map(&one_batch(&s), g, &FreqMapConfig::default());
        assert_eq!(m.estimated_count(), 0);
        assert_eq!(m.values.len(), 32);
    }

    #[test]
    fn two_regions_are_separated() {
        let g = SensorGeometry::new(20, 10).unwrap();
        let a = synth_flicker(
            g,
            &FlickerParams::new(Rect::new(0, 0, 8, 10), 40.0, 200_000),
            &SensorModel::default(),
        )
        .unwrap();
        let b = synth_flicker(
            g,
            &FlickerParams::new(Rect::new(12, 0, 8, 10), 100.0, 200_000),
            &SensorModel::default(),
        )
        .unwrap();
        let s = crate::event_model::merge_streams(g, &[a, b]);
        let m = compute_freq_map(&one_batch(&s), g, &FreqMapConfig::default());
        for y in 0..10 {
            for x in 0..20 {
                match x {
                    0..=7 => assert_eq!(m.get(x, y), Some(40.0)),
                    12..=19 => assert_eq!(m.get(x, y), Some(100.0)),
                    _ => assert_eq!(m.get(x, y), None),
                }
            }
        }
    }

    #[test]
    fn mapper_carries_intervals_across_batches() {
        let g = SensorGeometry::new(1, 1).unwrap();
        // 25 Hz: OFF edges every 40 ms, so a 50 ms batch holds at most one interval
        let s = synth_flicker(
            g,
            &FlickerParams::new(Rect::new(0, 0, 1, 1), 25.0, 400_000),
            &SensorModel::default(),
        )
        .unwrap();
        let cfg = FreqMapConfig::flicker();
        let maps = stream_freq_maps(&s, &cfg, None).unwrap();
        let isolated: Vec<Option<f64>> = batch_events(&s, cfg.window_us, None)
            .unwrap()
            .iter()
            .map(|b| compute_freq_map(b, g, &cfg).values[0])
            .collect();
        assert!(isolated.iter().all(|v| v.is_none()));
        let streamed: Vec<Option<f64>> = maps.iter().map(|(_, m)| m.values[0]).collect();
        // OFF edges at 20, 60, 100, ...; the third edge (100 ms) completes the second interval
        assert_eq!(streamed[0], None);
        assert_eq!(streamed[1], None);
        for v in &streamed[2..] {
            assert_eq!(*v, Some(25.0));
        }
        assert_eq!(recording_freq_map(&s, &cfg).unwrap().values[0], Some(25.0));
    }

    #[test]
    fn render_all_unestimated_is_grey_with_legend() {
        let g = SensorGeometry::new(30, 30).unwrap();
        let m = FrequencyMap::unestimated(g);
        let img = render_freq_map(&m, &FreqMapConfig::default(), Colormap::Turbo);
        assert_eq!((img.width, img.height), (30 + LEGEND_WIDTH, 30));
        for y in 0..30 {
            for x in 0..30 {
                assert_eq!(img.get(x, y), UNESTIMATED_GREY);
            }
        }
        // legend bar: max color at top, min at bottom
        assert_eq!(img.get(30 + LEGEND_BAR_X, 0), Colormap::Turbo.color(COLORMAP_LEN - 1));
        assert_eq!(img.get(30 + LEGEND_BAR_X, 29), Colormap::Turbo.color(0));
        // some label pixels are drawn
        let white = (0..img.height)
            .flat_map(|y| (30 + LEGEND_TEXT_X..img.width).map(move |x| (x, y)))
            .filter(|&(x, y)| img.get(x, y) == [255, 255, 255])
            .count();
        assert!(white > 10);
    }

    #[test]
    fn render_endpoints_map_to_first_and_last_entries() {
        let g = SensorGeometry::new(2, 1).unwrap();
        let cfg = FreqMapConfig {
            f_min_hz: 10.0,
            f_max_hz: 200.0,
            ..Default::default()
        };
        let m = FrequencyMap {
            geometry: g,
            values: vec![Some(10.0), Some(200.0)],
        };
        for cmap in [Colormap::Turbo, Colormap::Hsv] {
            let img = render_freq_map(&m, &cfg, cmap);
            assert_eq!(img.get(0, 0), cmap.color(0));
            assert_eq!(img.get(1, 0), cmap.color(COLORMAP_LEN - 1));
            assert_ne!(cmap.color(0), cmap.color(COLORMAP_LEN - 1));
        }
    }

    #[test]
    fn narrow_band_renders_in_a_narrow_hue_range() {
        let g = SensorGeometry::new(10, 1).unwrap();
        let cfg = FreqMapConfig {
            f_min_hz: 1.0,
            f_max_hz: 100.0,
            ..Default::default()
        };
        let m = FrequencyMap {
            geometry: g,
            values: (0..10).map(|i| Some(40.0 + i as f64)).collect(),
        };
        let img = render_freq_map(&m, &cfg, Colormap::Turbo);
        let (lo, hi) = (
            Colormap::index_of(40.0, 1.0, 100.0),
            Colormap::index_of(50.0, 1.0, 100.0),
        );
        let allowed: Vec<[u8; 3]> = (lo..=hi).map(|i| Colormap::Turbo.color(i)).collect();
        for x in 0..10 {
            assert!(allowed.contains(&img.get(x, 0)));
        }
    }

    #[test]
    fn histogram_single_frequency() {
        let g = SensorGeometry::new(20, 10).unwrap();
        let mut m = FrequencyMap::unestimated(g);
        for i in 0..100 {
            m.values[i] = Some(25.0);
        }
        let h = freq_histogram(&m, 8).unwrap();
        let d = h.dominant_bin().unwrap();
        assert!(d.contains(25.0));
        assert_eq!(d.count, 100);
        assert_eq!(h.bins.iter().map(|b| b.count).sum::<usize>(), 100);
    }

    #[test]
    fn histogram_edge_cases() {
        let g = SensorGeometry::new(4, 4).unwrap();
        let h = freq_histogram(&FrequencyMap::unestimated(g), 10).unwrap();
        assert!(h.bins.is_empty() && h.dominant.is_none());
        assert!(freq_histogram(&FrequencyMap::unestimated(g), 0).is_err());
    }

    #[test]
    fn histogram_two_modes() {
        let g = SensorGeometry::new(10, 10).unwrap();
        let mut m = FrequencyMap::unestimated(g);
        for i in 0..30 {
            m.values[i] = Some(40.0);
        }
        for i in 50..90 {
            m.values[i] = Some(100.0);
        }
        let h = freq_histogram(&m, 12).unwrap();
        let modes = h.modes();
        assert_eq!(modes.len(), 2);
        assert!(h.bins[modes[0]].contains(40.0));
        assert!(h.bins[modes[1]].contains(100.0));
        assert!(h.dominant_bin().unwrap().contains(100.0));
        let back = Histogram::from_csv(&h.to_csv()).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn map_csv_round_trip_and_omits_unestimated() {
        let g = SensorGeometry::new(3, 2).unwrap();
        let mut m = FrequencyMap::unestimated(g);
        m.set(2, 1, Some(41.5));
        m.set(0, 0, Some(100.0));
        let csv = m.to_csv();
        assert_eq!(csv, "x,y,freq_hz\n0,0,100\n2,1,41.5\n");
        assert_eq!(FrequencyMap::from_csv(&csv, Some(g)).unwrap(), m);
        assert_eq!(FrequencyMap::from_csv(&csv, None).unwrap(), m);
    }

    mod props {
        use super::*;
        use crate::event_model::merge_streams;
        use proptest::prelude::*;

        fn flicker(g: SensorGeometry, f: f64, dur: u64, phase: f64, jitter: u64, seed: u64) -> EventStream {
            let mut p = FlickerParams::new(Rect::new(0, 0, g.width, g.height), f, dur);
            p.phase_deg = phase;
            p.jitter_us = jitter;
            p.seed = seed;
            synth_flicker(g, &p, &SensorModel::default()).unwrap()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn square_wave_estimate_is_exact(f in 5.0f64..2000.0) {
                let g = SensorGeometry::new(1, 1).unwrap();
                let s = flicker(g, f, (6e6 / f) as u64, 0.0, 0, 0);
                let m = compute_freq_map(&one_batch(&s), g, &FreqMapConfig::default());
                let est = m.values[0].unwrap();
                // integer-us rounding bounds the per-edge error by 0.5 us
                let tol = f * f * 1e-6;
                prop_assert!((est - f).abs() <= tol, "{est} vs {f}");
            }

            #[test]
            fn transitions_agree_on_symmetric_square_waves(f in 10.0f64..1000.0, phase in 0.0f64..360.0) {
                let g = SensorGeometry::new(1, 1).unwrap();
                let s = flicker(g, f, (8e6 / f) as u64, phase, 0, 0);
                let on_off = compute_freq_map(&one_batch(&s), g, &FreqMapConfig::default()).values[0].unwrap();
                let cfg = FreqMapConfig { transition: Transition::OffToOn, ..Default::default() };
                let off_on = compute_freq_map(&one_batch(&s), g, &cfg).values[0].unwrap();
                prop_assert!((on_off - off_on).abs() <= f * f * 2e-6, "{on_off} vs {off_on}");
            }

            #[test]
            fn time_translation_invariance(f in 10.0f64..1000.0, shift in 0u64..10_000_000) {
                let g = SensorGeometry::new(2, 1).unwrap();
                let s = flicker(g, f, (5e6 / f) as u64, 0.0, 0, 0);
                let moved = EventStream::new(g, s.events.iter().map(|e| Event { t: e.t + shift, ..*e }).collect());
                let cfg = FreqMapConfig::default();
                let a = compute_freq_map(&one_batch(&s), g, &cfg);
                let b = compute_freq_map(&one_batch(&moved), g, &cfg);
                prop_assert_eq!(a, b);
            }

            #[test]
            fn jitter_perturbs_mean_by_less_than_seven_percent(f in 20.0f64..500.0, seed in any::<u64>()) {
                let g = SensorGeometry::new(4, 1).unwrap();
                let period = 1e6 / f;
                let s = flicker(g, f, (6.0 * period) as u64, 0.0, (0.05 * period) as u64, seed);
                let m = compute_freq_map(&one_batch(&s), g, &FreqMapConfig::default());
                for v in &m.values {
                    let est = v.unwrap();
                    prop_assert!((est - f).abs() / f < 0.07, "{est} vs {f}");
                }
            }

            #[test]
            fn parallel_equals_serial(seed in any::<u64>()) {
                let g = SensorGeometry::new(16, 8).unwrap();
                let a = flicker(g, 70.0, 100_000, 0.0, 300, seed);
                let b = flicker(g, 35.0, 100_000, 45.0, 300, seed ^ 1);
                let s = merge_streams(g, &[a, b]);
                let cfg = FreqMapConfig::default();
                let par = compute_freq_map(&one_batch(&s), g, &cfg);
                let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
                let ser = pool.install(|| compute_freq_map(&one_batch(&s), g, &cfg));
                prop_assert_eq!(par, ser);
            }
        }
    }
}
