//! Ground-truth stimulus generators: square-wave flicker, frame-to-event
//! conversion under a contrast-threshold sensor model, and sub-pixel moving
//! patterns.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::event_model::{Event, EventStream, Polarity, SensorGeometry};
use crate::fft2::{signed_freq, Fft2};
pub use crate::frame::{Frame, FrameSequence};

/// Highest stimulus frequency representable without aliasing at a 10 kHz pixel sampling rate.
pub const MAX_FLICKER_HZ: f64 = 5000.0;

/// Intensities are clamped to this floor before taking logarithms.
pub const MIN_INTENSITY: f64 = 1e-3;

/// Software analogue of a sensor's contrast and refractory biases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    /// Log-intensity rise that triggers an ON event.
    pub contrast_threshold_on: f64,
    /// Log-intensity fall that triggers an OFF event.
    pub contrast_threshold_off: f64,
    /// Per-pixel dead time after an emitted event.
    pub refractory_us: u64,
}

impl SensorModel {
    pub fn new(contrast_threshold_on: f64, contrast_threshold_off: f64, refractory_us: u64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(contrast_threshold_on) || !ok(contrast_threshold_off) {
            return Err(Error::InvalidArgument(format!(
                "contrast thresholds must be positive, got on={contrast_threshold_on} off={contrast_threshold_off}"
            )));
        }
        Ok(Self {
            contrast_threshold_on,
            contrast_threshold_off,
            refractory_us,
        })
    }
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            contrast_threshold_on: 0.2,
            contrast_threshold_off: 0.2,
            refractory_us: 0,
        }
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: u16,
    pub y: u16,
    pub width: u16,
    pub height: u16,
}

impl Rect {
    pub fn new(x: u16, y: u16, width: u16, height: u16) -> Self {
        Self { x, y, width, height }
    }

    pub fn contains(&self, x: u16, y: u16) -> bool {
        x >= self.x && y >= self.y && (x - self.x) < self.width && (y - self.y) < self.height
    }

    pub fn area(&self) -> usize {
        self.width as usize * self.height as usize
    }

    fn fits(&self, g: SensorGeometry) -> bool {
        self.x as u32 + self.width as u32 <= g.width as u32 && self.y as u32 + self.height as u32 <= g.height as u32
    }

    pub fn pixels(&self) -> impl Iterator<Item = (u16, u16)> + '_ {
        (self.y..self.y + self.height).flat_map(move |y| (self.x..self.x + self.width).map(move |x| (x, y)))
    }
}

/// Square-wave illumination of a rectangular region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlickerParams {
    pub region: Rect,
    pub freq_hz: f64,
    pub duration_us: u64,
    /// Phase of the square wave; at 0 the light switches on at t = 0.
    pub phase_deg: f64,
    /// Uniform timestamp jitter of ± `jitter_us`; 0 disables.
    pub jitter_us: u64,
    pub seed: u64,
}

impl FlickerParams {
    pub fn new(region: Rect, freq_hz: f64, duration_us: u64) -> Self {
        Self {
            region,
            freq_hz,
            duration_us,
            phase_deg: 0.0,
            jitter_us: 0,
            seed: 0,
        }
    }
}

/// Square-wave flicker: each region pixel emits one ON event on every rising
/// edge and one OFF event on every falling edge within `[0, duration_us)`.
pub fn synth_flicker(geometry: SensorGeometry, params: &FlickerParams, model: &SensorModel) -> Result<EventStream> {
    let f = params.freq_hz;
    if !(f.is_finite() && f > 0.0 && f <= MAX_FLICKER_HZ) {
        return Err(Error::FrequencyOutOfRange {
            freq_hz: f,
            range: format!("(0, {MAX_FLICKER_HZ}]"),
        });
    }
    if !params.region.fits(geometry) {
        return Err(Error::InvalidArgument(format!(
            "region {:?} exceeds sensor {geometry}",
            params.region
        )));
    }
    let period = 1e6 / f;
    let offset = (params.phase_deg / 360.0).rem_euclid(1.0) * period;
    let duration = params.duration_us as f64;

    let mut edges: Vec<(u64, Polarity)> = Vec::new();
    let k_end = ((duration - offset) / period).ceil() as i64 + 1;
    for k in -1..=k_end {
        let on = offset + k as f64 * period;
        for (time, p) in [(on, Polarity::On), (on + 0.5 * period, Polarity::Off)] {
            let t = time.round();
            if t >= 0.0 && t < duration {
                edges.push((t as u64, p));
            }
        }
    }
    edges.sort_by_key(|&(t, _)| t);

    let pixels: Vec<(u16, u16)> = params.region.pixels().collect();
    let per_pixel: Vec<Vec<Event>> = pixels
        .par_iter()
        .map(|&(x, y)| {
            let mut times: Vec<(u64, Polarity)> = if params.jitter_us == 0 {
                edges.clone()
            } else {
                let pixel_seed = params.seed ^ ((geometry.index(x, y) as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let mut rng = ChaCha8Rng::seed_from_u64(pixel_seed);
                let j = params.jitter_us as i64;
                let mut v: Vec<(u64, Polarity)> = edges
                    .iter()
                    .map(|&(t, p)| ((t as i64 + rng.gen_range(-j..=j)).max(0) as u64, p))
                    .collect();
                v.sort_by_key(|&(t, _)| t);
                v
            };
            apply_refractory(&mut times, model.refractory_us);
            times.into_iter().map(|(t, p)| Event::new(t, x, y, p)).collect()
        })
        .collect();

    let mut events: Vec<Event> = per_pixel.into_iter().flatten().collect();
    events.sort_by_key(Event::sort_key);
    Ok(EventStream::new(geometry, events))
}

fn apply_refractory(times: &mut Vec<(u64, Polarity)>, refractory_us: u64) {
    if refractory_us == 0 {
        return;
    }
    let mut last: Option<u64> = None;
    times.retain(|&(t, _)| {
        let keep = last.is_none_or(|l| t - l >= refractory_us);
        if keep {
            last = Some(t);
        }
        keep
    });
}

/// Converts frames to events by tracking per-pixel log intensity.
///
/// Log intensity is interpolated linearly between frames. An ON (OFF) event
/// fires each time it rises (falls) by the ON (OFF) threshold relative to the
/// level of the previous crossing, stamped at the interpolated crossing time.
/// Crossings inside the refractory period advance the reference level but emit
/// nothing.
pub fn synth_from_frames(frames: &FrameSequence, model: &SensorModel) -> Result<EventStream> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("frame sequence is empty".into()));
    }
    let width = u16::try_from(frames.width).map_err(|_| Error::InvalidArgument("frame width exceeds 65535".into()))?;
    let height =
        u16::try_from(frames.height).map_err(|_| Error::InvalidArgument("frame height exceeds 65535".into()))?;
    let geometry = SensorGeometry::new(width, height)?;
    let times: Vec<f64> = (0..frames.len()).map(|k| frames.frame_time_us(k)).collect();

    let per_pixel: Vec<Vec<Event>> = (0..geometry.pixel_count())
        .into_par_iter()
        .map(|i| {
            let log_i: Vec<f64> = frames
                .frames
                .iter()
                .map(|f| f.data[i].clamp(MIN_INTENSITY, 1.0).ln())
                .collect();
            let x = (i % frames.width) as u16;
            let y = (i / frames.width) as u16;
            pixel_events(&log_i, &times, model)
                .into_iter()
                .map(|(t, p)| Event::new(t, x, y, p))
                .collect()
        })
        .collect();

    let mut events: Vec<Event> = per_pixel.into_iter().flatten().collect();
    events.sort_by_key(Event::sort_key);
    Ok(EventStream::new(geometry, events))
}

fn pixel_events(log_i: &[f64], times: &[f64], model: &SensorModel) -> Vec<(u64, Polarity)> {
    let mut out = Vec::new();
    let mut reference = log_i[0];
    let mut last_emit: Option<u64> = None;
    let mut emit = |t: f64, p: Polarity, out: &mut Vec<(u64, Polarity)>| {
        let t = t.round().max(0.0) as u64;
        if last_emit.is_none_or(|l| t.saturating_sub(l) >= model.refractory_us) {
            out.push((t, p));
            last_emit = Some(t);
        }
    };
    for k in 0..log_i.len().saturating_sub(1) {
        let (a, b) = (log_i[k], log_i[k + 1]);
        let (t0, t1) = (times[k], times[k + 1]);
        let at = |level: f64| t0 + ((level - a) / (b - a)).clamp(0.0, 1.0) * (t1 - t0);
        if b > a {
            while reference + model.contrast_threshold_on <= b {
                reference += model.contrast_threshold_on;
                emit(at(reference), Polarity::On, &mut out);
            }
        } else if b < a {
            while reference - model.contrast_threshold_off >= b {
                reference -= model.contrast_threshold_off;
                emit(at(reference), Polarity::Off, &mut out);
            }
        }
    }
    out
}

/// Base image for [`synth_moving_pattern`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pattern {
    /// `0.2 + 0.6 * exp(-r^2 / (2 sigma^2))`, centered in the frame.
    GaussianBlob { sigma_px: f64 },
    /// `0.5 + 0.4 * sin(2 pi x / period)`, varying along x.
    SineGrating { period_px: f64 },
}

impl Pattern {
    pub fn render(&self, width: usize, height: usize) -> Frame {
        match *self {
            Pattern::GaussianBlob { sigma_px } => {
                let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
                let s2 = 2.0 * sigma_px * sigma_px;
                Frame::from_fn(width, height, |x, y| {
                    let r2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    0.2 + 0.6 * (-r2 / s2).exp()
                })
            }
            Pattern::SineGrating { period_px } => Frame::from_fn(width, height, |x, _| {
                0.5 + 0.4 * (2.0 * PI * x as f64 / period_px).sin()
            }),
        }
    }
}

/// Translates a frame by `(dx, dy)` pixels with a Fourier phase ramp
/// (periodic boundaries): `out(x, y) = frame(x - dx, y - dy)`.
pub fn shift_frame(fft: &Fft2, frame: &Frame, dx: f64, dy: f64) -> Frame {
    let (w, h) = (frame.width, frame.height);
    let mut spec = fft.forward_real(&frame.data);
    apply_shift(&mut spec, w, h, dx, dy);
    fft.inverse(&mut spec);
    Frame {
        width: w,
        height: h,
        data: spec.iter().map(|c| c.re).collect(),
    }
}

fn apply_shift(spec: &mut [Complex64], w: usize, h: usize, dx: f64, dy: f64) {
    for v in 0..h {
        let fy = signed_freq(v, h) as f64 / h as f64;
        for u in 0..w {
            let fx = signed_freq(u, w) as f64 / w as f64;
            spec[v * w + u] *= Complex64::from_polar(1.0, -2.0 * PI * (fx * dx + fy * dy));
        }
    }
}

/// Frames of `pattern` translated along x by `amplitude_px * sin(2 pi motion_freq_hz t)`.
pub fn synth_moving_pattern(
    width: usize,
    height: usize,
    fps: f64,
    n_frames: usize,
    pattern: Pattern,
    amplitude_px: f64,
    motion_freq_hz: f64,
) -> Result<FrameSequence> {
    if n_frames == 0 {
        return Err(Error::InvalidArgument("n_frames must be >= 1".into()));
    }
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::InvalidArgument(format!("fps must be positive, got {fps}")));
    }
    if !(motion_freq_hz.is_finite() && motion_freq_hz >= 0.0 && motion_freq_hz < fps / 2.0) {
        return Err(Error::FrequencyOutOfRange {
            freq_hz: motion_freq_hz,
            range: format!("[0, {}) (below Nyquist)", fps / 2.0),
        });
    }
    let base = pattern.render(width, height);
    let fft = Fft2::new(width, height);
    let base_spec = fft.forward_real(&base.data);
    let frames = (0..n_frames)
        .into_par_iter()
        .map(|k| {
            let t = k as f64 / fps;
            let d = amplitude_px * (2.0 * PI * motion_freq_hz * t).sin();
            let mut spec = base_spec.clone();
            apply_shift(&mut spec, width, height, d, 0.0);
            fft.inverse(&mut spec);
            Frame {
                width,
                height,
                data: spec.iter().map(|c| c.re).collect(),
            }
        })
        .collect();
    FrameSequence::new(fps, frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_model::validate_stream;

    fn geom() -> SensorGeometry {
        SensorGeometry::new(16, 12).unwrap()
    }

    fn pixel_events_of(s: &EventStream, x: u16, y: u16) -> Vec<Event> {
        s.events.iter().filter(|e| e.x == x && e.y == y).copied().collect()
    }

    #[test]
    fn flicker_100hz_50ms() {
        let p = FlickerParams::new(Rect::new(2, 3, 4, 2), 100.0, 50_000);
        let s = synth_flicker(geom(), &p, &SensorModel::default()).unwrap();
        assert!(validate_stream(&s).is_empty());
        for (x, y) in p.region.pixels() {
            let ev = pixel_events_of(&s, x, y);
            let on: Vec<u64> = ev.iter().filter(|e| e.p == Polarity::On).map(|e| e.t).collect();
            let off: Vec<u64> = ev.iter().filter(|e| e.p == Polarity::Off).map(|e| e.t).collect();
            assert_eq!(on, vec![0, 10_000, 20_000, 30_000, 40_000]);
            assert_eq!(off, vec![5_000, 15_000, 25_000, 35_000, 45_000]);
        }
        assert_eq!(s.len(), 8 * 10);
        assert!(s.events.iter().all(|e| p.region.contains(e.x, e.y)));
    }

    #[test]
    fn flicker_25hz_one_second_has_25_on_off_transitions() {
        let p = FlickerParams::new(Rect::new(0, 0, 1, 1), 25.0, 1_000_000);
        let s = synth_flicker(geom(), &p, &SensorModel::default()).unwrap();
        let transitions = s
            .events
            .windows(2)
            .filter(|w| w[0].p == Polarity::On && w[1].p == Polarity::Off)
            .count();
        assert_eq!(transitions, 25);
    }

    #[test]
    fn flicker_frequency_bounds() {
        let r = Rect::new(0, 0, 1, 1);
        for f in [0.0, -3.0, 5000.5, f64::NAN] {
            let p = FlickerParams::new(r, f, 1000);
            assert!(matches!(
                synth_flicker(geom(), &p, &SensorModel::default()),
                Err(Error::FrequencyOutOfRange { .. })
            ));
        }
        assert!(synth_flicker(geom(), &FlickerParams::new(r, 5000.0, 1000), &SensorModel::default()).is_ok());
    }

    #[test]
    fn flicker_region_must_fit() {
        let p = FlickerParams::new(Rect::new(14, 0, 4, 1), 10.0, 1000);
        assert!(synth_flicker(geom(), &p, &SensorModel::default()).is_err());
    }

    #[test]
    fn flicker_phase_shifts_edges() {
        let mut p = FlickerParams::new(Rect::new(0, 0, 1, 1), 100.0, 20_000);
        p.phase_deg = 90.0;
        let s = synth_flicker(geom(), &p, &SensorModel::default()).unwrap();
        let ts: Vec<(u64, Polarity)> = s.events.iter().map(|e| (e.t, e.p)).collect();
        assert_eq!(
            ts,
            vec![
                (2_500, Polarity::On),
                (7_500, Polarity::Off),
                (12_500, Polarity::On),
                (17_500, Polarity::Off)
            ]
        );
    }

    #[test]
    fn flicker_refractory_longer_than_half_period_keeps_one_polarity() {
        let model = SensorModel::new(0.2, 0.2, 6_000).unwrap();
        let p = FlickerParams::new(Rect::new(0, 0, 2, 2), 100.0, 100_000);
        let s = synth_flicker(geom(), &p, &model).unwrap();
        assert!(s.events.iter().all(|e| e.p == Polarity::On));
        assert_eq!(s.len(), 4 * 10);
    }

    #[test]
    fn flicker_jitter_is_seeded_and_bounded() {
        let mut p = FlickerParams::new(Rect::new(0, 0, 3, 3), 50.0, 100_000);
        p.jitter_us = 200;
        p.seed = 7;
        let a = synth_flicker(geom(), &p, &SensorModel::default()).unwrap();
        let b = synth_flicker(geom(), &p, &SensorModel::default()).unwrap();
        assert_eq!(a, b);
        assert!(validate_stream(&a).is_empty());
        let clean = synth_flicker(geom(), &FlickerParams { jitter_us: 0, ..p }, &SensorModel::default()).unwrap();
        assert_ne!(a, clean);
        assert_eq!(a.len(), clean.len());
    }

    #[test]
    fn model_rejects_nonpositive_thresholds() {
        assert!(SensorModel::new(0.0, 0.2, 0).is_err());
        assert!(SensorModel::new(0.2, -1.0, 0).is_err());
    }

    fn seq(fps: f64, frames: Vec<Frame>) -> FrameSequence {
        FrameSequence::new(fps, frames).unwrap()
    }

    #[test]
    fn single_threshold_crossing_is_interpolated() {
        let a = Frame::filled(1, 1, 0.2);
        let b = Frame::filled(1, 1, 0.2 * 0.3f64.exp());
        let model = SensorModel::new(0.25, 0.25, 0).unwrap();
        let s = synth_from_frames(&seq(1000.0, vec![a, b]), &model).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.events[0].p, Polarity::On);
        // crossing at 0.25 / 0.3 of the 1000 us frame interval
        assert_eq!(s.events[0].t, 833);
    }

    #[test]
    fn constant_frames_emit_nothing() {
        let frames = vec![Frame::filled(4, 3, 0.5); 10];
        let s = synth_from_frames(&seq(100.0, frames), &SensorModel::default()).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.geometry, SensorGeometry::new(4, 3).unwrap());
    }

    #[test]
    fn falling_intensity_emits_off_events() {
        let a = Frame::filled(1, 1, 1.0);
        let b = Frame::filled(1, 1, (-0.65f64).exp());
        let s = synth_from_frames(&seq(1000.0, vec![a, b]), &SensorModel::default()).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.events.iter().all(|e| e.p == Polarity::Off));
        let ts: Vec<u64> = s.events.iter().map(|e| e.t).collect();
        assert_eq!(ts, vec![308, 615, 923]);
    }

    fn blink_frames(threshold_fps: f64, n: usize, freq: f64) -> FrameSequence {
        let frames = (0..n)
            .map(|k| {
                let t = k as f64 / threshold_fps;
                Frame::filled(2, 1, 0.5 + 0.4 * (2.0 * PI * freq * t).sin())
            })
            .collect();
        seq(threshold_fps, frames)
    }

    #[test]
    fn refractory_limits_events_per_period() {
        let frames = blink_frames(1000.0, 1000, 10.0);
        let free = synth_from_frames(&frames, &SensorModel::new(0.05, 0.05, 0).unwrap()).unwrap();
        let dead = synth_from_frames(&frames, &SensorModel::new(0.05, 0.05, 150_000).unwrap()).unwrap();
        assert!(free.len() > dead.len());
        // 1 s at 10 Hz with 150 ms dead time: at most one event per pixel per period
        assert!(dead.len() <= 2 * 10);
    }

    #[test]
    fn from_frames_output_is_valid() {
        let frames = blink_frames(500.0, 200, 7.0);
        let s = synth_from_frames(&frames, &SensorModel::default()).unwrap();
        assert!(validate_stream(&s).is_empty());
        assert!(!s.is_empty());
    }

    #[test]
    fn zero_amplitude_frames_are_identical() {
        let s = synth_moving_pattern(32, 24, 30.0, 5, Pattern::GaussianBlob { sigma_px: 3.0 }, 0.0, 5.0).unwrap();
        for f in &s.frames[1..] {
            assert!(f.max_abs_diff(&s.frames[0]) < 1e-12);
        }
    }

    #[test]
    fn half_period_grating_shift_negates() {
        // period 8, amplitude 4 px, 5 Hz at 20 fps: frame 1 sits at sin(pi/2) = 1
        let s = synth_moving_pattern(32, 8, 20.0, 2, Pattern::SineGrating { period_px: 8.0 }, 4.0, 5.0).unwrap();
        let (f0, f1) = (&s.frames[0], &s.frames[1]);
        for (a, b) in f0.data.iter().zip(&f1.data) {
            assert!(((a - 0.5) + (b - 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn moving_blob_matches_analytic_shift() {
        // Oracle: the blob formula evaluated at the displaced center.
        let (w, h, sigma) = (64, 64, 4.0);
        let s = synth_moving_pattern(w, h, 30.0, 30, Pattern::GaussianBlob { sigma_px: sigma }, 0.2, 5.0).unwrap();
        for (k, f) in s.frames.iter().enumerate() {
            let d = 0.2 * (2.0 * PI * 5.0 * k as f64 / 30.0).sin();
            let expect = Frame::from_fn(w, h, |x, y| {
                let r2 = (x as f64 - w as f64 / 2.0 - d).powi(2) + (y as f64 - h as f64 / 2.0).powi(2);
                0.2 + 0.6 * (-r2 / (2.0 * sigma * sigma)).exp()
            });
            assert!(f.max_abs_diff(&expect) < 1e-9, "frame {k}: {}", f.max_abs_diff(&expect));
        }
    }

    #[test]
    fn moving_pattern_rejects_aliasing() {
        let p = Pattern::GaussianBlob { sigma_px: 2.0 };
        assert!(matches!(
            synth_moving_pattern(16, 16, 30.0, 3, p, 0.2, 15.0),
            Err(Error::FrequencyOutOfRange { .. })
        ));
        assert!(synth_moving_pattern(16, 16, 30.0, 0, p, 0.2, 5.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            // Integer multiples keep the coarse reference lattice inside the
            // fine one; arbitrary ratios can misalign the two and break this.
            fn higher_threshold_never_adds_events(
                levels in proptest::collection::vec(0.01f64..1.0, 2..40),
                th in 0.02f64..0.5,
                scale in 1u32..5,
            ) {
                let scale = scale as f64;
                let frames: Vec<Frame> = levels.iter().map(|&v| Frame::filled(1, 1, v)).collect();
                let s = seq(100.0, frames);
                let lo = synth_from_frames(&s, &SensorModel::new(th, th, 0).unwrap()).unwrap();
                let hi = synth_from_frames(&s, &SensorModel::new(th * scale, th * scale, 0).unwrap()).unwrap();
                prop_assert!(hi.len() <= lo.len(), "{} > {}", hi.len(), lo.len());
            }

            #[test]
            fn flicker_always_valid(f in 1.0f64..5000.0, dur in 0u64..200_000, phase in 0.0f64..360.0) {
                let mut p = FlickerParams::new(Rect::new(1, 1, 2, 2), f, dur);
                p.phase_deg = phase;
                let s = synth_flicker(geom(), &p, &SensorModel::default()).unwrap();
                prop_assert!(validate_stream(&s).is_empty());
                prop_assert!(s.events.iter().all(|e| e.t < dur.max(1)));
            }
        }
    }
}
