//! Phase-based motion magnification.
//!
//! Each frame is mirror-padded, decomposed into complex subbands, and every
//! coefficient's phase is compared with the first frame. The phase deviation
//! series is band-passed in time, optionally smoothed with amplitude-weighted
//! Gaussian denoising, scaled by `m` and added back as a phase rotation before
//! reconstruction. A translation `δ(t)` in the pass band therefore comes out
//! as `(1 + m) · δ(t)`.

mod registration;
mod temporal;

pub use registration::{measure_displacement, register, sinusoid_amplitude};
pub use temporal::{
    design_temporal_filter, fir_at, iir_step, Biquad, FilterKind, TemporalDesign, TemporalFilter,
    DEFAULT_BUTTERWORTH_ORDER, DEFAULT_FIR_TAPS,
};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::{Frame, FrameSequence};
use crate::freqmap::Histogram;
use crate::steerable::{wrap_phase, FilterBank, OctaveFraction, Pyramid, MIRROR_BORDER};

pub const DEFAULT_DENOISE_SIGMA_PX: f64 = 2.0;
pub const DEFAULT_ORIENTATIONS: usize = 8;
pub const DEFAULT_OCTAVE_FRACTION: OctaveFraction = OctaveFraction::Half;
pub const MIN_FRAMES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnifyParams {
    pub m: f64,
    pub filter: TemporalFilter,
    pub denoise_sigma_px: f64,
    pub amplify_lowpass_residual: bool,
}

impl MagnifyParams {
    pub fn new(m: f64, filter: TemporalFilter) -> Self {
        Self {
            m,
            filter,
            denoise_sigma_px: DEFAULT_DENOISE_SIGMA_PX,
            amplify_lowpass_residual: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.m.is_finite() {
            return Err(Error::InvalidArgument(format!("m must be finite, got {}", self.m)));
        }
        if !(self.denoise_sigma_px.is_finite() && self.denoise_sigma_px >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "denoise sigma must be >= 0, got {}",
                self.denoise_sigma_px
            )));
        }
        self.filter.validate()
    }
}

/// Filter bank sized for frames of `width × height` after mirror padding.
pub fn magnify_bank(
    width: usize,
    height: usize,
    n_orientations: usize,
    octave_fraction: OctaveFraction,
) -> Result<FilterBank> {
    FilterBank::new(
        width + 2 * MIRROR_BORDER,
        height + 2 * MIRROR_BORDER,
        n_orientations,
        octave_fraction,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct MagnifyOutput {
    pub frames: FrameSequence,
    /// Frames dominated by temporal-filter start-up (or FIR edge) effects.
    pub transient: Vec<bool>,
}

impl MagnifyOutput {
    pub fn steady_indices(&self) -> Vec<usize> {
        (0..self.transient.len()).filter(|&k| !self.transient[k]).collect()
    }
}

/// Per-band wrapped phase difference `wrap(φ_t - φ_ref)` in `(-π, π]`.
pub fn phase_delta(pyr_t: &Pyramid, pyr_ref: &Pyramid) -> Result<Vec<Vec<f64>>> {
    if pyr_t.bands.len() != pyr_ref.bands.len() || pyr_t.width != pyr_ref.width || pyr_t.height != pyr_ref.height {
        return Err(Error::DimensionMismatch(
            "pyramids come from different filter banks".into(),
        ));
    }
    Ok(pyr_t
        .bands
        .iter()
        .zip(&pyr_ref.bands)
        .map(|(t, r)| {
            let ref_phase: Vec<f64> = r.coeffs.iter().map(|c| c.arg()).collect();
            deltas(&t.coeffs, &ref_phase)
        })
        .collect())
}

fn deltas(coeffs: &[Complex64], ref_phase: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .zip(ref_phase)
        .map(|(c, r)| wrap_phase(c.arg() - r))
        .collect()
}

/// Amplitude-weighted spatial smoothing: `G∗(A²Δφ) / G∗(A²)`. Sigma 0 is the identity.
pub fn denoise_phase(delta: &[f64], amplitudes: &[f64], width: usize, height: usize, sigma_px: f64) -> Vec<f64> {
    if sigma_px <= 0.0 {
        return delta.to_vec();
    }
    let kernel = gaussian_kernel(sigma_px);
    let weight: Vec<f64> = amplitudes.iter().map(|a| a * a).collect();
    let weighted: Vec<f64> = weight.iter().zip(delta).map(|(w, d)| w * d).collect();
    let num = blur(&weighted, width, height, &kernel);
    let den = blur(&weight, width, height, &kernel);
    num.iter()
        .zip(&den)
        .zip(delta)
        .map(|((n, d), orig)| if *d > 1e-300 { n / d } else { *orig })
        .collect()
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable blur with clamp-to-edge boundaries.
fn blur(data: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = kernel.len() / 2;
    let mut tmp = vec![0.0; w * h];
    tmp.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let src = &data[y * w..(y + 1) * w];
        let padded: Vec<f64> = (0..w + 2 * r)
            .map(|i| src[(i as isize - r as isize).clamp(0, w as isize - 1) as usize])
            .collect();
        for (x, out) in row.iter_mut().enumerate() {
            let win = &padded[x..x + kernel.len()];
            *out = kernel.iter().zip(win).map(|(k, v)| k * v).sum();
        }
    });
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (i, k) in kernel.iter().enumerate() {
            let sy = (y as isize + i as isize - r as isize).clamp(0, h as isize - 1) as usize;
            for (o, v) in row.iter_mut().zip(&tmp[sy * w..(sy + 1) * w]) {
                *o += k * v;
            }
        }
    });
    out
}

/// Rotates each coefficient by `m · phase`; amplitudes are untouched.
pub fn apply_phase_gain(coeffs: &mut [Complex64], phase: &[f64], m: f64) {
    for (c, p) in coeffs.iter_mut().zip(phase) {
        *c *= Complex64::from_polar(1.0, m * p);
    }
}

fn check_inputs(frames: &FrameSequence, params: &MagnifyParams, bank: &FilterBank) -> Result<()> {
    params.validate()?;
    if frames.len() < MIN_FRAMES {
        return Err(Error::InvalidArgument(format!(
            "magnification needs at least {MIN_FRAMES} frames, got {}",
            frames.len()
        )));
    }
    check_geometry(frames.width, frames.height, frames.fps, params, bank)
}

fn check_geometry(width: usize, height: usize, fps: f64, params: &MagnifyParams, bank: &FilterBank) -> Result<()> {
    if (params.filter.fps - fps).abs() > 1e-9 * fps {
        return Err(Error::InvalidArgument(format!(
            "filter designed for {} fps but frames are at {} fps",
            params.filter.fps, fps
        )));
    }
    if bank.width != width + 2 * MIRROR_BORDER || bank.height != height + 2 * MIRROR_BORDER {
        return Err(Error::DimensionMismatch(format!(
            "frames are {width}x{height}; filter bank must be {}x{} (frame plus {MIRROR_BORDER}-px mirror border)",
            width + 2 * MIRROR_BORDER,
            height + 2 * MIRROR_BORDER
        )));
    }
    Ok(())
}

fn crop(f: Frame, width: usize, height: usize) -> Frame {
    f.crop(MIRROR_BORDER, MIRROR_BORDER, width, height)
}

/// Filters a `[frame][pixel]` grid along time.
fn filter_grid(design: &TemporalDesign, series: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = series.len();
    let npx = series[0].len();
    match design {
        TemporalDesign::Iir { sections } => {
            let mut state = vec![0.0; npx * design.state_len()];
            let sl = design.state_len();
            let mut out = Vec::with_capacity(n);
            for x in series {
                let mut y = vec![0.0; npx];
                y.par_iter_mut()
                    .zip(state.par_chunks_mut(sl))
                    .zip(x.par_iter())
                    .for_each(|((y, st), &v)| *y = iir_step(sections, st, v));
                out.push(y);
            }
            out
        }
        TemporalDesign::Fir { taps } => (0..n)
            .into_par_iter()
            .map(|k| (0..npx).map(|i| fir_at(taps, k, n, |j| series[j][i])).collect())
            .collect(),
    }
}

/// Magnifies in-band motion of a whole sequence. `bank` must come from
/// [`magnify_bank`] for the sequence's frame size.
pub fn magnify_sequence(frames: &FrameSequence, params: &MagnifyParams, bank: &FilterBank) -> Result<MagnifyOutput> {
    check_inputs(frames, params, bank)?;
    let design = design_temporal_filter(&params.filter)?;
    let (w, h) = (frames.width, frames.height);
    let (pw, ph) = (bank.width, bank.height);
    let fft = bank.fft();

    let spectra: Vec<Vec<Complex64>> = frames
        .frames
        .par_iter()
        .map(|f| fft.forward_real(&f.mirror_pad(MIRROR_BORDER).data))
        .collect();

    let residuals: Vec<(Vec<f64>, Vec<f64>)> = spectra.par_iter().map(|s| bank.residuals(s)).collect();
    let (highs, mut lows): (Vec<Vec<f64>>, Vec<Vec<f64>>) = residuals.into_iter().unzip();
    if params.amplify_lowpass_residual {
        let diffs: Vec<Vec<f64>> = lows
            .iter()
            .map(|l| l.iter().zip(&lows[0]).map(|(a, b)| a - b).collect())
            .collect();
        let filtered = filter_grid(&design, &diffs);
        for (l, f) in lows.iter_mut().zip(&filtered) {
            for (v, d) in l.iter_mut().zip(f) {
                *v += params.m * d;
            }
        }
    }
    let mut acc: Vec<Vec<Complex64>> = highs
        .par_iter()
        .zip(lows.par_iter())
        .map(|(hp, lp)| bank.residual_spectrum(hp, lp))
        .collect();

    for band in 0..bank.n_bands() {
        let mut coeffs: Vec<Vec<Complex64>> = spectra.par_iter().map(|s| bank.analyze_band(s, band)).collect();
        let ref_phase: Vec<f64> = coeffs[0].iter().map(|c| c.arg()).collect();
        let delta: Vec<Vec<f64>> = coeffs.par_iter().map(|c| deltas(c, &ref_phase)).collect();
        let filtered = filter_grid(&design, &delta);
        coeffs
            .par_iter_mut()
            .zip(filtered.par_iter())
            .zip(acc.par_iter_mut())
            .for_each(|((c, f), a)| {
                let amps: Vec<f64> = c.iter().map(|v| v.norm()).collect();
                let d = denoise_phase(f, &amps, pw, ph, params.denoise_sigma_px);
                apply_phase_gain(c, &d, params.m);
                for (acc, v) in a.iter_mut().zip(bank.band_contribution(c, band)) {
                    *acc += v;
                }
            });
    }

    let out: Vec<Frame> = acc
        .into_par_iter()
        .map(|a| crop(bank.finish_synthesis(a), w, h))
        .collect();
    Ok(MagnifyOutput {
        frames: FrameSequence::new(frames.fps, out)?,
        transient: design.transient_mask(&params.filter, frames.len()),
    })
}

/// Frame-at-a-time magnifier with bounded per-coefficient state. Only causal
/// (Butterworth) filters are supported; output matches [`magnify_sequence`]
/// exactly for the same inputs.
pub struct StreamingMagnifier<'a> {
    bank: &'a FilterBank,
    params: MagnifyParams,
    sections: Vec<Biquad>,
    width: usize,
    height: usize,
    ref_phase: Vec<Vec<f64>>,
    band_state: Vec<Vec<f64>>,
    lowpass_ref: Vec<f64>,
    lowpass_state: Vec<f64>,
    frames_seen: usize,
}

impl<'a> StreamingMagnifier<'a> {
    pub fn new(width: usize, height: usize, params: MagnifyParams, bank: &'a FilterBank) -> Result<Self> {
        params.validate()?;
        check_geometry(width, height, params.filter.fps, &params, bank)?;
        let TemporalDesign::Iir { sections } = design_temporal_filter(&params.filter)? else {
            return Err(Error::InvalidArgument(
                "streaming magnification needs a causal (butterworth) filter".into(),
            ));
        };
        Ok(Self {
            bank,
            params,
            sections,
            width,
            height,
            ref_phase: Vec::new(),
            band_state: Vec::new(),
            lowpass_ref: Vec::new(),
            lowpass_state: Vec::new(),
            frames_seen: 0,
        })
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    pub fn push(&mut self, frame: &Frame) -> Result<Frame> {
        if frame.width != self.width || frame.height != self.height {
            return Err(Error::DimensionMismatch(format!(
                "expected {}x{} frame, got {}x{}",
                self.width, self.height, frame.width, frame.height
            )));
        }
        let bank = self.bank;
        let npx = bank.width * bank.height;
        let sl = 2 * self.sections.len();
        let spectrum = bank.fft().forward_real(&frame.mirror_pad(MIRROR_BORDER).data);
        let (hp, mut lp) = bank.residuals(&spectrum);

        if self.frames_seen == 0 {
            self.ref_phase = (0..bank.n_bands())
                .into_par_iter()
                .map(|b| bank.analyze_band(&spectrum, b).iter().map(|c| c.arg()).collect())
                .collect();
            self.band_state = vec![vec![0.0; npx * sl]; bank.n_bands()];
            self.lowpass_ref = lp.clone();
            self.lowpass_state = vec![0.0; npx * sl];
        }
        if self.params.amplify_lowpass_residual {
            let sections = &self.sections;
            let m = self.params.m;
            lp.par_iter_mut()
                .zip(self.lowpass_ref.par_iter())
                .zip(self.lowpass_state.par_chunks_mut(sl))
                .for_each(|((v, r), st)| {
                    let d = iir_step(sections, st, *v - r);
                    *v += m * d;
                });
        }
        let mut acc = bank.residual_spectrum(&hp, &lp);

        let (pw, ph) = (bank.width, bank.height);
        let params = self.params;
        let sections = &self.sections;
        let contributions: Vec<Vec<Complex64>> = self
            .band_state
            .par_iter_mut()
            .zip(self.ref_phase.par_iter())
            .enumerate()
            .map(|(b, (state, ref_phase))| {
                let mut c = bank.analyze_band(&spectrum, b);
                let delta = deltas(&c, ref_phase);
                let mut filtered = vec![0.0; npx];
                filtered
                    .par_iter_mut()
                    .zip(state.par_chunks_mut(sl))
                    .zip(delta.par_iter())
                    .for_each(|((y, st), &v)| *y = iir_step(sections, st, v));
                let amps: Vec<f64> = c.iter().map(|v| v.norm()).collect();
                let d = denoise_phase(&filtered, &amps, pw, ph, params.denoise_sigma_px);
                apply_phase_gain(&mut c, &d, params.m);
                bank.band_contribution(&c, b)
            })
            .collect();
        for contrib in contributions {
            for (a, v) in acc.iter_mut().zip(contrib) {
                *a += v;
            }
        }
        self.frames_seen += 1;
        Ok(crop(bank.finish_synthesis(acc), self.width, self.height))
    }
}

/// Pass band taken from the dominant bin of a frequency histogram.
pub fn band_from_histogram(hist: &Histogram) -> Result<(f64, f64)> {
    let bin = hist
        .dominant_bin()
        .ok_or_else(|| Error::InvalidArgument("histogram has no estimated pixels".into()))?;
    if !(bin.lo_hz > 0.0 && bin.hi_hz > bin.lo_hz) {
        return Err(Error::InvalidArgument(format!(
            "dominant histogram bin [{}, {}] is not a usable band",
            bin.lo_hz, bin.hi_hz
        )));
    }
    Ok((bin.lo_hz, bin.hi_hz))
}
