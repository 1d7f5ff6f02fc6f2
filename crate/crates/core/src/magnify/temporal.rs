//! Temporal band-pass filters for per-coefficient phase series.
//!
//! Butterworth band-pass filters are designed by the bilinear transform with
//! pre-warped band edges and run causally as a cascade of biquads. FIR filters
//! are Hamming-windowed sinc band-passes applied centred, i.e. with the
//! `(n_taps - 1) / 2` group delay removed.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const DEFAULT_BUTTERWORTH_ORDER: usize = 2;
pub const DEFAULT_FIR_TAPS: usize = 65;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Butterworth { order: usize },
    Fir { n_taps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalFilter {
    pub kind: FilterKind,
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
    pub fps: f64,
}

impl TemporalFilter {
    pub fn butterworth(f_lo_hz: f64, f_hi_hz: f64, fps: f64) -> Self {
        Self {
            kind: FilterKind::Butterworth {
                order: DEFAULT_BUTTERWORTH_ORDER,
            },
            f_lo_hz,
            f_hi_hz,
            fps,
        }
    }

    pub fn fir(f_lo_hz: f64, f_hi_hz: f64, fps: f64) -> Self {
        Self {
            kind: FilterKind::Fir {
                n_taps: DEFAULT_FIR_TAPS,
            },
            f_lo_hz,
            f_hi_hz,
            fps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "fps must be positive, got {}",
                self.fps
            )));
        }
        let nyq = self.fps / 2.0;
        if !(self.f_lo_hz > 0.0 && self.f_lo_hz < self.f_hi_hz && self.f_hi_hz < nyq) {
            return Err(Error::FrequencyOutOfRange {
                freq_hz: if self.f_hi_hz >= nyq {
                    self.f_hi_hz
                } else {
                    self.f_lo_hz
                },
                range: format!("0 < f_lo < f_hi < {nyq} (Nyquist at {} fps)", self.fps),
            });
        }
        match self.kind {
            FilterKind::Butterworth { order } if order == 0 || order > 8 => Err(Error::InvalidArgument(format!(
                "butterworth order must be in 1..=8, got {order}"
            ))),
            FilterKind::Fir { n_taps } if n_taps < 3 || n_taps % 2 == 0 => Err(Error::InvalidArgument(format!(
                "FIR tap count must be odd and >= 3, got {n_taps}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Second-order section, `a[0] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + z_inv * self.b[1] + z2 * self.b[2]) / (self.a[0] + z_inv * self.a[1] + z2 * self.a[2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TemporalDesign {
    Iir { sections: Vec<Biquad> },
    Fir { taps: Vec<f64> },
}

pub fn design_temporal_filter(spec: &TemporalFilter) -> Result<TemporalDesign> {
    spec.validate()?;
    Ok(match spec.kind {
        FilterKind::Butterworth { order } => TemporalDesign::Iir {
            sections: butterworth_bandpass(order, spec.f_lo_hz, spec.f_hi_hz, spec.fps),
        },
        FilterKind::Fir { n_taps } => TemporalDesign::Fir {
            taps: fir_bandpass(n_taps, spec.f_lo_hz, spec.f_hi_hz, spec.fps),
        },
    })
}

fn prewarp(f_hz: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * f_hz / fs).tan()
}

fn butterworth_bandpass(order: usize, f_lo: f64, f_hi: f64, fs: f64) -> Vec<Biquad> {
    let (w_lo, w_hi) = (prewarp(f_lo, fs), prewarp(f_hi, fs));
    let w0_sq = w_lo * w_hi;
    let bw = w_hi - w_lo;
    let n = order as f64;

    let mut poles = Vec::with_capacity(2 * order);
    for k in 0..order {
        let p = Complex64::from_polar(1.0, PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n));
        // low-pass to band-pass: s^2 - p·B·s + w0^2 = 0
        let disc = (p * p * bw * bw - 4.0 * w0_sq).sqrt();
        for s in [(p * bw + disc) / 2.0, (p * bw - disc) / 2.0] {
            poles.push((2.0 * fs + s) / (2.0 * fs - s));
        }
    }

    let eps = 1e-12;
    let mut sections = Vec::with_capacity(order);
    let mut real: Vec<f64> = Vec::new();
    for z in &poles {
        if z.im > eps {
            sections.push(Biquad {
                b: [1.0, 0.0, -1.0],
                a: [1.0, -2.0 * z.re, z.norm_sqr()],
            });
        } else if z.im.abs() <= eps {
            real.push(z.re);
        }
    }
    real.sort_by(f64::total_cmp);
    for pair in real.chunks(2) {
        let (z1, z2) = (pair[0], *pair.get(1).unwrap_or(&0.0));
        sections.push(Biquad {
            b: [1.0, 0.0, -1.0],
            a: [1.0, -(z1 + z2), z1 * z2],
        });
    }

    // Unit gain at the digital image of the analog centre frequency.
    let w_center = 2.0 * (w0_sq.sqrt() / (2.0 * fs)).atan();
    let z_inv = Complex64::from_polar(1.0, -w_center);
    let g: Complex64 = sections.iter().map(|s| s.response(z_inv)).product();
    let per = (1.0 / g.norm()).powf(1.0 / sections.len() as f64);
    for s in &mut sections {
        s.b.iter_mut().for_each(|b| *b *= per);
    }
    sections
}

fn fir_bandpass(n_taps: usize, f_lo: f64, f_hi: f64, fs: f64) -> Vec<f64> {
    let d = (n_taps - 1) as f64 / 2.0;
    let window: Vec<f64> = (0..n_taps)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n_taps - 1) as f64).cos())
        .collect();
    let lowpass = |fc: f64| -> Vec<f64> {
        let c = 2.0 * fc / fs;
        let h: Vec<f64> = (0..n_taps)
            .map(|i| {
                let x = i as f64 - d;
                let sinc = if x == 0.0 {
                    1.0
                } else {
                    (PI * c * x).sin() / (PI * c * x)
                };
                c * sinc * window[i]
            })
            .collect();
        let dc: f64 = h.iter().sum();
        h.into_iter().map(|v| v / dc).collect()
    };
    let mut taps: Vec<f64> = lowpass(f_hi).iter().zip(lowpass(f_lo)).map(|(a, b)| a - b).collect();
    let center = 0.5 * (f_lo + f_hi);
    let g = centred_fir_response(&taps, center, fs).norm();
    taps.iter_mut().for_each(|t| *t /= g);
    taps
}

fn centred_fir_response(taps: &[f64], f_hz: f64, fs: f64) -> Complex64 {
    let d = (taps.len() - 1) as f64 / 2.0;
    taps.iter()
        .enumerate()
        .map(|(i, &h)| h * Complex64::from_polar(1.0, -2.0 * PI * f_hz * (i as f64 - d) / fs))
        .sum()
}

impl TemporalDesign {
    /// Frequency response at `f_hz`. FIR responses exclude the removed group delay.
    pub fn response(&self, f_hz: f64, fps: f64) -> Complex64 {
        match self {
            TemporalDesign::Iir { sections } => {
                let z_inv = Complex64::from_polar(1.0, -2.0 * PI * f_hz / fps);
                sections.iter().map(|s| s.response(z_inv)).product()
            }
            TemporalDesign::Fir { taps } => centred_fir_response(taps, f_hz, fps),
        }
    }

    pub fn is_causal(&self) -> bool {
        matches!(self, TemporalDesign::Iir { .. })
    }

    /// Frames at the ends of an `n`-frame sequence whose output is unreliable.
    pub fn transient_mask(&self, spec: &TemporalFilter, n: usize) -> Vec<bool> {
        match self {
            TemporalDesign::Iir { .. } => {
                let settle = (2.0 * spec.fps / spec.f_lo_hz).ceil() as usize;
                (0..n).map(|k| k < settle).collect()
            }
            TemporalDesign::Fir { taps } => {
                let d = (taps.len() - 1) / 2;
                (0..n).map(|k| k < d || k + d >= n).collect()
            }
        }
    }

    /// State values needed per filtered series.
    pub fn state_len(&self) -> usize {
        match self {
            TemporalDesign::Iir { sections } => 2 * sections.len(),
            TemporalDesign::Fir { .. } => 0,
        }
    }

    /// Whole-series filtering: causal for IIR, centred with edge replication for FIR.
    pub fn filter_series(&self, x: &[f64]) -> Vec<f64> {
        match self {
            TemporalDesign::Iir { sections } => {
                let mut state = vec![0.0; 2 * sections.len()];
                x.iter().map(|&v| iir_step(sections, &mut state, v)).collect()
            }
            TemporalDesign::Fir { taps } => (0..x.len()).map(|k| fir_at(taps, k, x.len(), |i| x[i])).collect(),
        }
    }
}

/// One sample through a biquad cascade (transposed direct form II).
#[inline]
pub fn iir_step(sections: &[Biquad], state: &mut [f64], x: f64) -> f64 {
    let mut v = x;
    for (s, st) in sections.iter().zip(state.chunks_exact_mut(2)) {
        let y = s.b[0] * v + st[0];
        st[0] = s.b[1] * v - s.a[1] * y + st[1];
        st[1] = s.b[2] * v - s.a[2] * y;
        v = y;
    }
    v
}

/// Centred FIR output at index `k` of an `n`-sample series; out-of-range inputs
/// take the nearest end sample.
#[inline]
pub fn fir_at(taps: &[f64], k: usize, n: usize, sample: impl Fn(usize) -> f64) -> f64 {
    let d = (taps.len() - 1) / 2;
    taps.iter()
        .enumerate()
        .map(|(i, &h)| {
            let j = (k + d).saturating_sub(i).min(n - 1);
            h * sample(j)
        })
        .sum()
}
