//! Complex steerable pyramid built in the frequency domain.
//!
//! Every band is a real mask `B(r, θ) = R_level(r) · A_orient(θ)` on the 2-D
//! DFT grid. Radial masks are raised cosines in log2 frequency, cascaded so that
//! the high-pass residual, all band masks and the low-pass residual tile the
//! spectrum: `H² + Σ B² + L² = 1` at every sample. Angular masks are
//! `α · |cos(θ - θ_k)|^(K-1)` with `Σ_k A_k² = 1`.
//!
//! Decomposition keeps only the half of each band's spectrum where
//! `cos(θ - θ_k) > 0` (doubled), so band coefficients are complex and their
//! real part is the real steerable response. Reconstruction multiplies each
//! band spectrum by `B` again and takes the real part. Bands are kept at full
//! resolution and boundaries are periodic.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft2::{signed_freq, Fft2};
use crate::frame::Frame;

pub const MIN_SIZE: usize = 16;

/// Border added on each side by magnification before decomposing.
pub const MIRROR_BORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OctaveFraction {
    #[default]
    Full,
    Half,
}

impl OctaveFraction {
    pub fn bands_per_octave(self) -> usize {
        match self {
            OctaveFraction::Full => 1,
            OctaveFraction::Half => 2,
        }
    }
}

/// Frequency-domain masks for one image size.
#[derive(Debug, Clone)]
pub struct FilterBank {
    pub width: usize,
    pub height: usize,
    pub n_orientations: usize,
    pub octave_fraction: OctaveFraction,
    pub n_levels: usize,
    /// Real band masks, level-major: index `level * n_orientations + orientation`.
    pub band_masks: Vec<Vec<f64>>,
    /// Doubled half-plane band masks used for analysis.
    analytic_masks: Vec<Vec<f64>>,
    pub highpass_mask: Vec<f64>,
    pub lowpass_mask: Vec<f64>,
    fft: Fft2,
}

/// Smooth step across one transition band: 0 below `edge · 2^-width_oct`, 1 above `edge`.
fn transition(r: f64, edge: f64, width_oct: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    ((r / edge).log2() / width_oct + 1.0).clamp(0.0, 1.0)
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl FilterBank {
    pub fn new(width: usize, height: usize, n_orientations: usize, octave_fraction: OctaveFraction) -> Result<Self> {
        if width < MIN_SIZE || height < MIN_SIZE {
            return Err(Error::ImageTooSmall { width, height });
        }
        if n_orientations < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 orientations, got {n_orientations}"
            )));
        }
        let octaves = (width.min(height) as f64).log2().floor() as usize - 2;
        let per_octave = octave_fraction.bands_per_octave();
        let n_levels = octaves * per_octave;
        let width_oct = 1.0 / per_octave as f64;
        // radial edges: c_j = pi * 2^(-j / bands_per_octave)
        let edge = |j: usize| PI * 2f64.powf(-(j as f64) * width_oct);

        let k = n_orientations;
        let order = (k - 1) as i32;
        let alpha = (4f64.powi(order) / (k as f64 * binomial(2 * (k as u64 - 1), k as u64 - 1))).sqrt();
        let n = width * height;
        let n_bands = n_levels * k;

        let mut band_masks = vec![vec![0.0; n]; n_bands];
        let mut analytic_masks = vec![vec![0.0; n]; n_bands];
        let mut highpass_mask = vec![0.0; n];
        let mut lowpass_mask = vec![0.0; n];

        for v in 0..height {
            let sy = signed_freq(v, height);
            let wy = 2.0 * PI * sy as f64 / height as f64;
            let self_conj_y = (height - v) % height == v;
            for u in 0..width {
                let sx = signed_freq(u, width);
                let wx = 2.0 * PI * sx as f64 / width as f64;
                let self_conj = self_conj_y && (width - u) % width == u;
                let i = v * width + u;
                let r = (wx * wx + wy * wy).sqrt();
                let theta = wy.atan2(wx);

                let hp = (PI / 2.0 * transition(r, edge(0), width_oct)).sin();
                highpass_mask[i] = hp;
                let mut lo = (PI / 2.0 * transition(r, edge(0), width_oct)).cos();
                for level in 0..n_levels {
                    let t = transition(r, edge(level + 1), width_oct);
                    let radial = lo * (PI / 2.0 * t).sin();
                    lo *= (PI / 2.0 * t).cos();
                    if radial == 0.0 {
                        continue;
                    }
                    for o in 0..k {
                        let c = (theta - PI * o as f64 / k as f64).cos();
                        let b = radial * alpha * c.abs().powi(order);
                        let half = if self_conj || c == 0.0 {
                            0.5
                        } else if c > 0.0 {
                            1.0
                        } else {
                            0.0
                        };
                        band_masks[level * k + o][i] = b;
                        analytic_masks[level * k + o][i] = 2.0 * half * b;
                    }
                }
                lowpass_mask[i] = lo;
            }
        }

        Ok(Self {
            width,
            height,
            n_orientations,
            octave_fraction,
            n_levels,
            band_masks,
            analytic_masks,
            highpass_mask,
            lowpass_mask,
            fft: Fft2::new(width, height),
        })
    }

    pub fn n_bands(&self) -> usize {
        self.band_masks.len()
    }

    pub fn band_index(&self, level: usize, orientation: usize) -> usize {
        level * self.n_orientations + orientation
    }

    /// `(level, orientation)` of a band index.
    pub fn band_position(&self, band: usize) -> (usize, usize) {
        (band / self.n_orientations, band % self.n_orientations)
    }

    /// Peak radial frequency of a level in cycles per pixel.
    pub fn center_frequency(&self, level: usize) -> f64 {
        let per = self.octave_fraction.bands_per_octave() as f64;
        0.5 * 2f64.powf(-((level + 1) as f64) / per)
    }

    /// Preferred direction of an orientation in radians, measured from +x toward +y.
    pub fn orientation_angle(&self, orientation: usize) -> f64 {
        PI * orientation as f64 / self.n_orientations as f64
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    /// `H² + Σ B² + L²` at every frequency sample.
    pub fn tiling_sum(&self) -> Vec<f64> {
        let mut sum: Vec<f64> = self
            .highpass_mask
            .iter()
            .zip(&self.lowpass_mask)
            .map(|(h, l)| h * h + l * l)
            .collect();
        for m in &self.band_masks {
            for (s, b) in sum.iter_mut().zip(m) {
                *s += b * b;
            }
        }
        sum
    }

    fn same_shape(&self, other: &FilterBank) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.n_orientations == other.n_orientations
            && self.octave_fraction == other.octave_fraction
    }

    /// Complex coefficients of one band from a precomputed frame spectrum.
    pub fn analyze_band(&self, spectrum: &[Complex64], band: usize) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = spectrum
            .iter()
            .zip(&self.analytic_masks[band])
            .map(|(s, m)| s * m)
            .collect();
        self.fft.inverse(&mut buf);
        buf
    }

    /// One band's synthesis spectrum: `FFT(coeffs) · B`.
    pub fn band_contribution(&self, coeffs: &[Complex64], band: usize) -> Vec<Complex64> {
        let mut buf = coeffs.to_vec();
        self.fft.forward(&mut buf);
        for (b, m) in buf.iter_mut().zip(&self.band_masks[band]) {
            *b *= m;
        }
        buf
    }

    /// Adds one band's synthesis contribution to an accumulated spectrum.
    pub fn synthesize_band_into(&self, coeffs: &[Complex64], band: usize, acc: &mut [Complex64]) {
        for (a, c) in acc.iter_mut().zip(self.band_contribution(coeffs, band)) {
            *a += c;
        }
    }

    /// High-pass and low-pass residual images of a frame spectrum.
    pub fn residuals(&self, spectrum: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        (
            self.residual(spectrum, &self.highpass_mask),
            self.residual(spectrum, &self.lowpass_mask),
        )
    }

    /// Real residual from a frame spectrum and one of the residual masks.
    fn residual(&self, spectrum: &[Complex64], mask: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = spectrum.iter().zip(mask).map(|(s, m)| s * m).collect();
        self.fft.inverse(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Real image from an accumulated synthesis spectrum.
    pub fn finish_synthesis(&self, mut acc: Vec<Complex64>) -> Frame {
        self.fft.inverse(&mut acc);
        Frame {
            width: self.width,
            height: self.height,
            data: acc.into_iter().map(|c| c.re).collect(),
        }
    }

    /// Synthesis spectrum of the two residuals.
    pub fn residual_spectrum(&self, highpass: &[f64], lowpass: &[f64]) -> Vec<Complex64> {
        let hp = self.fft.forward_real(highpass);
        let lp = self.fft.forward_real(lowpass);
        hp.iter()
            .zip(&lp)
            .zip(self.highpass_mask.iter().zip(&self.lowpass_mask))
            .map(|((h, l), (mh, ml))| h * mh + l * ml)
            .collect()
    }
}

/// One complex subband at full resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub level: usize,
    pub orientation: usize,
    pub coeffs: Vec<Complex64>,
}

impl Band {
    pub fn amplitudes(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.norm()).collect()
    }

    /// Phases wrapped to `(-π, π]`.
    pub fn phases(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| wrap_phase(c.arg())).collect()
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_phase(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    pub width: usize,
    pub height: usize,
    pub n_orientations: usize,
    pub n_levels: usize,
    pub bands: Vec<Band>,
    pub highpass: Vec<f64>,
    pub lowpass: Vec<f64>,
}

impl Pyramid {
    pub fn zeroed_like(&self) -> Pyramid {
        let mut p = self.clone();
        for b in &mut p.bands {
            b.coeffs.iter_mut().for_each(|c| *c = Complex64::default());
        }
        p.highpass.iter_mut().for_each(|v| *v = 0.0);
        p.lowpass.iter_mut().for_each(|v| *v = 0.0);
        p
    }

    /// `a · self + b · other`, coefficient-wise.
    pub fn linear_combination(&self, a: f64, other: &Pyramid, b: f64) -> Result<Pyramid> {
        if self.bands.len() != other.bands.len() || self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch("pyramids have different shapes".into()));
        }
        let mut out = self.clone();
        for (o, q) in out.bands.iter_mut().zip(&other.bands) {
            for (c, d) in o.coeffs.iter_mut().zip(&q.coeffs) {
                *c = *c * a + *d * b;
            }
        }
        for (v, w) in out.highpass.iter_mut().zip(&other.highpass) {
            *v = *v * a + w * b;
        }
        for (v, w) in out.lowpass.iter_mut().zip(&other.lowpass) {
            *v = *v * a + w * b;
        }
        Ok(out)
    }

    fn matches(&self, bank: &FilterBank) -> bool {
        self.width == bank.width
            && self.height == bank.height
            && self.n_orientations == bank.n_orientations
            && self.n_levels == bank.n_levels
            && self.bands.len() == bank.n_bands()
    }
}

pub fn build_filter_bank(
    width: usize,
    height: usize,
    n_orientations: usize,
    octave_fraction: OctaveFraction,
) -> Result<FilterBank> {
    FilterBank::new(width, height, n_orientations, octave_fraction)
}

pub fn decompose(frame: &Frame, bank: &FilterBank) -> Result<Pyramid> {
    if frame.width != bank.width || frame.height != bank.height {
        return Err(Error::DimensionMismatch(format!(
            "frame is {}x{}, filter bank is {}x{}",
            frame.width, frame.height, bank.width, bank.height
        )));
    }
    let spectrum = bank.fft.forward_real(&frame.data);
    let bands = (0..bank.n_bands())
        .into_par_iter()
        .map(|b| {
            let (level, orientation) = bank.band_position(b);
            Band {
                level,
                orientation,
                coeffs: bank.analyze_band(&spectrum, b),
            }
        })
        .collect();
    Ok(Pyramid {
        width: bank.width,
        height: bank.height,
        n_orientations: bank.n_orientations,
        n_levels: bank.n_levels,
        bands,
        highpass: bank.residual(&spectrum, &bank.highpass_mask),
        lowpass: bank.residual(&spectrum, &bank.lowpass_mask),
    })
}

pub fn reconstruct(pyr: &Pyramid, bank: &FilterBank) -> Result<Frame> {
    if !pyr.matches(bank) {
        return Err(Error::DimensionMismatch(
            "pyramid was not built with this filter bank".into(),
        ));
    }
    let mut acc = bank.residual_spectrum(&pyr.highpass, &pyr.lowpass);
    for (b, band) in pyr.bands.iter().enumerate() {
        bank.synthesize_band_into(&band.coeffs, b, &mut acc);
    }
    Ok(bank.finish_synthesis(acc))
}

/// Multiplies every coefficient of band `b` by `exp(j · offsets[b])`.
pub fn shift_phase(pyr: &Pyramid, offsets: &[f64]) -> Result<Pyramid> {
    if offsets.len() != pyr.bands.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} phase offsets for {} bands",
            offsets.len(),
            pyr.bands.len()
        )));
    }
    if let Some(bad) = offsets.iter().find(|o| !o.is_finite()) {
        return Err(Error::InvalidArgument(format!("phase offset {bad} is not finite")));
    }
    let mut out = pyr.clone();
    for (band, &off) in out.bands.iter_mut().zip(offsets) {
        let rot = Complex64::from_polar(1.0, off);
        band.coeffs.iter_mut().for_each(|c| *c *= rot);
    }
    Ok(out)
}

/// Checks that two banks were built for the same image size and layout.
pub fn same_bank(a: &FilterBank, b: &FilterBank) -> bool {
    a.same_shape(b)
}
