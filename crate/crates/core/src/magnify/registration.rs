//! Sub-pixel translation measurement by phase correlation.
//!
//! The integer peak of the normalised cross-power spectrum gives the coarse
//! shift; the residual is a weighted least-squares fit of the cross-power
//! phase plane over the lower half of the spectrum.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft2::{signed_freq, Fft2};
use crate::frame::{Frame, FrameSequence};

/// Translation `(dx, dy)` such that `frame(x) ≈ reference(x - dx)`.
pub fn register(fft: &Fft2, reference: &Frame, frame: &Frame) -> Result<(f64, f64)> {
    let (w, h) = (reference.width, reference.height);
    if frame.width != w || frame.height != h || fft.width() != w || fft.height() != h {
        return Err(Error::DimensionMismatch("registration frames differ in size".into()));
    }
    let spec_r = centred_spectrum(fft, reference)?;
    let spec_t = centred_spectrum(fft, frame)?;
    let cross: Vec<Complex64> = spec_t.iter().zip(&spec_r).map(|(t, r)| t * r.conj()).collect();

    let peak = cross.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut norm: Vec<Complex64> = cross
        .iter()
        .map(|c| {
            let n = c.norm();
            if n > 1e-12 * peak {
                c / n
            } else {
                Complex64::default()
            }
        })
        .collect();
    fft.inverse(&mut norm);
    let (mut best, mut best_i) = (f64::NEG_INFINITY, 0);
    for (i, c) in norm.iter().enumerate() {
        if c.re > best {
            best = c.re;
            best_i = i;
        }
    }
    let ix = signed_freq(best_i % w, w) as f64;
    let iy = signed_freq(best_i / w, h) as f64;

    let (mut sxx, mut sxy, mut syy, mut sxp, mut syp) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for v in 0..h {
        let fv = signed_freq(v, h);
        if fv.unsigned_abs() * 4 > h {
            continue;
        }
        for u in 0..w {
            let fu = signed_freq(u, w);
            if fu.unsigned_abs() * 4 > w || (fu == 0 && fv == 0) {
                continue;
            }
            let a = -2.0 * PI * fu as f64 / w as f64;
            let b = -2.0 * PI * fv as f64 / h as f64;
            let c = cross[v * w + u] * Complex64::from_polar(1.0, -(a * ix + b * iy));
            let wt = c.norm();
            let phi = c.arg();
            sxx += wt * a * a;
            sxy += wt * a * b;
            syy += wt * b * b;
            sxp += wt * a * phi;
            syp += wt * b * phi;
        }
    }
    let det = sxx * syy - sxy * sxy;
    let scale = sxx.max(syy);
    let (dx, dy) = if scale <= 0.0 {
        (0.0, 0.0)
    } else if det > 1e-9 * scale * scale {
        ((syy * sxp - sxy * syp) / det, (sxx * syp - sxy * sxp) / det)
    } else if sxx >= syy {
        // structure varies along one axis only
        (sxp / sxx, 0.0)
    } else {
        (0.0, syp / syy)
    };
    Ok((ix + dx, iy + dy))
}

fn centred_spectrum(fft: &Fft2, f: &Frame) -> Result<Vec<Complex64>> {
    let (lo, hi) = f.data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if hi - lo <= 1e-12 || (hi - lo).is_nan() {
        return Err(Error::DegenerateFrame(
            "frame is constant; displacement is undefined".into(),
        ));
    }
    let mean = f.data.iter().sum::<f64>() / f.data.len() as f64;
    let centred: Vec<f64> = f.data.iter().map(|v| v - mean).collect();
    Ok(fft.forward_real(&centred))
}

/// Per-frame displacement of every frame relative to `frames[reference_index]`.
pub fn measure_displacement(frames: &FrameSequence, reference_index: usize) -> Result<Vec<(f64, f64)>> {
    if frames.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 frames to measure displacement".into(),
        ));
    }
    let reference = frames.frames.get(reference_index).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "reference index {reference_index} out of range for {} frames",
            frames.len()
        ))
    })?;
    let fft = Fft2::new(frames.width, frames.height);
    frames.frames.par_iter().map(|f| register(&fft, reference, f)).collect()
}

/// Least-squares amplitude of a sinusoid at `freq_hz` (with offset) through
/// the samples at `indices` of `series`.
pub fn sinusoid_amplitude(series: &[f64], indices: &[usize], freq_hz: f64, fps: f64) -> f64 {
    // normal equations for [sin, cos, 1]
    let mut m = [[0.0f64; 3]; 3];
    let mut r = [0.0f64; 3];
    for &k in indices {
        let ph = 2.0 * PI * freq_hz * k as f64 / fps;
        let basis = [ph.sin(), ph.cos(), 1.0];
        for i in 0..3 {
            r[i] += basis[i] * series[k];
            for j in 0..3 {
                m[i][j] += basis[i] * basis[j];
            }
        }
    }
    let sol = solve3(m, r);
    sol[0].hypot(sol[1])
}

fn solve3(mut m: [[f64; 3]; 3], mut r: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, piv);
        r.swap(col, piv);
        if m[col][col].abs() < 1e-300 {
            return [0.0; 3];
        }
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            let pivot_row = m[col];
            for (v, p) in m[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *v -= f * p;
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        x[i] = (r[i] - (i + 1..3).map(|k| m[i][k] * x[k]).sum::<f64>()) / m[i][i];
    }
    x
}
