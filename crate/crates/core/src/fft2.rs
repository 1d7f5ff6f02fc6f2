//! Exact-size 2-D discrete Fourier transform over row-major complex grids.
//!
//! Forward transform is unnormalized; inverse divides by `width * height`, so
//! `inverse(forward(x)) == x` to rounding.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct Fft2 {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish()
    }
}

impl Fft2 {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.row_inv, &self.col_inv);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }

    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    fn transform(&self, data: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len(), "grid size does not match plan");
        let (w, h) = (self.width, self.height);
        batched(row, data, w);
        let mut transposed = vec![Complex64::default(); w * h];
        transpose(data, &mut transposed, w, h);
        batched(col, &mut transposed, h);
        transpose(&transposed, data, h, w);
    }
}

/// Runs `fft` over consecutive length-`n` rows, a few rows per task.
fn batched(fft: &Arc<dyn Fft<f64>>, data: &mut [Complex64], n: usize) {
    let rows = data.len() / n;
    let per_task = rows.div_ceil(4 * rayon::current_num_threads()).max(1);
    data.par_chunks_mut(per_task * n).for_each(|chunk| fft.process(chunk));
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], w: usize, h: usize) {
    const TILE: usize = 16;
    for y0 in (0..h).step_by(TILE) {
        for x0 in (0..w).step_by(TILE) {
            for y in y0..(y0 + TILE).min(h) {
                for x in x0..(x0 + TILE).min(w) {
                    dst[x * h + y] = src[y * w + x];
                }
            }
        }
    }
}

/// Signed integer frequency for DFT bin `k` of an `n`-point transform.
#[inline]
pub fn signed_freq(k: usize, n: usize) -> isize {
    if k <= n / 2 && !(n.is_multiple_of(2) && k == n / 2) {
        k as isize
    } else {
        k as isize - n as isize
    }
}
