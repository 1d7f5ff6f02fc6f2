//! Grayscale frames and fixed-rate frame sequences.

use crate::error::{Error, Result};

/// Row-major grayscale image with `f64` samples, nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a {width}x{height} frame",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn max_abs_diff(&self, other: &Frame) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Pads every side by `border` pixels using whole-sample mirroring
    /// (`d c b | a b c d | c b a`).
    pub fn mirror_pad(&self, border: usize) -> Frame {
        let w = self.width as isize;
        let h = self.height as isize;
        let reflect = |i: isize, n: isize| -> usize {
            if n == 1 {
                return 0;
            }
            let period = 2 * (n - 1);
            let mut m = i.rem_euclid(period);
            if m >= n {
                m = period - m;
            }
            m as usize
        };
        let b = border as isize;
        Frame::from_fn(self.width + 2 * border, self.height + 2 * border, |x, y| {
            let sx = reflect(x as isize - b, w);
            let sy = reflect(y as isize - b, h);
            self.get(sx, sy)
        })
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Frame {
        Frame::from_fn(width, height, |x, y| self.get(x + x0, y + y0))
    }
}

/// Grayscale frames sharing one size, sampled at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub frames: Vec<Frame>,
}

impl FrameSequence {
    pub fn new(fps: f64, frames: Vec<Frame>) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::InvalidArgument(format!("fps must be positive, got {fps}")));
        }
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidArgument("frame sequence is empty".into()))?;
        let (width, height) = (first.width, first.height);
        if let Some((i, f)) = frames
            .iter()
            .enumerate()
            .find(|(_, f)| f.width != width || f.height != height)
        {
            return Err(Error::DimensionMismatch(format!(
                "frame {i} is {}x{}, expected {width}x{height}",
                f.width, f.height
            )));
        }
        Ok(Self {
            width,
            height,
            fps,
            frames,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Time of frame `k` in microseconds.
    pub fn frame_time_us(&self, k: usize) -> f64 {
        k as f64 * 1e6 / self.fps
    }
}
