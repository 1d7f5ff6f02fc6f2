//! Binary PGM/PPM and PNG I/O, plus numbered frame directories.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::frame::{Frame, FrameSequence};

/// 8-bit RGB image, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, fill: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&fill);
        }
        Self { width, height, data }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| Error::ImageFormat(e.to_string()))?;
        writer
            .write_image_data(&img.data)
            .map_err(|e| Error::ImageFormat(e.to_string()))?;
    }
    Ok(out)
}

/// Writes PNG when the extension is `.png`, binary PPM otherwise.
pub fn write_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let bytes = if is_png { encode_png(img)? } else { encode_ppm(img) };
    fs::write(path, bytes)?;
    Ok(())
}

/// 8-bit binary PGM; samples are clamped to `[0, 1]` and rounded.
pub fn encode_pgm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend(frame.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

/// Reads binary PGM (P5) with 8- or 16-bit samples, scaled to `[0, 1]`.
pub fn decode_pgm(bytes: &[u8]) -> Result<Frame> {
    let mut pos = 0usize;
    let mut header = [0usize; 3];
    let magic = next_token(bytes, &mut pos)?;
    if magic != b"P5" {
        return Err(Error::ImageFormat("not a binary PGM (P5) file".into()));
    }
    for slot in header.iter_mut() {
        let tok = next_token(bytes, &mut pos)?;
        *slot = std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::ImageFormat("bad PGM header field".into()))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::ImageFormat(format!(
            "bad PGM header {width}x{height} maxval {maxval}"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let bps = if maxval < 256 { 1 } else { 2 };
    let need = width * height * bps;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::Truncated(format!("PGM raster needs {need} bytes")))?;
    let scale = 1.0 / maxval as f64;
    let data = if bps == 1 {
        raster.iter().map(|&v| v as f64 * scale).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
            .collect()
    };
    Frame::new(width, height, data)
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::Truncated("PGM header".into())),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
        *pos += 1;
    }
    Ok(&bytes[start..*pos])
}

/// Reads every `*.pgm` file of a directory in filename order.
pub fn read_frame_dir(dir: &Path, fps: f64) -> Result<FrameSequence> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!("no .pgm frames in {}", dir.display())));
    }
    let frames = paths
        .iter()
        .map(|p| decode_pgm(&fs::read(p)?))
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(fps, frames)
}

/// Writes frames as `000000.pgm`, `000001.pgm`, ... creating the directory if needed.
pub fn write_frame_dir(dir: &Path, seq: &FrameSequence) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (k, frame) in seq.frames.iter().enumerate() {
        let mut f = fs::File::create(dir.join(format!("{k:06}.pgm")))?;
        f.write_all(&encode_pgm(frame))?;
    }
    Ok(())
}
