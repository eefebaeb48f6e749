//! Binary netpbm: P5 (grey) and P6 (RGB), 8-bit.
//!
//! Values in `[0, 1]` are stored as `floor(v * 255 + 0.5)`, so 0.5 becomes
//! 128 and a binary mask round-trips exactly.

use std::fs;
use std::path::Path;

use errnet_core::{Shape, Tensor};

use crate::error::{CliError, Result};

/// Quantise one value; out-of-range input is clamped first.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

fn encode(magic: &str, width: usize, height: usize, samples: impl Iterator<Item = f64>) -> Vec<u8> {
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    out.extend(samples.map(quantize));
    out
}

fn check_range(path: &Path, t: &Tensor) -> Result<()> {
    match t.data().iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(i) => Err(CliError::Validation(format!(
            "{}: value {} at index {i} is outside [0, 1]",
            path.display(),
            t.data()[i]
        ))),
        None => Ok(()),
    }
}

/// Grey map from the first plane of `t` (`1x1xHxW`).
pub fn encode_pgm(t: &Tensor) -> Vec<u8> {
    let s = t.shape();
    encode("P5", s.w, s.h, t.data()[..s.plane()].iter().copied())
}

/// Colour image from `1x3xHxW`, interleaving channels per pixel.
pub fn encode_ppm(t: &Tensor) -> Vec<u8> {
    let s = t.shape();
    let plane = s.plane();
    let d = t.data();
    encode("P6", s.w, s.h, (0..plane).flat_map(move |i| (0..3).map(move |c| d[c * plane + i])))
}

pub fn write_pgm(path: &Path, t: &Tensor) -> Result<()> {
    let s = t.shape();
    if s.n != 1 || s.c != 1 {
        return Err(CliError::Validation(format!("{}: PGM needs a 1x1xHxW map, got {s}", path.display())));
    }
    check_range(path, t)?;
    fs::write(path, encode_pgm(t)).map_err(CliError::io(path))
}

pub fn write_ppm(path: &Path, t: &Tensor) -> Result<()> {
    let s = t.shape();
    if s.n != 1 || s.c != 3 {
        return Err(CliError::Validation(format!("{}: PPM needs a 1x3xHxW image, got {s}", path.display())));
    }
    check_range(path, t)?;
    fs::write(path, encode_ppm(t)).map_err(CliError::io(path))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    /// Skips whitespace and `#` comments (which run to end of line).
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n' && c != b'\r') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> std::result::Result<usize, (usize, String)> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err((start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or((start, format!("{what} is too large")))
    }
}

/// Parses a P5 or P6 buffer into a `1xCxHxW` tensor with values `byte / maxval`.
/// Errors carry the byte offset where parsing failed.
pub fn decode(bytes: &[u8]) -> std::result::Result<Tensor, (usize, String)> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err((0, "bad magic number: expected \"P5\" or \"P6\"".into())),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    if !cur.bytes.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err((2, "expected whitespace after magic number".into()));
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err((maxval_at, format!("empty image {width}x{height}")));
    }
    if !(1..=255).contains(&maxval) {
        return Err((maxval_at, format!("maxval {maxval} unsupported (8-bit only, 1..=255)")));
    }
    match cur.bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err((cur.pos, "expected single whitespace before pixel data".into())),
    }
    let data_start = cur.pos;
    let need = width * height * channels;
    let have = bytes.len() - data_start;
    if have < need {
        return Err((bytes.len(), format!("truncated pixel data: expected {need} bytes, found {have}")));
    }
    if let Some(i) = bytes[data_start..data_start + need].iter().position(|&b| b as usize > maxval) {
        return Err((data_start + i, format!("sample exceeds maxval {maxval}")));
    }
    let px = &bytes[data_start..data_start + need];
    let scale = maxval as f64;
    let t = Tensor::from_fn(Shape::new(1, channels, height, width), |_, c, y, x| {
        px[(y * width + x) * channels + c] as f64 / scale
    });
    Ok(t)
}

pub fn read(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    decode(&bytes).map_err(|(offset, message)| CliError::Format { path: path.into(), offset, message })
}

/// Reads a file that must be single-channel (P5).
pub fn read_pgm(path: &Path) -> Result<Tensor> {
    let t = read(path)?;
    if t.shape().c != 1 {
        return Err(CliError::Format { path: path.into(), offset: 0, message: "expected \"P5\" grey map, found \"P6\"".into() });
    }
    Ok(t)
}

/// Reads a file that must be three-channel (P6).
pub fn read_ppm(path: &Path) -> Result<Tensor> {
    let t = read(path)?;
    if t.shape().c != 3 {
        return Err(CliError::Format { path: path.into(), offset: 0, message: "expected \"P6\" colour image, found \"P5\"".into() });
    }
    Ok(t)
}
