//! Binary netpbm I/O: P5 (grayscale PGM) and P6 (RGB PPM) with 8-bit samples.

use std::fs;
use std::path::Path;

use ndarray::{Array1, ArrayView1};
use spgd::ImageGeometry;

use crate::error::{HarnessError, Result};

/// Image vector in `[0, 1]` with the core's interleaved layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub data: Array1<f64>,
    pub geometry: ImageGeometry,
}

/// Clamps to `[0, 1]` and rounds half up to the nearest of 256 levels.
pub fn quantize(v: f64) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0 + 0.5).floor() as u8
}

pub fn encode_image(x: ArrayView1<f64>, geometry: ImageGeometry) -> std::result::Result<Vec<u8>, String> {
    let magic = match geometry.channels {
        1 => "P5",
        3 => "P6",
        c => return Err(format!("netpbm output needs 1 or 3 channels, got {c}")),
    };
    if x.len() != geometry.len() {
        return Err(format!(
            "image vector has {} values, {}x{}x{} needs {}",
            x.len(),
            geometry.width,
            geometry.height,
            geometry.channels,
            geometry.len()
        ));
    }
    let mut out = format!("{magic}\n{} {}\n255\n", geometry.width, geometry.height).into_bytes();
    out.extend(x.iter().map(|&v| quantize(v)));
    Ok(out)
}

pub fn write_image(x: ArrayView1<f64>, geometry: ImageGeometry, path: &Path) -> Result<()> {
    let bytes = encode_image(x, geometry).map_err(|message| HarnessError::Format {
        path: path.to_path_buf(),
        message,
    })?;
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    /// Skips whitespace and `#` comments running to end of line.
    fn skip_blank(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> std::result::Result<usize, String> {
        self.skip_blank();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("malformed header: expected {what}"))
    }
}

pub fn decode_image(bytes: &[u8]) -> std::result::Result<Image, String> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err("malformed header: expected P5 or P6 magic".into()),
    };
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(format!("malformed header: zero-sized image {width}x{height}"));
    }
    if maxval == 0 {
        return Err("malformed header: maxval must be positive".into());
    }
    if maxval > 255 {
        return Err(format!(
            "unsupported depth: maxval {maxval} (only 8-bit images are supported)"
        ));
    }
    match bytes.get(h.pos) {
        Some(b) if b.is_ascii_whitespace() => h.pos += 1,
        _ => return Err("malformed header: missing whitespace before payload".into()),
    }
    let geometry = ImageGeometry::new(width, height, channels);
    let payload = &bytes[h.pos..];
    if payload.len() < geometry.len() {
        return Err(format!(
            "truncated payload: {} of {} bytes",
            payload.len(),
            geometry.len()
        ));
    }
    let scale = maxval as f64;
    let data = payload[..geometry.len()]
        .iter()
        .map(|&b| (b as f64 / scale).min(1.0))
        .collect();
    Ok(Image { data, geometry })
}

pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    decode_image(&bytes).map_err(|message| HarnessError::Format {
        path: path.to_path_buf(),
        message,
    })
}
