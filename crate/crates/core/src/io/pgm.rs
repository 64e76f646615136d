//! 16-bit binary PGM export.

use std::fs;
use std::path::Path;

use ndarray::ArrayView2;

use crate::error::{ensure, Error, Result};

pub const MAXVAL: u16 = u16::MAX;

/// Intensity window mapped onto `[0, 65535]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Window {
    /// The image's own `(min, max)`. A constant image maps to all zeros.
    Auto,
    Fixed(f64, f64),
}

fn resolve(image: &ArrayView2<'_, f64>, window: Window) -> Result<Option<(f64, f64)>> {
    match window {
        Window::Fixed(lo, hi) => {
            ensure!(
                lo.is_finite() && hi.is_finite() && lo < hi,
                InvalidArgument,
                "window ({lo}, {hi}) must satisfy lo < hi"
            );
            Ok(Some((lo, hi)))
        }
        Window::Auto => {
            let finite = image.iter().copied().filter(|v| v.is_finite());
            let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            Ok((lo < hi).then_some((lo, hi)))
        }
    }
}

/// Map `v` linearly from `[lo, hi]` to the 16-bit range, rounding half up
/// and clamping. NaN maps to 0.
pub fn quantize(v: f64, lo: f64, hi: f64) -> u16 {
    let scaled = (v - lo) / (hi - lo) * MAXVAL as f64;
    if scaled.is_nan() {
        return 0;
    }
    (scaled + 0.5).floor().clamp(0.0, MAXVAL as f64) as u16
}

/// Encode a P5 image with maxval 65535 (big-endian samples).
pub fn encode_pgm(image: ArrayView2<'_, f64>, window: Window) -> Result<Vec<u8>> {
    let (rows, cols) = image.dim();
    let range = resolve(&image, window)?;
    let mut out = format!("P5\n{cols} {rows}\n{MAXVAL}\n").into_bytes();
    out.reserve(2 * rows * cols);
    for &v in image.iter() {
        let q = range.map_or(0, |(lo, hi)| quantize(v, lo, hi));
        out.extend_from_slice(&q.to_be_bytes());
    }
    Ok(out)
}

pub fn export_pgm(image: ArrayView2<'_, f64>, path: &Path, window: Window) -> Result<()> {
    let bytes = encode_pgm(image, window)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Decode a P5 image written by [`encode_pgm`] into `(rows, cols, samples)`.
pub fn decode_pgm(bytes: &[u8]) -> Option<(usize, usize, Vec<u16>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return None;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?);
    }
    if fields[0] != "P5" || fields[3] != "65535" {
        return None;
    }
    let cols: usize = fields[1].parse().ok()?;
    let rows: usize = fields[2].parse().ok()?;
    let data = bytes.get(pos + 1..)?;
    if data.len() != 2 * rows * cols {
        return None;
    }
    let samples = data.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect();
    Some((rows, cols, samples))
}
