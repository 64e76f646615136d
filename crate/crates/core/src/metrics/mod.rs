//! Image quality metrics: RMSE, Otsu segmentation, disk-edge MTF and line
//! profiles.

mod report;

pub use report::{build_report, CircleArea, CircleRoi, EvaluationReport, MethodReport, Reconstruction, ReportConfig, Truth, ROI_MARGIN};

use std::fmt::Write as _;
use std::ops::Range;

use ndarray::{ArrayBase, ArrayView2, Data, Dimension};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::fft::Fft1;

/// Number of histogram bins used for Otsu thresholding.
pub const OTSU_BINS: usize = 256;

/// Axis-aligned rectangle `[row, row + rows) x [col, col + cols)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Roi {
    pub fn new(row: usize, col: usize, rows: usize, cols: usize) -> Self {
        Self { row, col, rows, cols }
    }

    /// The whole image.
    pub fn full(image: &ArrayView2<'_, f64>) -> Self {
        Self::new(0, 0, image.nrows(), image.ncols())
    }

    fn slice<'a>(&self, image: &ArrayView2<'a, f64>) -> Result<ArrayView2<'a, f64>> {
        let (nr, nc) = image.dim();
        ensure!(
            self.rows > 0 && self.cols > 0 && self.row + self.rows <= nr && self.col + self.cols <= nc,
            InvalidArgument,
            "ROI {self:?} does not fit a {nr}x{nc} image"
        );
        Ok((*image).slice_move(ndarray::s![self.row..self.row + self.rows, self.col..self.col + self.cols]))
    }
}

fn check_shapes(a: &[usize], b: &[usize]) -> Result<()> {
    ensure!(a == b, InvalidArgument, "shape mismatch: {a:?} vs {b:?}");
    ensure!(!a.contains(&0), InvalidArgument, "empty arrays");
    Ok(())
}

/// Root mean squared difference.
pub fn rmse<S, T, D>(a: &ArrayBase<S, D>, b: &ArrayBase<T, D>) -> Result<f64>
where
    S: Data<Elem = f64>,
    T: Data<Elem = f64>,
    D: Dimension,
{
    check_shapes(a.shape(), b.shape())?;
    let sum: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum / a.len() as f64).sqrt())
}

/// RMSE restricted to elements where `mask` is set.
pub fn rmse_within<S, T, M, D>(a: &ArrayBase<S, D>, b: &ArrayBase<T, D>, mask: &ArrayBase<M, D>) -> Result<f64>
where
    S: Data<Elem = f64>,
    T: Data<Elem = f64>,
    M: Data<Elem = bool>,
    D: Dimension,
{
    check_shapes(a.shape(), b.shape())?;
    check_shapes(a.shape(), mask.shape())?;
    let (sum, count) = a
        .iter()
        .zip(b.iter())
        .zip(mask.iter())
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), ((x, y), _)| (s + (x - y) * (x - y), n + 1));
    ensure!(count > 0, Degenerate, "mask selects no elements");
    Ok((sum / count as f64).sqrt())
}

/// Histogram of `values` in [`OTSU_BINS`] equal-width bins over `[lo, hi]`.
/// The top edge falls into the last bin.
pub fn histogram(values: impl IntoIterator<Item = f64>, lo: f64, hi: f64) -> Vec<u64> {
    let width = (hi - lo) / OTSU_BINS as f64;
    let mut counts = vec![0u64; OTSU_BINS];
    for v in values {
        counts[bin_index(v, lo, width)] += 1;
    }
    counts
}

fn bin_index(v: f64, lo: f64, width: f64) -> usize {
    (((v - lo) / width).floor().max(0.0) as usize).min(OTSU_BINS - 1)
}

/// Between-class variance of a split, up to a factor shared by every split,
/// as the exact fraction `(s0 n - s n0)^2 / (n0 n1)` where `n0` pixels with
/// bin-index sum `s0` fall below the split out of `n` with total `s`.
fn between_class(n0: u64, s0: u64, n: u64, s: u64) -> (u128, u128) {
    let n1 = n - n0;
    if n0 == 0 || n1 == 0 {
        return (0, 1);
    }
    let d = ((s0 as i128) * (n as i128) - (s as i128) * (n0 as i128)).unsigned_abs();
    (d * d, n0 as u128 * n1 as u128)
}

/// Full 256-bit product as `(high, low)` halves.
fn mul_wide(a: u128, b: u128) -> (u128, u128) {
    const MASK: u128 = u64::MAX as u128;
    let (a1, a0) = (a >> 64, a & MASK);
    let (b1, b0) = (b >> 64, b & MASK);
    let low = a0 * b0;
    let mid1 = a1 * b0;
    let mid2 = a0 * b1;
    let high = a1 * b1;
    let (mid, carry) = mid1.overflowing_add(mid2);
    let (lo, c2) = low.overflowing_add(mid << 64);
    let hi = high + (mid >> 64) + ((carry as u128) << 64) + c2 as u128;
    (hi, lo)
}

/// `a.0 / a.1 > b.0 / b.1` without rounding.
fn exceeds(a: (u128, u128), b: (u128, u128)) -> bool {
    mul_wide(a.0, b.1) > mul_wide(b.0, a.1)
}

/// Otsu threshold of the ROI. Candidate thresholds are the inner bin edges
/// `min + k (max - min) / 256`; pixels in bins below `k` form the lower
/// class. Scores are compared exactly and ties go to the lowest `k`.
pub fn otsu_threshold(image: ArrayView2<'_, f64>, roi: &Roi) -> Result<f64> {
    let region = roi.slice(&image)?;
    ensure!(region.iter().all(|v| v.is_finite()), InvalidData, "ROI contains non-finite values");
    // keeps (s0 n - s n0)^2 within u128
    ensure!(
        region.len() < 1 << 28,
        InvalidArgument,
        "ROI of {} pixels is too large",
        region.len()
    );
    let lo = region.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = region.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ensure!(hi > lo, Degenerate, "ROI is constant ({lo})");

    let counts = histogram(region.iter().copied(), lo, hi);
    let n: u64 = counts.iter().sum();
    let s: u64 = counts.iter().enumerate().map(|(i, &c)| i as u64 * c).sum();

    let (mut n0, mut s0) = (0u64, 0u64);
    let mut best = (1usize, (0u128, 1u128));
    for k in 1..OTSU_BINS {
        n0 += counts[k - 1];
        s0 += (k as u64 - 1) * counts[k - 1];
        let score = between_class(n0, s0, n, s);
        if exceeds(score, best.1) {
            best = (k, score);
        }
    }
    Ok(lo + best.0 as f64 * (hi - lo) / OTSU_BINS as f64)
}

/// Area of ROI pixels strictly above `threshold`.
pub fn segmented_area(image: ArrayView2<'_, f64>, roi: &Roi, threshold: f64, pixel_pitch: f64) -> Result<f64> {
    let region = roi.slice(&image)?;
    let count = region.iter().filter(|&&v| v > threshold).count();
    Ok(count as f64 * pixel_pitch * pixel_pitch)
}

/// Sampled curve with its physical abscissa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub coordinate: Vec<f64>,
    pub value: Vec<f64>,
}

impl Curve {
    /// `coordinate,value` CSV with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("coordinate,value\n");
        for (c, v) in self.coordinate.iter().zip(&self.value) {
            writeln!(out, "{c:e},{v:e}").unwrap();
        }
        out
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// ESF bins per pixel.
const ESF_OVERSAMPLING: usize = 4;
/// Half width of the edge window, in pixels.
const EDGE_WINDOW: usize = 4;
/// Zero-padded LSF length for the DFT.
const LSF_PADDED: usize = 128;

/// MTF from the radial edge of a bright disk. `center` is `(row, col)` in
/// pixel units, `radius` in meters. Frequencies are in cycles per meter,
/// from 0 to the Nyquist frequency.
pub fn mtf_from_disk(image: ArrayView2<'_, f64>, center: (f64, f64), radius: f64, pixel_pitch: f64) -> Result<Curve> {
    ensure!(pixel_pitch > 0.0, InvalidArgument, "pixel pitch must be positive");
    ensure!(radius > 0.0, InvalidArgument, "radius must be positive");
    let (nr, nc) = image.dim();
    let r_px = radius / pixel_pitch;
    let margin = 5.0;
    ensure!(
        center.0 - r_px >= margin
            && center.1 - r_px >= margin
            && center.0 + r_px <= nr as f64 - 1.0 - margin
            && center.1 + r_px <= nc as f64 - 1.0 - margin,
        InvalidArgument,
        "disk at {center:?} with radius {r_px:.2} px needs a {margin}-pixel margin in a {nr}x{nc} image"
    );
    ensure!(
        r_px > EDGE_WINDOW as f64,
        InvalidArgument,
        "radius {r_px:.2} px is inside the edge window"
    );

    let n_bins = 2 * EDGE_WINDOW * ESF_OVERSAMPLING;
    let bin = 1.0 / ESF_OVERSAMPLING as f64;
    let start = r_px - EDGE_WINDOW as f64;
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for ((i, j), &v) in image.indexed_iter() {
        let d = ((i as f64 - center.0).powi(2) + (j as f64 - center.1).powi(2)).sqrt();
        let k = ((d - start) / bin).floor();
        if k >= 0.0 && (k as usize) < n_bins {
            sums[k as usize] += v;
            counts[k as usize] += 1;
        }
    }
    let esf = fill_empty_bins(&sums, &counts)?;

    let lsf: Vec<f64> = (0..n_bins)
        .map(|k| match k {
            0 => esf[1] - esf[0],
            k if k == n_bins - 1 => esf[k] - esf[k - 1],
            k => (esf[k + 1] - esf[k - 1]) / 2.0,
        })
        .collect();

    let fft = Fft1::new(LSF_PADDED);
    let mut buf: Vec<Complex64> = lsf.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(LSF_PADDED, Complex64::new(0.0, 0.0));
    fft.forward(&mut buf);
    let dc = buf[0].norm();
    ensure!(dc > 0.0, Degenerate, "disk edge has no contrast");

    let sample = pixel_pitch * bin;
    let df = 1.0 / (LSF_PADDED as f64 * sample);
    let nyquist = 0.5 / pixel_pitch;
    let n_freq = (nyquist / df).round() as usize + 1;
    Ok(Curve {
        coordinate: (0..n_freq).map(|k| k as f64 * df).collect(),
        value: (0..n_freq).map(|k| buf[k].norm() / dc).collect(),
    })
}

/// Bin means with empty bins linearly interpolated from their neighbours.
fn fill_empty_bins(sums: &[f64], counts: &[usize]) -> Result<Vec<f64>> {
    let filled: Vec<usize> = (0..counts.len()).filter(|&k| counts[k] > 0).collect();
    ensure!(filled.len() >= 2, Degenerate, "too few pixels around the disk edge");
    let mean = |k: usize| sums[k] / counts[k] as f64;
    Ok((0..counts.len())
        .map(|k| {
            if counts[k] > 0 {
                return mean(k);
            }
            let after = filled.partition_point(|&f| f < k);
            match (after.checked_sub(1).map(|i| filled[i]), filled.get(after)) {
                (Some(a), Some(&b)) => {
                    let t = (k - a) as f64 / (b - a) as f64;
                    (1.0 - t) * mean(a) + t * mean(b)
                }
                (Some(a), None) => mean(a),
                (None, Some(&b)) => mean(b),
                (None, None) => unreachable!(),
            }
        })
        .collect())
}

/// Which line of an image to extract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileLine {
    Row(usize),
    Column(usize),
}

/// Values along a row or column over `range`, with coordinates in meters
/// relative to the image centre.
pub fn line_profile(image: ArrayView2<'_, f64>, line: ProfileLine, range: Range<usize>, pixel_pitch: f64) -> Result<Curve> {
    let (nr, nc) = image.dim();
    let (fixed, fixed_len, along_len) = match line {
        ProfileLine::Row(r) => (r, nr, nc),
        ProfileLine::Column(c) => (c, nc, nr),
    };
    ensure!(
        fixed < fixed_len,
        InvalidArgument,
        "{line:?} is out of bounds for a {nr}x{nc} image"
    );
    ensure!(
        range.start < range.end && range.end <= along_len,
        InvalidArgument,
        "range {range:?} is out of bounds (length {along_len})"
    );
    let value = range
        .clone()
        .map(|k| match line {
            ProfileLine::Row(r) => image[[r, k]],
            ProfileLine::Column(c) => image[[k, c]],
        })
        .collect();
    let coordinate = range.map(|k| (k as f64 + 0.5 - along_len as f64 / 2.0) * pixel_pitch).collect();
    Ok(Curve { coordinate, value })
}
