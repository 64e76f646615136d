//! Parallel-beam filtered back projection.
//!
//! Conventions: a volume is indexed `(slice, row, col)` where slices run
//! along the rotation axis `u`, columns along the detector axis `v` at zero
//! angle and rows along the beam axis `w` at zero angle. A point `(v, w)`
//! projects onto detector coordinate `t = v cos(theta) + w sin(theta)`.

use std::f64::consts::PI;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::fft::Fft1;

/// Physical meaning of volume voxels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Delta,
    Beta,
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub data: Array3<f64>,
    pub voxel_width: f64,
    pub quantity: Quantity,
}

impl Volume {
    pub fn dim(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    /// Block-average by `factor` along every axis.
    pub fn downsample(&self, factor: usize) -> Result<Volume> {
        let (s, r, c) = self.dim();
        ensure!(
            factor >= 1 && s % factor == 0 && r % factor == 0 && c % factor == 0,
            InvalidArgument,
            "volume {s}x{r}x{c} is not divisible by {factor}"
        );
        let norm = 1.0 / (factor * factor * factor) as f64;
        let data = Array3::from_shape_fn((s / factor, r / factor, c / factor), |(i, j, k)| {
            let mut acc = 0.0;
            for a in 0..factor {
                for b in 0..factor {
                    for d in 0..factor {
                        acc += self.data[[i * factor + a, j * factor + b, k * factor + d]];
                    }
                }
            }
            acc * norm
        });
        Ok(Volume {
            data,
            voxel_width: self.voxel_width * factor as f64,
            quantity: self.quantity,
        })
    }
}

/// Projections stacked as `(view, detector row, detector column)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub data: Array3<f64>,
    pub angles: Vec<f64>,
    pub pixel_pitch: f64,
}

impl Sinogram {
    pub fn new(data: Array3<f64>, angles: Vec<f64>, pixel_pitch: f64) -> Result<Self> {
        ensure!(
            data.dim().0 == angles.len(),
            InvalidArgument,
            "{} views but {} angles",
            data.dim().0,
            angles.len()
        );
        ensure!(
            data.iter().all(|v| v.is_finite()),
            InvalidData,
            "sinogram contains non-finite values"
        );
        ensure!(pixel_pitch > 0.0, InvalidArgument, "pixel pitch must be positive");
        Ok(Self { data, angles, pixel_pitch })
    }

    /// `(view, column)` slice for one detector row.
    pub fn row(&self, row: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(1), row)
    }
}

/// Band-limited Ram-Lak filter in units of cycles per sample.
///
/// Rows are extended to the padded length by replicating their end values,
/// so a constant row maps to zero.
#[derive(Clone)]
pub struct RampFilter {
    len: usize,
    response: Vec<f64>,
    fft: Fft1,
}

/// Smallest padded length used by the ramp filter; keeps the periodic
/// aliasing of the discrete kernel below 1e-6.
const MIN_FILTER_LEN: usize = 1024;

impl RampFilter {
    pub fn new(len: usize, apodize: bool) -> Self {
        let padded = (2 * len).next_power_of_two().max(MIN_FILTER_LEN);
        let response = (0..padded)
            .map(|k| {
                let f = crate::geometry::signed_index(k, padded) as f64 / padded as f64;
                let window = if apodize { 0.54 + 0.46 * (2.0 * PI * f).cos() } else { 1.0 };
                f.abs() * window
            })
            .collect();
        Self {
            len,
            response,
            fft: Fft1::new(padded),
        }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        assert_eq!(row.len(), self.len, "ramp filter length mismatch");
        let padded = self.fft.len();
        if self.len == 0 {
            return Vec::new();
        }
        let offset = (padded - self.len) / 2;
        let mut buf: Vec<Complex64> = (0..padded)
            .map(|i| {
                let j = i.saturating_sub(offset).min(self.len - 1);
                Complex64::new(row[j], 0.0)
            })
            .collect();
        self.fft.forward(&mut buf);
        buf.iter_mut().zip(&self.response).for_each(|(b, &h)| *b *= h);
        self.fft.inverse(&mut buf);
        buf[offset..offset + self.len].iter().map(|c| c.re).collect()
    }
}

/// Ram-Lak filtering of a single row (no apodization).
pub fn ramp_filter(row: &[f64]) -> Vec<f64> {
    RampFilter::new(row.len(), false).apply(row)
}

/// Filtered back projection of one `(view, column)` sinogram onto an
/// `n_cols x n_cols` grid with pitch `pixel_pitch`.
pub fn fbp_slice(sinogram: ArrayView2<'_, f64>, angles: &[f64], pixel_pitch: f64, apodize: bool) -> Result<Array2<f64>> {
    let filter = RampFilter::new(sinogram.ncols(), apodize);
    fbp_slice_with(&filter, sinogram, angles, pixel_pitch)
}

fn fbp_slice_with(filter: &RampFilter, sinogram: ArrayView2<'_, f64>, angles: &[f64], pixel_pitch: f64) -> Result<Array2<f64>> {
    let (n_views, n) = sinogram.dim();
    ensure!(n_views >= 2, InvalidArgument, "FBP needs at least 2 views, got {n_views}");
    ensure!(
        angles.len() == n_views,
        InvalidArgument,
        "{n_views} views but {} angles",
        angles.len()
    );
    ensure!(pixel_pitch > 0.0, InvalidArgument, "pixel pitch must be positive");

    let mut image = Array2::<f64>::zeros((n, n));
    let center = n as f64 / 2.0 - 0.5;
    for (view, &theta) in sinogram.outer_iter().zip(angles) {
        let row: Vec<f64> = view.iter().copied().collect();
        let q = filter.apply(&row);
        let (sin, cos) = theta.sin_cos();
        for ((i, j), px) in image.indexed_iter_mut() {
            // positions in pixel units relative to the rotation axis
            let v = j as f64 - center;
            let w = i as f64 - center;
            let tau = v * cos + w * sin + center;
            let k = tau.floor();
            let frac = tau - k;
            let k = k as isize;
            let at = |m: isize| if m >= 0 && (m as usize) < n { q[m as usize] } else { 0.0 };
            *px += (1.0 - frac) * at(k) + frac * at(k + 1);
        }
    }
    let scale = PI / (n_views as f64 * pixel_pitch);
    image.mapv_inplace(|v| v * scale);
    Ok(image)
}

/// FBP of every detector row, converted from phase to δ by `λ / 2π`.
pub fn reconstruct_delta(sinogram: &Sinogram, wavelength: f64, apodize: bool) -> Result<Volume> {
    let (_, n_rows, n_cols) = sinogram.data.dim();
    let filter = RampFilter::new(n_cols, apodize);
    let slices: Vec<Array2<f64>> = (0..n_rows)
        .into_par_iter()
        .map(|r| fbp_slice_with(&filter, sinogram.row(r), &sinogram.angles, sinogram.pixel_pitch))
        .collect::<Result<_>>()?;
    let to_delta = wavelength / (2.0 * PI);
    let mut data = Array3::zeros((n_rows, n_cols, n_cols));
    for (mut dst, src) in data.outer_iter_mut().zip(slices) {
        dst.assign(&(src * to_delta));
    }
    Ok(Volume {
        data,
        voxel_width: sinogram.pixel_pitch,
        quantity: Quantity::Delta,
    })
}
