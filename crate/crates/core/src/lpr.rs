//! Linear (Paganin-type) single-distance retrieval for homogeneous objects.
//!
//! The normalized intensity `y²` is low-pass filtered by
//! `1 / (1 + π λ R γ (μ² + ν²))` on the edge-padded grid, giving the
//! intensity transmission `x²`.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::error::{ensure, Result};
use crate::fft::Fft2;
use crate::geometry::{frequency_grid, AcquisitionGeometry, RetrievalConfig};
use crate::pad::pad_edge;

/// Real transmission variable `x` on the detector grid; strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionMap(Array2<f64>);

impl TransmissionMap {
    pub fn new(x: Array2<f64>) -> Result<Self> {
        if let Some(((r, c), v)) = x.indexed_iter().find(|(_, &v)| !(v > 0.0) || !v.is_finite()) {
            return Err(crate::Error::InvalidData(format!(
                "transmission must be positive and finite; pixel ({r}, {c}) = {v}"
            )));
        }
        Ok(Self(x))
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// Filtered intensity `M` before clamping, computed on `y_padded` as given.
pub fn paganin_intensity(y_padded: ArrayView2<'_, f64>, geometry: &AcquisitionGeometry, gamma: f64) -> Result<Array2<f64>> {
    ensure!(gamma >= 0.0, InvalidArgument, "gamma must be non-negative, got {gamma}");
    let (nu, nv) = y_padded.dim();
    let grid = frequency_grid(geometry, nu, nv)?;
    let fft = Fft2::new(nu, nv);
    let mut spectrum = y_padded.mapv(|y| Complex64::new(y * y, 0.0));
    fft.forward(&mut spectrum);
    let coeff = PI * geometry.wavelength * geometry.distance * gamma;
    for ((p, q), s) in spectrum.indexed_iter_mut() {
        *s /= 1.0 + coeff * grid.radial_sq(p, q);
    }
    fft.inverse(&mut spectrum);
    Ok(spectrum.mapv(|c| c.re))
}

/// LPR on an already padded frame: `x = sqrt(max(M, lower_bound²))`.
pub fn lpr_padded(y_padded: ArrayView2<'_, f64>, geometry: &AcquisitionGeometry, gamma: f64, lower_bound: f64) -> Result<Array2<f64>> {
    let floor = lower_bound * lower_bound;
    Ok(paganin_intensity(y_padded, geometry, gamma)?.mapv(|m| m.max(floor).sqrt()))
}

/// Pad, filter and crop one normalized frame.
pub fn lpr_retrieve(y: ArrayView2<'_, f64>, geometry: &AcquisitionGeometry, config: &RetrievalConfig) -> Result<TransmissionMap> {
    config.validate()?;
    ensure!(
        y.iter().all(|&v| v >= 0.0 && v.is_finite()),
        InvalidData,
        "normalized frame must be finite and non-negative"
    );
    let (padded, window) = pad_edge(y, config.pad_factor)?;
    let x = lpr_padded(padded.view(), geometry, config.gamma, config.lower_bound)?;
    TransmissionMap::new(window.crop(x.view()))
}

/// `φ = -γ ln x`.
pub fn phase_from_transmission(x: &TransmissionMap, gamma: f64) -> Array2<f64> {
    x.view().mapv(|v| -gamma * v.ln())
}

/// `A = -α ln x`: the absorption implied by `x^(α + iγ)`.
pub fn absorption_from_transmission(x: &TransmissionMap, alpha: f64) -> Array2<f64> {
    x.view().mapv(|v| -alpha * v.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::wavelength_from_energy;

    fn geometry(distance: f64) -> AcquisitionGeometry {
        AcquisitionGeometry::new(wavelength_from_energy(20.0).unwrap(), distance, 0.645e-6, 48, 64, vec![]).unwrap()
    }

    fn frame() -> Array2<f64> {
        Array2::from_shape_fn((48, 64), |(i, j)| {
            let r2 = ((i as f64 - 24.0).powi(2) + (j as f64 - 30.0).powi(2)) / 40.0;
            1.0 - 0.05 * (-r2).exp() + 0.01 * ((i * j) as f64 * 0.37).sin()
        })
    }

    #[test]
    fn no_filter_limits() {
        let y = frame();
        let cfg = RetrievalConfig::default();
        let x = lpr_retrieve(y.view(), &geometry(0.0), &cfg).unwrap();
        assert!(x.view().iter().zip(y.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
        let cfg0 = RetrievalConfig { gamma: 0.0, ..cfg };
        let x = lpr_retrieve(y.view(), &geometry(0.1), &cfg0).unwrap();
        assert!(x.view().iter().zip(y.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn first_bin_denominator() {
        let g = geometry(0.1);
        let grid = frequency_grid(&g, 64, 64).unwrap();
        let denom = 1.0 + PI * g.wavelength * g.distance * 350.0 * grid.radial_sq(1, 0);
        assert!((denom - 5.0005).abs() < 1e-3, "{denom}");
    }

    #[test]
    fn linear_in_intensity_and_preserves_dc() {
        let g = geometry(0.1);
        let y1 = frame();
        let y2 = frame().mapv(|v| v * v * 0.9);
        let (a, b) = (0.7, 1.9);
        let mix = (&y1.mapv(|v| a * v * v) + &y2.mapv(|v| b * v * v)).mapv(f64::sqrt);
        let m1 = paganin_intensity(y1.view(), &g, 350.0).unwrap();
        let m2 = paganin_intensity(y2.view(), &g, 350.0).unwrap();
        let mm = paganin_intensity(mix.view(), &g, 350.0).unwrap();
        for ((x, p), q) in mm.iter().zip(m1.iter()).zip(m2.iter()) {
            assert!((x - (a * p + b * q)).abs() < 1e-10);
        }
        let mean_y2 = y1.mapv(|v| v * v).mean().unwrap();
        assert!((m1.mean().unwrap() / mean_y2 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn phase_from_known_transmission() {
        let x = TransmissionMap::new(Array2::from_elem((2, 2), (-3.868e-3f64).exp())).unwrap();
        let phi = phase_from_transmission(&x, 350.0);
        assert!((phi[[0, 0]] - 1.3538).abs() < 1e-4);
        let ones = TransmissionMap::new(Array2::ones((2, 2))).unwrap();
        assert!(phase_from_transmission(&ones, 350.0).iter().all(|&v| v == 0.0));
        let a = absorption_from_transmission(&x, 1.0);
        assert!((phi[[1, 1]] / a[[1, 1]] - 350.0).abs() < 1e-9);
        assert!(TransmissionMap::new(Array2::zeros((2, 2))).is_err());
    }
}
