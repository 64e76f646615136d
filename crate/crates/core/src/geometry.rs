//! Acquisition geometry, retrieval settings and the DFT frequency grid.
//!
//! Every length is stored in meters. Unit conversion (keV, mm, μm) happens
//! only at the command-line boundary.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Planck constant times the speed of light, in J·m.
pub const PLANCK_TIMES_C: f64 = 1.98644586e-25;
/// One kilo-electronvolt in joules.
pub const KEV: f64 = 1.602176634e-16;

/// Photon wavelength (m) for an energy given in keV.
pub fn wavelength_from_energy(energy_kev: f64) -> Result<f64> {
    ensure!(
        energy_kev > 0.0 && energy_kev.is_finite(),
        InvalidArgument,
        "energy must be positive, got {energy_kev} keV"
    );
    Ok(PLANCK_TIMES_C / (energy_kev * KEV))
}

/// Parallel-beam, single-distance acquisition: wavelength, propagation
/// distance, detector sampling and the list of view angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionGeometry {
    pub wavelength: f64,
    pub distance: f64,
    pub pixel_pitch: f64,
    pub n_u: usize,
    pub n_v: usize,
    pub angles: Vec<f64>,
}

impl AcquisitionGeometry {
    pub fn new(wavelength: f64, distance: f64, pixel_pitch: f64, n_u: usize, n_v: usize, angles: Vec<f64>) -> Result<Self> {
        let geometry = Self {
            wavelength,
            distance,
            pixel_pitch,
            n_u,
            n_v,
            angles,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.wavelength > 0.0 && self.wavelength.is_finite(),
            InvalidArgument,
            "wavelength must be positive, got {}",
            self.wavelength
        );
        ensure!(
            self.distance >= 0.0 && self.distance.is_finite(),
            InvalidArgument,
            "distance must be non-negative, got {}",
            self.distance
        );
        ensure!(
            self.pixel_pitch > 0.0 && self.pixel_pitch.is_finite(),
            InvalidArgument,
            "pixel pitch must be positive, got {}",
            self.pixel_pitch
        );
        ensure!(
            self.n_u >= 2 && self.n_v >= 2,
            InvalidArgument,
            "detector must be at least 2x2, got {}x{}",
            self.n_u,
            self.n_v
        );
        for (i, &a) in self.angles.iter().enumerate() {
            ensure!((0.0..PI).contains(&a), InvalidArgument, "angle {i} = {a} rad lies outside [0, pi)");
            if i > 0 {
                ensure!(
                    a > self.angles[i - 1],
                    InvalidArgument,
                    "angles must be strictly increasing (index {i})"
                );
            }
        }
        Ok(())
    }

    /// Same geometry with a different propagation distance.
    pub fn with_distance(&self, distance: f64) -> Result<Self> {
        let mut g = self.clone();
        g.distance = distance;
        g.validate()?;
        Ok(g)
    }

    pub fn n_views(&self) -> usize {
        self.angles.len()
    }
}

/// `n` angles equally spaced over 180 degrees, starting at zero.
pub fn equispaced_angles(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 * PI / n as f64).collect()
}

/// Per-pixel Fresnel number Δ²/(λR). Infinite when the distance is zero.
pub fn fresnel_number(geometry: &AcquisitionGeometry) -> f64 {
    if geometry.distance == 0.0 {
        return f64::INFINITY;
    }
    geometry.pixel_pitch * geometry.pixel_pitch / (geometry.wavelength * geometry.distance)
}

/// Settings of the per-view transmission retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    /// Exponent on the amplitude part of `x^(alpha + i*gamma)`.
    pub alpha: f64,
    /// Phase-to-absorption ratio (δ/β for a homogeneous object).
    pub gamma: f64,
    /// Relative parameter-change stopping threshold.
    pub xtol_rel: f64,
    pub max_iterations: usize,
    pub lbfgs_memory: usize,
    /// Positivity floor on the transmission variable.
    pub lower_bound: f64,
    /// Optional physical ceiling (`x <= 1`); off by default.
    #[serde(default)]
    pub upper_bound: Option<f64>,
    pub pad_factor: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            gamma: 350.0,
            xtol_rel: 1e-6,
            max_iterations: 500,
            lbfgs_memory: 10,
            lower_bound: 1e-6,
            upper_bound: None,
            pad_factor: 1.5,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.alpha.is_finite(), InvalidArgument, "alpha must be finite");
        ensure!(
            self.gamma >= 0.0 && self.gamma.is_finite(),
            InvalidArgument,
            "gamma must be non-negative, got {}",
            self.gamma
        );
        ensure!(
            self.xtol_rel > 0.0,
            InvalidArgument,
            "xtol_rel must be positive, got {}",
            self.xtol_rel
        );
        ensure!(self.lbfgs_memory >= 1, InvalidArgument, "L-BFGS memory must be at least 1");
        ensure!(
            self.lower_bound > 0.0 && self.lower_bound < 1.0,
            InvalidArgument,
            "lower bound must lie in (0, 1), got {}",
            self.lower_bound
        );
        if let Some(ub) = self.upper_bound {
            ensure!(
                ub > self.lower_bound,
                InvalidArgument,
                "upper bound {ub} must exceed the lower bound"
            );
        }
        ensure!(
            self.pad_factor >= 1.0 && self.pad_factor.is_finite(),
            InvalidArgument,
            "pad factor must be >= 1, got {}",
            self.pad_factor
        );
        Ok(())
    }
}

/// DFT frequency sampling of an `n_u x n_v` grid with pitch Δ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    pub d_mu: f64,
    pub d_nu: f64,
    pub n_u: usize,
    pub n_v: usize,
}

/// Signed (wrapped) frequency index of DFT bin `k` on an `n`-point grid.
#[inline]
pub fn signed_index(k: usize, n: usize) -> i64 {
    if 2 * k < n {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

impl FrequencyGrid {
    pub fn mu(&self, p: usize) -> f64 {
        signed_index(p, self.n_u) as f64 * self.d_mu
    }

    pub fn nu(&self, q: usize) -> f64 {
        signed_index(q, self.n_v) as f64 * self.d_nu
    }

    /// Squared radial frequency μ² + ν² at bin (p, q).
    pub fn radial_sq(&self, p: usize, q: usize) -> f64 {
        let mu = self.mu(p);
        let nu = self.nu(q);
        mu * mu + nu * nu
    }
}

/// Frequency grid for the (possibly padded) `n_u x n_v` working dims.
pub fn frequency_grid(geometry: &AcquisitionGeometry, n_u: usize, n_v: usize) -> Result<FrequencyGrid> {
    ensure!(n_u >= 2 && n_v >= 2, InvalidArgument, "grid must be at least 2x2, got {n_u}x{n_v}");
    Ok(FrequencyGrid {
        d_mu: 1.0 / (n_u as f64 * geometry.pixel_pitch),
        d_nu: 1.0 / (n_v as f64 * geometry.pixel_pitch),
        n_u,
        n_v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_geometry() -> AcquisitionGeometry {
        AcquisitionGeometry::new(wavelength_from_energy(20.0).unwrap(), 0.1, 0.645e-6, 48, 64, equispaced_angles(64)).unwrap()
    }

    #[test]
    fn wavelength_values() {
        let l20 = wavelength_from_energy(20.0).unwrap();
        assert!((l20 - 6.1992e-11).abs() < 1e-14, "{l20}");
        let l40 = wavelength_from_energy(40.0).unwrap();
        assert_eq!(l40 * 2.0, l20);
        let l = wavelength_from_energy(12.3984).unwrap();
        assert!((l - 1.0e-10).abs() < 1e-13, "{l}");
        assert!(wavelength_from_energy(0.0).is_err());
        assert!(wavelength_from_energy(-3.0).is_err());
    }

    #[test]
    fn wavelength_ratio() {
        for &(e1, e2) in &[(5.0, 17.0), (20.0, 33.3), (1.5, 120.0)] {
            let r = wavelength_from_energy(e1).unwrap() / wavelength_from_energy(e2).unwrap();
            assert!((r / (e2 / e1) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_spacing_and_wrap() {
        let g = paper_geometry();
        let fg = frequency_grid(&g, 64, 64).unwrap();
        assert!((fg.d_mu - 24224.8).abs() < 0.1, "{}", fg.d_mu);
        assert!((fg.d_mu * 64.0 * g.pixel_pitch - 1.0).abs() < 1e-15);
        assert_eq!(signed_index(0, 8), 0);
        assert_eq!(signed_index(5, 8), -3);
        for n in [2usize, 8, 64, 96] {
            let idx: Vec<i64> = (0..n).map(|k| signed_index(k, n)).collect();
            assert_eq!(*idx.iter().max().unwrap(), n as i64 / 2 - 1);
            assert_eq!(*idx.iter().min().unwrap(), -(n as i64) / 2);
        }
        assert!(frequency_grid(&g, 1, 8).is_err());
    }

    #[test]
    fn fresnel_number_values() {
        let g = AcquisitionGeometry::new(6.1992e-11, 0.1, 0.645e-6, 8, 8, vec![]).unwrap();
        let nf = fresnel_number(&g);
        assert!((nf - 0.0671).abs() < 5e-4, "{nf}");
        let g4 = g.with_distance(0.4).unwrap();
        assert_eq!(fresnel_number(&g4), nf / 4.0);
        let mut g2 = g.clone();
        g2.pixel_pitch *= 2.0;
        assert_eq!(fresnel_number(&g2), nf * 4.0);
        assert!(fresnel_number(&g.with_distance(0.0).unwrap()).is_infinite());
    }

    #[test]
    fn geometry_validation() {
        assert!(AcquisitionGeometry::new(1e-10, 0.1, 1e-6, 1, 8, vec![]).is_err());
        assert!(AcquisitionGeometry::new(1e-10, -0.1, 1e-6, 8, 8, vec![]).is_err());
        assert!(AcquisitionGeometry::new(1e-10, 0.1, 1e-6, 8, 8, vec![0.5, 0.2]).is_err());
        assert!(AcquisitionGeometry::new(1e-10, 0.1, 1e-6, 8, 8, vec![PI]).is_err());
        let angles = equispaced_angles(64);
        assert_eq!(angles[0], 0.0);
        assert!(*angles.last().unwrap() < PI);
    }

    #[test]
    fn config_validation() {
        assert!(RetrievalConfig::default().validate().is_ok());
        let bad = [
            RetrievalConfig {
                gamma: -1.0,
                ..Default::default()
            },
            RetrievalConfig {
                xtol_rel: 0.0,
                ..Default::default()
            },
            RetrievalConfig {
                lbfgs_memory: 0,
                ..Default::default()
            },
            RetrievalConfig {
                lower_bound: 1.0,
                ..Default::default()
            },
            RetrievalConfig {
                pad_factor: 0.9,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
