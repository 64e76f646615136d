//! Transmission, free-space propagation to the detector, photon noise and
//! flat/dark normalization.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2, Zip};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::phantom::PhantomSpec;
use super::projector::project_volumes;
use crate::error::{ensure, Error, Result};
use crate::fresnel::{propagate, ComplexField, KernelCache};
use crate::geometry::AcquisitionGeometry;
use crate::pad::pad_edge;
use crate::tomo::Volume;

/// Absorption and phase projections of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionPair {
    pub absorption: Array2<f64>,
    pub phase: Array2<f64>,
}

/// `A = (2π/λ)·P[β]`, `φ = (2π/λ)·P[δ]` from voxelized δ/β volumes.
pub fn projections_from_volumes(delta: &Volume, beta: &Volume, angle: f64, geometry: &AcquisitionGeometry) -> Result<ProjectionPair> {
    let k = 2.0 * PI / geometry.wavelength;
    let mut out = project_volumes(&[beta, delta], angle, geometry)?;
    let phase = out.pop().expect("two projections") * k;
    let absorption = out.pop().expect("two projections") * k;
    Ok(ProjectionPair { absorption, phase })
}

/// Analytic (chord-length) projections of the sphere phantom, sampled with
/// `supersample^2` points per detector pixel.
pub fn analytic_projections(spec: &PhantomSpec, angle: f64, geometry: &AcquisitionGeometry, supersample: usize) -> ProjectionPair {
    use super::projector::analytic_projection;
    let k = 2.0 * PI / geometry.wavelength;
    ProjectionPair {
        absorption: analytic_projection(spec, angle, geometry, |s| s.beta, supersample) * k,
        phase: analytic_projection(spec, angle, geometry, |s| s.delta, supersample) * k,
    }
}

/// `T = exp(-A - iφ)`.
pub fn transmission_from_projections(pair: &ProjectionPair) -> Result<ComplexField> {
    ensure!(
        pair.absorption.dim() == pair.phase.dim(),
        InvalidArgument,
        "absorption and phase projections differ in shape"
    );
    ensure!(
        pair.absorption.iter().all(|&a| a >= 0.0),
        InvalidData,
        "absorption projection must be non-negative"
    );
    Ok(Zip::from(&pair.absorption)
        .and(&pair.phase)
        .map_collect(|&a, &p| Complex64::new(-a, -p).exp()))
}

/// `|H T|` on the detector grid, where `T` is edge-padded by `pad_factor`
/// before propagation and the result cropped back.
pub fn propagated_magnitude(
    transmission: ArrayView2<'_, Complex64>,
    geometry: &AcquisitionGeometry,
    pad_factor: f64,
    kernels: &KernelCache,
) -> Result<Array2<f64>> {
    let (padded, window) = pad_edge(transmission, pad_factor)?;
    let (pu, pv) = padded.dim();
    let kernel = kernels.get(geometry, pu, pv)?;
    let field = propagate(padded.view(), &kernel)?;
    Ok(window.crop(field.view()).mapv(|z| z.norm()))
}

/// Expected detector counts `N0·|H T|²` for a unit plane wave.
pub fn forward_intensity(
    transmission: ArrayView2<'_, Complex64>,
    geometry: &AcquisitionGeometry,
    flux: f64,
    pad_factor: f64,
    kernels: &KernelCache,
) -> Result<Array2<f64>> {
    ensure!(flux > 0.0, InvalidArgument, "flux must be positive, got {flux}");
    let magnitude = propagated_magnitude(transmission, geometry, pad_factor, kernels)?;
    Ok(magnitude.mapv(|m| flux * m * m))
}

fn pixel_rng(seed: u64, view: usize, pixel: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((view as u64) << 32) | pixel as u64);
    rng
}

/// Replace each pixel by a Poisson draw with that mean. Each pixel owns a
/// ChaCha stream derived from `(seed, view, pixel)`, so the result does not
/// depend on evaluation order.
pub fn apply_poisson_noise(intensity: ArrayView2<'_, f64>, seed: u64, view: usize) -> Result<Array2<f64>> {
    if let Some(((r, c), v)) = intensity.indexed_iter().find(|(_, &v)| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "Poisson mean must be finite and non-negative; pixel ({r}, {c}) = {v}"
        )));
    }
    let ncols = intensity.ncols();
    Ok(Array2::from_shape_fn(intensity.dim(), |(r, c)| {
        let mean = intensity[[r, c]];
        if mean == 0.0 {
            return 0.0;
        }
        let mut rng = pixel_rng(seed, view, r * ncols + c);
        Poisson::new(mean).expect("positive mean").sample(&mut rng)
    }))
}

/// `y = sqrt(max(0, (raw - dark) / (bright - dark)))`.
pub fn normalize(raw: ArrayView2<'_, f64>, bright: ArrayView2<'_, f64>, dark: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    ensure!(
        raw.dim() == bright.dim() && raw.dim() == dark.dim(),
        InvalidArgument,
        "raw {:?}, bright {:?} and dark {:?} frames differ in shape",
        raw.dim(),
        bright.dim(),
        dark.dim()
    );
    if let Some(((r, c), b)) = bright.indexed_iter().find(|&((r, c), &b)| !(b > dark[[r, c]])) {
        return Err(Error::InvalidData(format!(
            "bright field does not exceed dark field at pixel ({r}, {c}): {b} <= {}",
            dark[[r, c]]
        )));
    }
    Ok(Zip::from(&raw)
        .and(&bright)
        .and(&dark)
        .map_collect(|&y, &b, &d| ((y - d) / (b - d)).max(0.0).sqrt()))
}
