//! Synthetic single-distance phase-contrast measurements of sphere phantoms.
//!
//! Per view: voxel projections -> transmission -> edge padding -> Fresnel
//! propagation -> detector counts -> Poisson noise -> normalization.

mod measure;
mod phantom;
mod projector;

pub use measure::{
    analytic_projections, apply_poisson_noise, forward_intensity, normalize, projections_from_volumes, propagated_magnitude,
    transmission_from_projections, ProjectionPair,
};
pub use phantom::{build_phantom, PhantomSpec, Sphere, SIC_BETA, SIC_DELTA};
pub use projector::{analytic_projection, project_volume, project_volumes};

use ndarray::{Array2, Array3, Axis};
use rayon::prelude::*;

use crate::error::{ensure, Result};
use crate::fresnel::KernelCache;
use crate::geometry::AcquisitionGeometry;
use crate::tomo::Volume;

/// Incident counts per pixel used when none is given.
pub const DEFAULT_FLUX: f64 = 1e4;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOptions {
    pub flux: f64,
    pub seed: u64,
    /// Disable Poisson noise (expected counts are kept as-is).
    pub noiseless: bool,
    pub pad_factor: f64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            flux: DEFAULT_FLUX,
            seed: 0,
            noiseless: false,
            pad_factor: 1.5,
        }
    }
}

/// Detector frames for every view, all shaped `(view, row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub geometry: AcquisitionGeometry,
    pub raw: Array3<f64>,
    pub bright: Array3<f64>,
    pub dark: Array3<f64>,
    pub normalized: Array3<f64>,
    pub seed: u64,
    pub flux: f64,
}

/// Reference quantities kept alongside simulated measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// δ volume downsampled to the detector pitch.
    pub delta: Volume,
    /// β volume downsampled to the detector pitch.
    pub beta: Volume,
    pub phase: Array3<f64>,
    pub absorption: Array3<f64>,
    /// `|T|` per view on the detector grid.
    pub transmission: Array3<f64>,
}

struct ViewFrames {
    raw: Array2<f64>,
    normalized: Array2<f64>,
    pair: ProjectionPair,
    magnitude: Array2<f64>,
}

fn stack(frames: impl Iterator<Item = Array2<f64>>, n_views: usize, n_u: usize, n_v: usize) -> Array3<f64> {
    let mut out = Array3::zeros((n_views, n_u, n_v));
    for (mut dst, src) in out.axis_iter_mut(Axis(0)).zip(frames) {
        dst.assign(&src);
    }
    out
}

/// Simulate every view of `geometry` for the phantom. Views run on the
/// current rayon pool; the output does not depend on its size.
pub fn simulate(spec: &PhantomSpec, geometry: &AcquisitionGeometry, options: &SimulationOptions) -> Result<(MeasurementSet, GroundTruth)> {
    geometry.validate()?;
    ensure!(
        options.flux > 0.0 && options.flux.is_finite(),
        InvalidArgument,
        "flux must be positive, got {}",
        options.flux
    );
    ensure!(!geometry.angles.is_empty(), InvalidArgument, "geometry has no views");
    let (delta, beta) = build_phantom(spec)?;
    let kernels = KernelCache::new();
    let (n_u, n_v) = (geometry.n_u, geometry.n_v);
    let bright = Array2::from_elem((n_u, n_v), options.flux);
    let dark = Array2::<f64>::zeros((n_u, n_v));

    let views: Vec<ViewFrames> = geometry
        .angles
        .par_iter()
        .enumerate()
        .map(|(view, &angle)| {
            let pair = projections_from_volumes(&delta, &beta, angle, geometry)?;
            let t = transmission_from_projections(&pair)?;
            let magnitude = t.mapv(|z| z.norm());
            let expected = forward_intensity(t.view(), geometry, options.flux, options.pad_factor, &kernels)?;
            let raw = if options.noiseless {
                expected
            } else {
                apply_poisson_noise(expected.view(), options.seed, view)?
            };
            let normalized = normalize(raw.view(), bright.view(), dark.view())?;
            Ok(ViewFrames {
                raw,
                normalized,
                pair,
                magnitude,
            })
        })
        .collect::<Result<_>>()?;

    let n = views.len();
    let factor = (geometry.pixel_pitch / spec.voxel_width).round() as usize;
    let measurements = MeasurementSet {
        geometry: geometry.clone(),
        raw: stack(views.iter().map(|v| v.raw.clone()), n, n_u, n_v),
        bright: stack((0..n).map(|_| bright.clone()), n, n_u, n_v),
        dark: stack((0..n).map(|_| dark.clone()), n, n_u, n_v),
        normalized: stack(views.iter().map(|v| v.normalized.clone()), n, n_u, n_v),
        seed: options.seed,
        flux: options.flux,
    };
    let truth = GroundTruth {
        delta: delta.downsample(factor)?,
        beta: beta.downsample(factor)?,
        phase: stack(views.iter().map(|v| v.pair.phase.clone()), n, n_u, n_v),
        absorption: stack(views.iter().map(|v| v.pair.absorption.clone()), n, n_u, n_v),
        transmission: stack(views.iter().map(|v| v.magnitude.clone()), n, n_u, n_v),
    };
    Ok((measurements, truth))
}

/// The reference acquisition: 64 views over 180°, 20 keV, R = 100 mm,
/// 0.645 μm pixels on a 48x64 detector.
pub fn paper_geometry() -> AcquisitionGeometry {
    AcquisitionGeometry::new(
        crate::geometry::wavelength_from_energy(20.0).expect("positive energy"),
        0.1,
        0.645e-6,
        48,
        64,
        crate::geometry::equispaced_angles(64),
    )
    .expect("valid reference geometry")
}
