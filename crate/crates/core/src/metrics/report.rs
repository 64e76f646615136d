use ndarray::{Array3, Axis};
use serde::{Deserialize, Serialize};

use super::{line_profile, mtf_from_disk, otsu_threshold, rmse, rmse_within, segmented_area, Curve, ProfileLine, Roi};
use crate::error::{ensure, Result};
use crate::simulate::Sphere;
use crate::tomo::Volume;

const UM2: f64 = 1e12;

/// Background pixels kept around each circle so the segmentation sees the
/// full edge transition.
pub const ROI_MARGIN: usize = 3;

/// A circular cross-section to segment, located in one volume slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleRoi {
    pub slice: usize,
    pub roi: Roi,
    /// Circle centre `(row, col)` in pixel units.
    pub center: (f64, f64),
    /// Cross-section radius in meters.
    pub radius: f64,
}

impl CircleRoi {
    /// Box around a sphere's cross-section in the slice nearest its centre:
    /// every pixel whose footprint touches the circle plus [`ROI_MARGIN`]
    /// pixels on each side, for a reconstruction of `n_slices x n x n`
    /// voxels of width `pitch`.
    pub fn from_sphere(sphere: &Sphere, n_slices: usize, n: usize, pitch: f64) -> Result<Self> {
        let index = |x: f64, len: usize| x / pitch + len as f64 / 2.0 - 0.5;
        let s = index(sphere.center[0], n_slices).round();
        ensure!(
            s >= 0.0 && (s as usize) < n_slices,
            InvalidArgument,
            "sphere centre lies outside the {n_slices} reconstructed slices"
        );
        let slice = s as usize;
        let du = (slice as f64 + 0.5 - n_slices as f64 / 2.0) * pitch - sphere.center[0];
        ensure!(du.abs() < sphere.radius, InvalidArgument, "slice {slice} misses the sphere");
        let radius = (sphere.radius * sphere.radius - du * du).sqrt();
        let center = (index(sphere.center[2], n), index(sphere.center[1], n));
        let r_px = radius / pitch;
        let span = |c: f64| {
            let lo = ((c - r_px + 0.5).floor() - ROI_MARGIN as f64).max(0.0) as usize;
            let hi = ((c + r_px - 0.5).ceil() as usize + 1 + ROI_MARGIN).min(n);
            (lo, hi - lo)
        };
        let (row, rows) = span(center.0);
        let (col, cols) = span(center.1);
        Ok(Self {
            slice,
            roi: Roi::new(row, col, rows, cols),
            center,
            radius,
        })
    }
}

/// What to measure on each reconstruction.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportConfig {
    pub circles: Vec<CircleRoi>,
    /// Index into `circles` of the disk used for the MTF.
    #[serde(default)]
    pub mtf_circle: Option<usize>,
    /// Slice and line for an exported profile.
    #[serde(default)]
    pub profile: Option<(usize, ProfileLine)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleArea {
    pub threshold: f64,
    pub area_um2: f64,
    /// RMSE against the truth inside the ROI box, when truth is available.
    pub rmse_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub name: String,
    pub rmse_delta: Option<f64>,
    pub rmse_phase: Option<f64>,
    pub circles: Vec<CircleArea>,
    pub mtf: Option<Curve>,
    pub profile: Option<Curve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub circles: Vec<CircleRoi>,
    /// Areas measured on the truth volume, in μm².
    pub truth_areas_um2: Option<Vec<f64>>,
    pub methods: Vec<MethodReport>,
}

/// One reconstruction to score.
#[derive(Debug, Clone, Copy)]
pub struct Reconstruction<'a> {
    pub name: &'a str,
    pub delta: &'a Volume,
    /// Retrieved phase projections `(view, row, col)`.
    pub phase: Option<&'a Array3<f64>>,
}

/// Truth for scoring, when known.
#[derive(Debug, Clone, Copy)]
pub struct Truth<'a> {
    pub delta: &'a Volume,
    pub phase: Option<&'a Array3<f64>>,
}

fn circle_areas(volume: &Volume, config: &ReportConfig, truth: Option<&Volume>) -> Result<Vec<CircleArea>> {
    config
        .circles
        .iter()
        .map(|c| {
            ensure!(
                c.slice < volume.dim().0,
                InvalidArgument,
                "circle slice {} is outside the volume",
                c.slice
            );
            let image = volume.data.index_axis(Axis(0), c.slice);
            let threshold = otsu_threshold(image, &c.roi)?;
            let area = segmented_area(image, &c.roi, threshold, volume.voxel_width)?;
            let rmse_delta = match truth {
                Some(t) => {
                    let mask = ndarray::Array2::from_shape_fn(image.dim(), |(i, j)| {
                        (c.roi.row..c.roi.row + c.roi.rows).contains(&i) && (c.roi.col..c.roi.col + c.roi.cols).contains(&j)
                    });
                    Some(rmse_within(&image, &t.data.index_axis(Axis(0), c.slice), &mask)?)
                }
                None => None,
            };
            Ok(CircleArea {
                threshold,
                area_um2: area * UM2,
                rmse_delta,
            })
        })
        .collect()
}

/// Score every reconstruction. Without truth, only areas, MTF and profiles
/// are reported.
pub fn build_report(truth: Option<Truth<'_>>, recons: &[Reconstruction<'_>], config: &ReportConfig) -> Result<EvaluationReport> {
    if let Some(i) = config.mtf_circle {
        ensure!(i < config.circles.len(), InvalidArgument, "MTF circle {i} is not defined");
    }
    let truth_areas = truth
        .map(|t| circle_areas(t.delta, config, None).map(|c| c.iter().map(|a| a.area_um2).collect()))
        .transpose()?;

    let methods = recons
        .iter()
        .map(|r| {
            let rmse_delta = truth.map(|t| rmse(&r.delta.data, &t.delta.data)).transpose()?;
            let rmse_phase = match (truth.and_then(|t| t.phase), r.phase) {
                (Some(t), Some(p)) => Some(rmse(p, t)?),
                _ => None,
            };
            let mtf = config
                .mtf_circle
                .map(|i| {
                    let c = &config.circles[i];
                    mtf_from_disk(r.delta.data.index_axis(Axis(0), c.slice), c.center, c.radius, r.delta.voxel_width)
                })
                .transpose()?;
            let profile = config
                .profile
                .map(|(slice, line)| {
                    ensure!(slice < r.delta.dim().0, InvalidArgument, "profile slice {slice} is out of bounds");
                    let image = r.delta.data.index_axis(Axis(0), slice);
                    let len = match line {
                        ProfileLine::Row(_) => image.ncols(),
                        ProfileLine::Column(_) => image.nrows(),
                    };
                    line_profile(image, line, 0..len, r.delta.voxel_width)
                })
                .transpose()?;
            Ok(MethodReport {
                name: r.name.to_string(),
                rmse_delta,
                rmse_phase,
                circles: circle_areas(r.delta, config, truth.map(|t| t.delta))?,
                mtf,
                profile,
            })
        })
        .collect::<Result<_>>()?;

    Ok(EvaluationReport {
        circles: config.circles.clone(),
        truth_areas_um2: truth_areas,
        methods,
    })
}
