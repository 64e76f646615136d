//! Sphere phantoms voxelized with 2x2x2 supersampling.

use ndarray::{Array3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::tomo::{Quantity, Volume};

/// Refractive index decrement of SiC at 20 keV.
pub const SIC_DELTA: f64 = 1.67e-6;
/// Absorption index of SiC at 20 keV.
pub const SIC_BETA: f64 = 4.77e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    /// Centre `(u, v, w)` in meters relative to the volume centre.
    pub center: [f64; 3],
    pub radius: f64,
    pub delta: f64,
    pub beta: f64,
}

impl Sphere {
    fn contains(&self, u: f64, v: f64, w: f64) -> bool {
        let du = u - self.center[0];
        let dv = v - self.center[1];
        let dw = w - self.center[2];
        du * du + dv * dv + dw * dw <= self.radius * self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub spheres: Vec<Sphere>,
    /// `(n_slices, n_rows, n_cols)` along `(u, w, v)`.
    pub volume_dims: (usize, usize, usize),
    pub voxel_width: f64,
}

const UM: f64 = 1e-6;

impl PhantomSpec {
    /// Three SiC spheres (radii 4, 6, 5 μm) in a 96x128x128 grid of
    /// 0.3225 μm voxels. All centres lie in the plane imaged by detector
    /// row 24 of a 48-row, 0.645 μm detector.
    pub fn single_material() -> Self {
        let u = 0.3225 * UM;
        let sphere = |v: f64, w: f64, radius: f64| Sphere {
            center: [u, v * UM, w * UM],
            radius: radius * UM,
            delta: SIC_DELTA,
            beta: SIC_BETA,
        };
        Self {
            spheres: vec![sphere(-7.5, -7.0, 4.0), sphere(-6.0, 6.5, 6.0), sphere(8.5, 6.5, 5.0)],
            volume_dims: (96, 128, 128),
            voxel_width: 0.3225 * UM,
        }
    }

    /// Same layout with β x10 on the first sphere and δ x2 on the third,
    /// giving δ/β ratios of 35, 350 and 700.
    pub fn multi_material() -> Self {
        let mut spec = Self::single_material();
        spec.spheres[0].beta *= 10.0;
        spec.spheres[2].delta *= 2.0;
        spec
    }

    fn half_extent(&self) -> [f64; 3] {
        let (s, r, c) = self.volume_dims;
        let h = |n: usize| n as f64 * self.voxel_width / 2.0;
        // (u, v, w) ordering: slices, columns, rows
        [h(s), h(c), h(r)]
    }

    pub fn validate(&self) -> Result<()> {
        let (s, r, c) = self.volume_dims;
        ensure!(s > 0 && r > 0 && c > 0, InvalidArgument, "volume dims must be positive");
        ensure!(self.voxel_width > 0.0, InvalidArgument, "voxel width must be positive");
        let half = self.half_extent();
        for (i, sp) in self.spheres.iter().enumerate() {
            ensure!(sp.radius > 0.0, InvalidArgument, "sphere {i}: radius must be positive");
            ensure!(
                sp.delta >= 0.0 && sp.beta >= 0.0,
                InvalidArgument,
                "sphere {i}: delta and beta must be non-negative"
            );
            for axis in 0..3 {
                ensure!(
                    sp.center[axis].abs() + sp.radius <= half[axis],
                    InvalidArgument,
                    "sphere {i} extends outside the volume along axis {axis}"
                );
            }
        }
        Ok(())
    }

    /// Voxel-centre coordinate along an axis of `n` voxels.
    pub fn coordinate(&self, index: usize, n: usize) -> f64 {
        (index as f64 + 0.5 - n as f64 / 2.0) * self.voxel_width
    }
}

/// δ and β volumes; each voxel holds the material value times its occupied
/// fraction (2x2x2 subsamples, later spheres overwrite earlier ones).
pub fn build_phantom(spec: &PhantomSpec) -> Result<(Volume, Volume)> {
    spec.validate()?;
    let (ns, nr, nc) = spec.volume_dims;
    let mut delta = Array3::<f64>::zeros((ns, nr, nc));
    let mut beta = Array3::<f64>::zeros((ns, nr, nc));
    let quarter = spec.voxel_width / 4.0;
    let offsets = [-quarter, quarter];

    delta
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(beta.axis_iter_mut(Axis(0)).into_par_iter())
        .enumerate()
        .for_each(|(i, (mut dslice, mut bslice))| {
            let u0 = spec.coordinate(i, ns);
            let hit: Vec<&Sphere> = spec
                .spheres
                .iter()
                .filter(|sp| (u0 - sp.center[0]).abs() <= sp.radius + spec.voxel_width)
                .collect();
            if hit.is_empty() {
                return;
            }
            for j in 0..nr {
                let w0 = spec.coordinate(j, nr);
                for k in 0..nc {
                    let v0 = spec.coordinate(k, nc);
                    let (mut d, mut b) = (0.0, 0.0);
                    for du in offsets {
                        for dw in offsets {
                            for dv in offsets {
                                if let Some(sp) = hit.iter().rev().find(|sp| sp.contains(u0 + du, v0 + dv, w0 + dw)) {
                                    d += sp.delta;
                                    b += sp.beta;
                                }
                            }
                        }
                    }
                    dslice[[j, k]] = d / 8.0;
                    bslice[[j, k]] = b / 8.0;
                }
            }
        });

    let wrap = |data, quantity| Volume {
        data,
        voxel_width: spec.voxel_width,
        quantity,
    };
    Ok((wrap(delta, Quantity::Delta), wrap(beta, Quantity::Beta)))
}
