//! Ray-driven parallel-beam projector and the analytic sphere-chord oracle.

use ndarray::{Array2, ArrayView2, Axis};

use super::phantom::{PhantomSpec, Sphere};
use crate::error::{ensure, Result};
use crate::geometry::AcquisitionGeometry;
use crate::tomo::Volume;

/// One ray sample: up to four bilinear taps into a `(row, col)` plane.
struct Sample {
    taps: [(usize, f64); 4],
}

/// Integer ratio between detector pitch and voxel width.
fn binning(volume: &Volume, geometry: &AcquisitionGeometry) -> Result<usize> {
    let ratio = geometry.pixel_pitch / volume.voxel_width;
    let k = ratio.round();
    ensure!(
        k >= 1.0 && (ratio - k).abs() < 1e-6,
        InvalidArgument,
        "detector pitch must be an integer multiple of the voxel width (ratio {ratio})"
    );
    let k = k as usize;
    let (ns, _, nc) = volume.dim();
    ensure!(
        ns == k * geometry.n_u && nc == k * geometry.n_v,
        InvalidArgument,
        "volume {ns}x{nc} (slices x cols) does not map onto a {}x{} detector at binning {k}",
        geometry.n_u,
        geometry.n_v
    );
    Ok(k)
}

/// Bilinear taps of every sample of every ray for one angle, grouped by
/// fine detector column.
fn ray_samples(n_rows: usize, n_cols: usize, angle: f64) -> Vec<Vec<Sample>> {
    let (sin, cos) = angle.sin_cos();
    let half_diag = ((n_rows * n_rows + n_cols * n_cols) as f64).sqrt() / 2.0;
    let n_samples = (2.0 * half_diag).ceil() as usize + 1;
    let l0 = (n_samples as f64 - 1.0) / 2.0;
    let (cr, cc) = (n_rows as f64 / 2.0 - 0.5, n_cols as f64 / 2.0 - 0.5);

    (0..n_cols)
        .map(|c| {
            let t = c as f64 - cc;
            (0..n_samples)
                .filter_map(|m| {
                    let l = m as f64 - l0;
                    // point (v, w) = t (cos, sin) + l (-sin, cos), in voxel units
                    let v = t * cos - l * sin;
                    let w = t * sin + l * cos;
                    let (x, y) = (v + cc, w + cr);
                    let (x0, y0) = (x.floor(), y.floor());
                    if x0 < -1.0 || y0 < -1.0 || x0 >= n_cols as f64 || y0 >= n_rows as f64 {
                        return None;
                    }
                    let (fx, fy) = (x - x0, y - y0);
                    let (x0, y0) = (x0 as isize, y0 as isize);
                    let mut taps = [(0usize, 0.0); 4];
                    let corners = [
                        (y0, x0, (1.0 - fy) * (1.0 - fx)),
                        (y0, x0 + 1, (1.0 - fy) * fx),
                        (y0 + 1, x0, fy * (1.0 - fx)),
                        (y0 + 1, x0 + 1, fy * fx),
                    ];
                    for (tap, (r, cidx, wgt)) in taps.iter_mut().zip(corners) {
                        if r >= 0 && cidx >= 0 && (r as usize) < n_rows && (cidx as usize) < n_cols {
                            *tap = (r as usize * n_cols + cidx as usize, wgt);
                        }
                    }
                    Some(Sample { taps })
                })
                .collect()
        })
        .collect()
}

/// Line integrals (meters x voxel value) of several co-registered volumes
/// at one angle, area-averaged onto the detector grid.
pub fn project_volumes(volumes: &[&Volume], angle: f64, geometry: &AcquisitionGeometry) -> Result<Vec<Array2<f64>>> {
    ensure!(!volumes.is_empty(), InvalidArgument, "no volume to project");
    let first = volumes[0];
    let (ns, nr, nc) = first.dim();
    ensure!(ns * nr * nc > 0, InvalidArgument, "cannot project an empty volume");
    for v in volumes {
        ensure!(
            v.dim() == first.dim() && v.voxel_width == first.voxel_width,
            InvalidArgument,
            "volumes must share dims and voxel width"
        );
    }
    let k = binning(first, geometry)?;
    let rays = ray_samples(nr, nc, angle);
    let step = first.voxel_width;
    let norm = 1.0 / (k * k) as f64;

    Ok(volumes
        .iter()
        .map(|vol| {
            let mut fine = Array2::<f64>::zeros((ns, nc));
            for (s, plane) in vol.data.axis_iter(Axis(0)).enumerate() {
                if plane.iter().all(|&x| x == 0.0) {
                    continue;
                }
                let plane = plane.as_standard_layout();
                let flat = plane.as_slice().expect("standard layout");
                for (c, ray) in rays.iter().enumerate() {
                    let sum: f64 = ray.iter().map(|smp| smp.taps.iter().map(|&(i, w)| w * flat[i]).sum::<f64>()).sum();
                    fine[[s, c]] = sum * step;
                }
            }
            bin(fine.view(), k, norm)
        })
        .collect())
}

fn bin(fine: ArrayView2<'_, f64>, k: usize, norm: f64) -> Array2<f64> {
    let (ns, nc) = fine.dim();
    Array2::from_shape_fn((ns / k, nc / k), |(r, c)| {
        let mut acc = 0.0;
        for a in 0..k {
            for b in 0..k {
                acc += fine[[r * k + a, c * k + b]];
            }
        }
        acc * norm
    })
}

/// Ray-driven projection of a single volume.
pub fn project_volume(volume: &Volume, angle: f64, geometry: &AcquisitionGeometry) -> Result<Array2<f64>> {
    Ok(project_volumes(&[volume], angle, geometry)?.remove(0))
}

/// Exact chord-length line integrals of `value(sphere)` through the sphere
/// phantom, averaged over `supersample^2` points per detector pixel.
pub fn analytic_projection(
    spec: &PhantomSpec,
    angle: f64,
    geometry: &AcquisitionGeometry,
    value: impl Fn(&Sphere) -> f64,
    supersample: usize,
) -> Array2<f64> {
    let (sin, cos) = angle.sin_cos();
    let pitch = geometry.pixel_pitch;
    let ss = supersample.max(1);
    let sub: Vec<f64> = (0..ss).map(|i| ((i as f64 + 0.5) / ss as f64 - 0.5) * pitch).collect();
    let centered = |i: usize, n: usize| (i as f64 + 0.5 - n as f64 / 2.0) * pitch;
    Array2::from_shape_fn((geometry.n_u, geometry.n_v), |(r, c)| {
        let (u0, t0) = (centered(r, geometry.n_u), centered(c, geometry.n_v));
        let mut acc = 0.0;
        for du in &sub {
            for dt in &sub {
                let (u, t) = (u0 + du, t0 + dt);
                for sp in &spec.spheres {
                    let tc = sp.center[1] * cos + sp.center[2] * sin;
                    let rho2 = (u - sp.center[0]).powi(2) + (t - tc).powi(2);
                    if rho2 < sp.radius * sp.radius {
                        acc += value(sp) * 2.0 * (sp.radius * sp.radius - rho2).sqrt();
                    }
                }
            }
        }
        acc / (ss * ss) as f64
    })
}
