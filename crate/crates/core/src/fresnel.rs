//! Discrete Fresnel propagator and its adjoint.
//!
//! The propagator multiplies the DFT of a field by the unit-modulus kernel
//! `H(p,q) = exp(-i*pi*lambda*R*((p*dmu)^2 + (q*dnu)^2))` on the signed
//! frequency grid. The global `exp(ikR)` phase is dropped.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, RwLock};

use ndarray::{Array2, ArrayView2, Zip};
use num_complex::Complex64;

use crate::error::{ensure, Result};
use crate::fft::Fft2;
use crate::geometry::{frequency_grid, AcquisitionGeometry};

pub type ComplexField = Array2<Complex64>;

#[derive(Debug, Clone)]
pub struct PropagatorKernel {
    values: Array2<Complex64>,
    fft: Fft2,
}

impl PropagatorKernel {
    pub fn values(&self) -> ArrayView2<'_, Complex64> {
        self.values.view()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// Kernel of the backward propagation (distance `-R`).
    pub fn conjugate(&self) -> Self {
        Self {
            values: self.values.mapv(|h| h.conj()),
            fft: self.fft.clone(),
        }
    }

    /// Elementwise product of two kernels on the same grid, i.e. propagation
    /// over the summed distance.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        ensure!(
            self.dim() == other.dim(),
            InvalidArgument,
            "kernel dims differ: {:?} vs {:?}",
            self.dim(),
            other.dim()
        );
        Ok(Self {
            values: &self.values * &other.values,
            fft: self.fft.clone(),
        })
    }
}

pub fn propagator_kernel(geometry: &AcquisitionGeometry, n_u: usize, n_v: usize) -> Result<PropagatorKernel> {
    let grid = frequency_grid(geometry, n_u, n_v)?;
    let scale = -PI * geometry.wavelength * geometry.distance;
    let values = Array2::from_shape_fn((n_u, n_v), |(p, q)| Complex64::from_polar(1.0, scale * grid.radial_sq(p, q)));
    Ok(PropagatorKernel {
        values,
        fft: Fft2::new(n_u, n_v),
    })
}

fn apply(field: ArrayView2<'_, Complex64>, kernel: &PropagatorKernel, conjugate: bool) -> Result<ComplexField> {
    ensure!(
        field.dim() == kernel.dim(),
        InvalidArgument,
        "field dims {:?} do not match kernel dims {:?}",
        field.dim(),
        kernel.dim()
    );
    let mut spectrum = field.to_owned();
    kernel.fft.forward(&mut spectrum);
    if conjugate {
        Zip::from(&mut spectrum).and(&kernel.values).for_each(|s, &h| *s *= h.conj());
    } else {
        Zip::from(&mut spectrum).and(&kernel.values).for_each(|s, &h| *s *= h);
    }
    kernel.fft.inverse(&mut spectrum);
    Ok(spectrum)
}

/// `IDFT(DFT(field) * H)`.
pub fn propagate(field: ArrayView2<'_, Complex64>, kernel: &PropagatorKernel) -> Result<ComplexField> {
    apply(field, kernel, false)
}

/// `IDFT(DFT(field) * conj(H))`, the adjoint (and inverse) of [`propagate`].
pub fn adjoint_propagate(field: ArrayView2<'_, Complex64>, kernel: &PropagatorKernel) -> Result<ComplexField> {
    apply(field, kernel, true)
}

type KernelKey = (u64, u64, u64, usize, usize);

/// Kernels keyed by (wavelength, distance, pitch, dims). Every view of a
/// dataset shares one kernel, so the cache is read-mostly.
#[derive(Debug, Default)]
pub struct KernelCache {
    kernels: RwLock<HashMap<KernelKey, Arc<PropagatorKernel>>>,
}

impl KernelCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, geometry: &AcquisitionGeometry, n_u: usize, n_v: usize) -> Result<Arc<PropagatorKernel>> {
        let key = (
            geometry.wavelength.to_bits(),
            geometry.distance.to_bits(),
            geometry.pixel_pitch.to_bits(),
            n_u,
            n_v,
        );
        if let Some(k) = self.kernels.read().expect("kernel cache poisoned").get(&key) {
            return Ok(Arc::clone(k));
        }
        let kernel = Arc::new(propagator_kernel(geometry, n_u, n_v)?);
        let mut map = self.kernels.write().expect("kernel cache poisoned");
        Ok(Arc::clone(map.entry(key).or_insert(kernel)))
    }

    pub fn len(&self) -> usize {
        self.kernels.read().expect("kernel cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
