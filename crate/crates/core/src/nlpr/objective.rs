//! Least-squares magnitude misfit `Σ (y - |H x^(α+iγ)|)²` and its gradient.

use ndarray::{Array2, ArrayView2, Zip};
use num_complex::Complex64;

use crate::error::{ensure, Result};
use crate::fresnel::{adjoint_propagate, propagate, ComplexField, PropagatorKernel};

/// Guard on `|z|` in the phase factor `z/|z|` of the gradient.
pub const PHASE_GUARD: f64 = 1e-12;

/// `x^α · exp(iγ ln x)` elementwise.
pub fn complex_power(x: ArrayView2<'_, f64>, alpha: f64, gamma: f64) -> Result<ComplexField> {
    if let Some(((r, c), v)) = x.indexed_iter().find(|(_, &v)| !(v > 0.0)) {
        return Err(crate::Error::InvalidData(format!(
            "transmission must be positive; pixel ({r}, {c}) = {v}"
        )));
    }
    Ok(x.mapv(|v| {
        let ln = v.ln();
        Complex64::from_polar((alpha * ln).exp(), gamma * ln)
    }))
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    /// `|z| - y`.
    pub residual: Array2<f64>,
    pub z: ComplexField,
}

fn check_dims(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, kernel: &PropagatorKernel) -> Result<()> {
    ensure!(
        x.dim() == y.dim() && x.dim() == kernel.dim(),
        InvalidArgument,
        "x {:?}, y {:?} and kernel {:?} dims differ",
        x.dim(),
        y.dim(),
        kernel.dim()
    );
    Ok(())
}

pub fn objective(
    x: ArrayView2<'_, f64>,
    y_padded: ArrayView2<'_, f64>,
    kernel: &PropagatorKernel,
    alpha: f64,
    gamma: f64,
) -> Result<Evaluation> {
    check_dims(x, y_padded, kernel)?;
    let xt = complex_power(x, alpha, gamma)?;
    let z = propagate(xt.view(), kernel)?;
    let residual = Zip::from(&z).and(&y_padded).map_collect(|z, &y| z.norm() - y);
    let value = residual.iter().map(|r| r * r).sum();
    Ok(Evaluation { value, residual, z })
}

/// Gradient of the objective with respect to the real field `x`, given an
/// evaluation at the same `x`.
pub fn gradient_from(x: ArrayView2<'_, f64>, eval: &Evaluation, kernel: &PropagatorKernel, alpha: f64, gamma: f64) -> Result<Array2<f64>> {
    let weighted = Zip::from(&eval.z)
        .and(&eval.residual)
        .map_collect(|&z, &r| z * (r / z.norm().max(PHASE_GUARD)));
    let back = adjoint_propagate(weighted.view(), kernel)?;
    let exponent = Complex64::new(alpha, gamma);
    Ok(Zip::from(&x).and(&back).map_collect(|&xv, &b| {
        // d/dx x^(α+iγ) = (α+iγ) x^(α+iγ-1)
        let ln = xv.ln();
        let deriv = exponent * Complex64::from_polar(((alpha - 1.0) * ln).exp(), gamma * ln);
        2.0 * (deriv.conj() * b).re
    }))
}

pub fn gradient(
    x: ArrayView2<'_, f64>,
    y_padded: ArrayView2<'_, f64>,
    kernel: &PropagatorKernel,
    alpha: f64,
    gamma: f64,
) -> Result<Array2<f64>> {
    let eval = objective(x, y_padded, kernel, alpha, gamma)?;
    gradient_from(x, &eval, kernel, alpha, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fresnel::propagator_kernel;
    use crate::geometry::AcquisitionGeometry;

    #[test]
    fn complex_power_cases() {
        let ones = Array2::ones((2, 3));
        let p = complex_power(ones.view(), 0.7, 350.0).unwrap();
        assert!(p.iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-15));

        let x = Array2::from_elem((1, 1), 0.99614);
        let p = complex_power(x.view(), 1.0, 350.0).unwrap()[[0, 0]];
        assert!((p.norm() - 0.99614).abs() < 1e-12);
        let want = -350.0 * (-(0.99614f64.ln()));
        assert!((p.arg() - want).abs() < 1e-9);
        assert!((want + 1.3538).abs() < 2e-4);

        let real = complex_power(Array2::from_elem((1, 1), 0.5).view(), 2.0, 0.0).unwrap()[[0, 0]];
        assert_eq!(real.im, 0.0);
        assert!((real.re - 0.25).abs() < 1e-15);

        assert!(complex_power(Array2::zeros((1, 1)).view(), 1.0, 1.0).is_err());
    }

    #[test]
    fn zero_distance_reduces_to_plain_least_squares() {
        let g = AcquisitionGeometry::new(1e-10, 0.0, 1e-6, 4, 4, vec![]).unwrap();
        let k = propagator_kernel(&g, 4, 5).unwrap();
        let x = Array2::from_shape_fn((4, 5), |(i, j)| 0.5 + 0.05 * (i + 2 * j) as f64);
        let y = Array2::from_shape_fn((4, 5), |(i, j)| 0.6 + 0.03 * (3 * i + j) as f64);
        let e = objective(x.view(), y.view(), &k, 1.0, 0.0).unwrap();
        let want: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b).powi(2)).sum();
        assert!((e.value - want).abs() < 1e-12);
        let g = gradient(x.view(), y.view(), &k, 1.0, 0.0).unwrap();
        for ((gv, a), b) in g.iter().zip(x.iter()).zip(y.iter()) {
            assert!((gv - 2.0 * (a - b)).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_fit_has_zero_value_and_gradient() {
        let g = AcquisitionGeometry::new(6.2e-11, 0.1, 0.645e-6, 8, 8, vec![]).unwrap();
        let k = propagator_kernel(&g, 8, 8).unwrap();
        let x = Array2::from_shape_fn((8, 8), |(i, j)| 1.0 - 0.002 * ((i * j) % 5) as f64);
        let z = propagate(complex_power(x.view(), 1.0, 350.0).unwrap().view(), &k).unwrap();
        let y = z.mapv(|v| v.norm());
        let e = objective(x.view(), y.view(), &k, 1.0, 350.0).unwrap();
        let scale: f64 = y.iter().map(|v| v * v).sum();
        assert!(e.value <= 1e-12 * scale);
        let grad = gradient(x.view(), y.view(), &k, 1.0, 350.0).unwrap();
        assert!(grad.iter().all(|v| v.abs() < 1e-10));
    }
}
