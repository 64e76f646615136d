//! Non-linear transmission retrieval.
//!
//! The transmission of a homogeneous-ratio object is written `x^(α+iγ)`
//! with a single real field `x`, so the implied absorption `-α ln x` and
//! phase `-γ ln x` stay proportional. `x` is fitted to the square-root
//! intensity on the edge-padded grid by projected L-BFGS, starting from the
//! linear (Paganin) estimate.

mod lbfgs;
mod objective;

pub use lbfgs::{lbfgs_minimize, LbfgsOptions, Termination, Trace, TraceEntry};
pub use objective::{complex_power, gradient, gradient_from, objective, Evaluation, PHASE_GUARD};

use ndarray::{Array2, ArrayView2};

use crate::error::{ensure, Result};
use crate::fresnel::{KernelCache, PropagatorKernel};
use crate::geometry::{AcquisitionGeometry, RetrievalConfig};
use crate::lpr::{lpr_padded, TransmissionMap};
use crate::pad::pad_edge;

/// Minimize the magnitude misfit on a padded grid from the starting field
/// `x0`. Returns the padded estimate and the objective trace.
pub fn minimize_padded(
    x0: ArrayView2<'_, f64>,
    y_padded: ArrayView2<'_, f64>,
    kernel: &PropagatorKernel,
    config: &RetrievalConfig,
) -> Result<(Array2<f64>, Trace)> {
    ensure!(
        x0.dim() == y_padded.dim(),
        InvalidArgument,
        "start {:?} and data {:?} dims differ",
        x0.dim(),
        y_padded.dim()
    );
    let dim = x0.dim();
    let (alpha, gamma) = (config.alpha, config.gamma);
    let start: Vec<f64> = x0.iter().copied().collect();
    let mut failure = None;
    let eval = |x: &[f64], grad: &mut [f64]| -> f64 {
        let field = ArrayView2::from_shape(dim, x).expect("matching length");
        let result =
            objective(field, y_padded, kernel, alpha, gamma).and_then(|e| Ok((e.value, gradient_from(field, &e, kernel, alpha, gamma)?)));
        match result {
            Ok((value, g)) => {
                grad.iter_mut().zip(g.iter()).for_each(|(d, s)| *d = *s);
                value
            }
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };
    let (x, mut trace) = match lbfgs_minimize(&start, eval, &LbfgsOptions::from_config(config)) {
        Ok(done) => done,
        Err(e) => return Err(failure.unwrap_or(e)),
    };
    trace.config = Some(config.clone());
    Ok((Array2::from_shape_vec(dim, x).expect("matching length"), trace))
}

/// Retrieve the transmission of one normalized frame: pad, initialize from
/// LPR, minimize, crop.
pub fn nlpr_retrieve(
    y: ArrayView2<'_, f64>,
    geometry: &AcquisitionGeometry,
    config: &RetrievalConfig,
    kernels: &KernelCache,
) -> Result<(TransmissionMap, Trace)> {
    config.validate()?;
    ensure!(
        y.iter().all(|&v| v >= 0.0 && v.is_finite()),
        InvalidData,
        "normalized frame must be finite and non-negative"
    );
    let (y_padded, window) = pad_edge(y, config.pad_factor)?;
    let mut x0 = lpr_padded(y_padded.view(), geometry, config.gamma, config.lower_bound)?;
    if let Some(ub) = config.upper_bound {
        x0.mapv_inplace(|v| v.min(ub));
    }
    let (pu, pv) = y_padded.dim();
    let kernel = kernels.get(geometry, pu, pv)?;
    let (x, trace) = minimize_padded(x0.view(), y_padded.view(), &kernel, config)?;
    Ok((TransmissionMap::new(window.crop(x.view()))?, trace))
}
