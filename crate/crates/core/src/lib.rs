//! Single-distance X-ray phase-contrast tomography.
//!
//! Simulates sphere-phantom radiographs, retrieves per-view transmission by
//! linear (Paganin) filtering or by constrained non-linear least squares,
//! reconstructs the refractive index decrement with filtered back projection
//! and scores the result.

mod error;
pub mod fft;
pub mod fresnel;
pub mod geometry;
pub mod io;
pub mod lpr;
pub mod metrics;
pub mod nlpr;
pub mod pad;
pub mod pipeline;
pub mod simulate;
pub mod tomo;

pub use error::{Error, Result};
pub use geometry::{AcquisitionGeometry, RetrievalConfig};
