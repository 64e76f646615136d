use std::sync::OnceLock;

use ndarray::{s, Array2, Axis};
use xpct::fresnel::KernelCache;
use xpct::lpr::{absorption_from_transmission, lpr_retrieve, phase_from_transmission};
use xpct::metrics::rmse;
use xpct::nlpr::nlpr_retrieve;
use xpct::pipeline::{retrieve_views, Method, RetrievalRequest, SHARP_DISTANCE};
use xpct::simulate::{paper_geometry, simulate, GroundTruth, MeasurementSet, PhantomSpec, SimulationOptions};
use xpct::{AcquisitionGeometry, RetrievalConfig};

/// Four views of the single-material phantom at the reference geometry.
fn geometry() -> AcquisitionGeometry {
    let mut g = paper_geometry();
    g.angles = g.angles.iter().step_by(16).copied().collect();
    g
}

fn dataset(noiseless: bool) -> &'static (MeasurementSet, GroundTruth) {
    static NOISY: OnceLock<(MeasurementSet, GroundTruth)> = OnceLock::new();
    static CLEAN: OnceLock<(MeasurementSet, GroundTruth)> = OnceLock::new();
    let cell = if noiseless { &CLEAN } else { &NOISY };
    cell.get_or_init(|| {
        let options = SimulationOptions {
            seed: 9,
            noiseless,
            ..SimulationOptions::default()
        };
        simulate(&PhantomSpec::single_material(), &geometry(), &options).unwrap()
    })
}

fn total_variation(x: &Array2<f64>) -> f64 {
    let dr = x.slice(s![1.., ..]).to_owned() - x.slice(s![..-1, ..]);
    let dc = x.slice(s![.., 1..]).to_owned() - x.slice(s![.., ..-1]);
    dr.iter().chain(dc.iter()).map(|d| d.abs()).sum()
}

#[test]
fn lpr_smoothing_grows_with_distance() {
    let (m, _) = dataset(false);
    let y = m.normalized.index_axis(Axis(0), 1);
    let config = RetrievalConfig::default();
    let tv: Vec<f64> = [0.0, 25e-3, 50e-3, 100e-3]
        .iter()
        .map(|&d| {
            let g = geometry().with_distance(d).unwrap();
            total_variation(&lpr_retrieve(y, &g, &config).unwrap().into_inner())
        })
        .collect();
    assert!(tv.windows(2).all(|w| w[1] <= w[0]), "TV {tv:?}");
    // R = 0 leaves the frame untouched up to FFT round-off
    let g0 = geometry().with_distance(0.0).unwrap();
    let x = lpr_retrieve(y, &g0, &config).unwrap();
    assert!(x.view().iter().zip(y).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn sharp_variant_is_lpr_at_five_millimetres() {
    let (m, _) = dataset(false);
    let sharp = retrieve_views(m.normalized.view(), &m.geometry, &RetrievalRequest::new(Method::LprSharp)).unwrap();
    assert_eq!(sharp.distance, SHARP_DISTANCE);
    let near = m.geometry.with_distance(SHARP_DISTANCE).unwrap();
    let config = RetrievalConfig::default();
    for (v, frame) in m.normalized.outer_iter().enumerate() {
        let x = lpr_retrieve(frame, &near, &config).unwrap();
        assert_eq!(sharp.transmission.index_axis(Axis(0), v), x.view());
    }
}

#[test]
fn noiseless_views_are_fitted() {
    let (m, truth) = dataset(true);
    let config = RetrievalConfig::default();
    let kernels = KernelCache::new();
    for (v, frame) in m.normalized.outer_iter().enumerate() {
        let (x, trace) = nlpr_retrieve(frame, &m.geometry, &config, &kernels).unwrap();
        let (first, last) = (trace.initial_objective().unwrap(), trace.final_objective().unwrap());
        assert!(last < 1e-3 * first, "view {v}: objective {first} -> {last}");
        let objectives: Vec<f64> = trace.iterations.iter().map(|e| e.objective).collect();
        assert!(objectives.windows(2).all(|w| w[1] <= w[0]), "view {v}: objective rose");
        let err = rmse(&x.view(), &truth.transmission.index_axis(Axis(0), v)).unwrap();
        assert!(err < 1e-3, "view {v}: |T| rmse {err}");
        let echoed = trace.config.as_ref().unwrap();
        assert_eq!((echoed.alpha, echoed.gamma, echoed.xtol_rel), (1.0, 350.0, 1e-6));
    }
}

#[test]
fn zero_budget_returns_the_linear_estimate() {
    let (m, _) = dataset(false);
    let config = RetrievalConfig {
        max_iterations: 0,
        ..RetrievalConfig::default()
    };
    let frame = m.normalized.index_axis(Axis(0), 2);
    let (x, _) = nlpr_retrieve(frame, &m.geometry, &config, &KernelCache::new()).unwrap();
    assert_eq!(x, lpr_retrieve(frame, &m.geometry, &config).unwrap());
}

#[test]
fn phase_is_gamma_times_absorption() {
    let (m, _) = dataset(false);
    let config = RetrievalConfig::default();
    let (x, _) = nlpr_retrieve(m.normalized.index_axis(Axis(0), 0), &m.geometry, &config, &KernelCache::new()).unwrap();
    let phase = phase_from_transmission(&x, config.gamma);
    let absorption = absorption_from_transmission(&x, 1.0);
    for (p, a) in phase.iter().zip(&absorption) {
        assert!((p - config.gamma * a).abs() <= 1e-12 * p.abs().max(1e-300));
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let (m, _) = dataset(false);
    let run = |workers| {
        let request = RetrievalRequest {
            workers,
            ..RetrievalRequest::new(Method::Nlpr)
        };
        retrieve_views(m.normalized.view(), &m.geometry, &request).unwrap()
    };
    let (one, three) = (run(1), run(3));
    assert!(one.failures.is_empty());
    assert_eq!(one.transmission, three.transmission);
    assert_eq!(one.phase, three.phase);
}
