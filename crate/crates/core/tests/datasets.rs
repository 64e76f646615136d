use std::fs;
use std::path::Path;

use ndarray::Axis;
use xpct::io::{decode_pgm, load_dataset, Stage, MANIFEST};
use xpct::pipeline::{run_evaluate, run_reconstruct, run_retrieval, simulate_dataset, EvaluateRequest, Method, RetrievalRequest};
use xpct::simulate::{paper_geometry, simulate, PhantomSpec, SimulationOptions};
use xpct::{AcquisitionGeometry, Error};

fn eight_views() -> AcquisitionGeometry {
    let mut g = paper_geometry();
    g.angles = g.angles.iter().step_by(8).copied().collect();
    g
}

fn options() -> SimulationOptions {
    SimulationOptions {
        seed: 4,
        ..SimulationOptions::default()
    }
}

fn simulated(dir: &Path) {
    simulate_dataset(dir, &PhantomSpec::single_material(), &eight_views(), &options()).unwrap();
}

#[test]
fn pipeline_stages_chain_on_disk() {
    let tmp = tempfile::tempdir().unwrap();
    let (sim, ret, rec) = (tmp.path().join("sim"), tmp.path().join("ret"), tmp.path().join("rec"));
    simulated(&sim);

    let loaded = load_dataset(&sim).unwrap();
    assert_eq!(loaded.manifest.stages, vec![Stage::Raw, Stage::Normalized]);
    let (m, _) = simulate(&PhantomSpec::single_material(), &eight_views(), &options()).unwrap();
    let stored = loaded.read3("normalized").unwrap();
    assert_eq!(stored, m.normalized.mapv(|v| f64::from(v as f32)));
    assert_eq!(loaded.read("bright").unwrap().shape(), &[1, 48, 64]);

    let request = RetrievalRequest::new(Method::Lpr);
    let manifest = run_retrieval(&sim, &ret, &request).unwrap();
    assert_eq!(manifest.stages, vec![Stage::Transmission, Stage::Phase]);
    let info = manifest.retrieval.as_ref().unwrap();
    assert_eq!((info.method.as_str(), info.distance), ("lpr", 0.1));
    assert!(info.failed_views.is_empty());
    // LPR keeps no optimizer traces
    assert!(!ret.join("traces").exists());

    let manifest = run_reconstruct(&ret, &rec, false).unwrap();
    assert_eq!(manifest.stages, vec![Stage::Phase, Stage::Volume]);
    let delta = load_dataset(&rec).unwrap().read3("delta").unwrap();
    assert_eq!(delta.dim(), (48, 64, 64));

    let report_path = tmp.path().join("out").join("report.json");
    let report = run_evaluate(&EvaluateRequest {
        truth: Some(sim.clone()),
        recon: vec![rec.clone()],
        rois: None,
        report: report_path.clone(),
    })
    .unwrap();
    assert_eq!(report.methods[0].name, "lpr");
    assert_eq!(report.circles.len(), 3);
    assert!(report.methods[0].rmse_delta.unwrap() > 0.0);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(json["methods"][0]["circles"].as_array().unwrap().len(), 3);

    let csv = fs::read_to_string(tmp.path().join("out/report.lpr.mtf.csv")).unwrap();
    assert!(csv.starts_with("coordinate,value\n"));
    assert_eq!(csv.lines().count(), 18);
    let pgm = fs::read(tmp.path().join("out/report.lpr.pgm")).unwrap();
    let (rows, cols, pixels) = decode_pgm(&pgm).unwrap();
    assert_eq!((rows, cols), (64, 64));
    assert_eq!(pixels.iter().max(), Some(&65535));
    let slice = report.circles[0].slice;
    let brightest = delta
        .index_axis(Axis(0), slice)
        .indexed_iter()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|((i, j), _)| i * cols + j)
        .unwrap();
    assert_eq!(pixels[brightest], 65535);
}

#[test]
fn truncated_array_names_file_and_size() {
    let tmp = tempfile::tempdir().unwrap();
    simulated(tmp.path());
    let file = tmp.path().join("normalized.f32");
    let bytes = fs::read(&file).unwrap();
    fs::write(&file, &bytes[..bytes.len() - 4]).unwrap();
    let err = load_dataset(tmp.path()).unwrap_err();
    assert!(matches!(err, Error::Format { .. }), "{err:?}");
    assert!(err.is_validation());
    let message = err.to_string();
    assert!(
        message.contains("normalized.f32") && message.contains(&(8 * 48 * 64 * 4).to_string()),
        "{message}"
    );
}

#[test]
fn stages_must_be_present() {
    let tmp = tempfile::tempdir().unwrap();
    simulated(&tmp.path().join("sim"));
    let err = run_reconstruct(&tmp.path().join("sim"), &tmp.path().join("rec"), false).unwrap_err();
    assert!(err.is_validation(), "{err:?}");
    assert!(err.to_string().contains("phase"), "{err}");
    assert!(!tmp.path().join("rec").join(MANIFEST).exists());
}

#[test]
fn unreadable_manifest_is_a_format_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join(MANIFEST), "{ not json").unwrap();
    let err = load_dataset(tmp.path()).unwrap_err();
    assert!(matches!(err, Error::Format { .. }), "{err:?}");

    let missing = load_dataset(&tmp.path().join("nowhere")).unwrap_err();
    assert!(!missing.is_validation(), "{missing:?}");
}
