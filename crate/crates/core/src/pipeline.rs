//! Dataset-to-dataset stages behind the command line tool.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, Array3, ArrayView3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::fresnel::KernelCache;
use crate::geometry::{AcquisitionGeometry, RetrievalConfig};
use crate::io::{
    export_pgm, load_dataset, save_dataset, Dataset, DatasetManifest, Phantom, Provenance, ReconstructionInfo, RetrievalInfo, Stage, Window,
};
use crate::lpr::{lpr_retrieve, phase_from_transmission, TransmissionMap};
use crate::metrics::{build_report, CircleRoi, EvaluationReport, ProfileLine, Reconstruction, ReportConfig, Truth};
use crate::nlpr::{nlpr_retrieve, Trace};
use crate::simulate::{simulate, PhantomSpec, SimulationOptions};
use crate::tomo::{reconstruct_delta, Quantity, Sinogram, Volume};

/// Propagation distance assumed by LPR-Sharp unless overridden.
pub const SHARP_DISTANCE: f64 = 5e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Lpr,
    LprSharp,
    Nlpr,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Lpr => "lpr",
            Method::LprSharp => "lpr-sharp",
            Method::Nlpr => "nlpr",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lpr" => Ok(Method::Lpr),
            "lpr-sharp" => Ok(Method::LprSharp),
            "nlpr" => Ok(Method::Nlpr),
            other => Err(Error::InvalidArgument(format!(
                "unknown method {other:?} (expected lpr, lpr-sharp or nlpr)"
            ))),
        }
    }
}

fn to_dyn<D: ndarray::Dimension>(a: ndarray::Array<f64, D>) -> ndarray::ArrayD<f64> {
    a.into_dyn()
}

/// Simulate a phantom and write raw, normalized and ground-truth arrays.
pub fn simulate_dataset(
    dir: &Path,
    spec: &PhantomSpec,
    geometry: &AcquisitionGeometry,
    options: &SimulationOptions,
) -> Result<DatasetManifest> {
    let (m, truth) = simulate(spec, geometry, options)?;
    let mut manifest = DatasetManifest::new(
        geometry.clone(),
        Provenance {
            seed: Some(options.seed),
            flux: Some(options.flux),
            noiseless: options.noiseless,
            phantom: Phantom::Spec(spec.clone()),
        },
    );
    manifest.stages = vec![Stage::Raw, Stage::Normalized];
    let first = |a: &Array3<f64>| a.slice(ndarray::s![0..1, .., ..]).to_owned();
    let arrays = vec![
        ("raw", to_dyn(m.raw)),
        ("bright", to_dyn(first(&m.bright))),
        ("dark", to_dyn(first(&m.dark))),
        ("normalized", to_dyn(m.normalized)),
        ("truth_delta", to_dyn(truth.delta.data)),
        ("truth_beta", to_dyn(truth.beta.data)),
        ("truth_phase", to_dyn(truth.phase)),
        ("truth_absorption", to_dyn(truth.absorption)),
        ("truth_transmission", to_dyn(truth.transmission)),
    ];
    save_dataset(dir, &mut manifest, &arrays)?;
    Ok(manifest)
}

/// Settings for one retrieval run.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalRequest {
    pub method: Method,
    pub config: RetrievalConfig,
    /// Worker threads; the output does not depend on this.
    pub workers: usize,
    /// Propagation distance used instead of the acquisition distance.
    pub distance_override: Option<f64>,
}

impl RetrievalRequest {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            config: RetrievalConfig::default(),
            workers: 1,
            distance_override: None,
        }
    }

    fn distance(&self, geometry: &AcquisitionGeometry) -> f64 {
        match (self.distance_override, self.method) {
            (Some(d), _) => d,
            (None, Method::LprSharp) => SHARP_DISTANCE,
            (None, _) => geometry.distance,
        }
    }
}

/// Per-view retrieval results stacked as `(view, row, col)`.
#[derive(Debug, Clone)]
pub struct RetrievalOutput {
    pub transmission: Array3<f64>,
    pub phase: Array3<f64>,
    /// Optimizer traces (NLPR only).
    pub traces: Vec<Option<Trace>>,
    /// Views that failed, with the error; their slots hold the LPR estimate
    /// (or ones if that failed too).
    pub failures: Vec<(usize, String)>,
    pub distance: f64,
}

fn retrieve_one(
    y: ndarray::ArrayView2<'_, f64>,
    geometry: &AcquisitionGeometry,
    method: Method,
    config: &RetrievalConfig,
    kernels: &KernelCache,
) -> Result<(TransmissionMap, Option<Trace>)> {
    match method {
        Method::Lpr | Method::LprSharp => Ok((lpr_retrieve(y, geometry, config)?, None)),
        Method::Nlpr => {
            let (x, trace) = nlpr_retrieve(y, geometry, config, kernels)?;
            Ok((x, Some(trace)))
        }
    }
}

/// Retrieve every view of a normalized stack on a pool of `workers` threads.
pub fn retrieve_views(
    normalized: ArrayView3<'_, f64>,
    geometry: &AcquisitionGeometry,
    request: &RetrievalRequest,
) -> Result<RetrievalOutput> {
    request.config.validate()?;
    ensure!(request.workers >= 1, InvalidArgument, "workers must be at least 1");
    let distance = request.distance(geometry);
    let geometry = geometry.with_distance(distance)?;
    let (n_views, n_u, n_v) = normalized.dim();
    ensure!(
        (n_u, n_v) == (geometry.n_u, geometry.n_v),
        InvalidArgument,
        "frames are {n_u}x{n_v} but the detector is {}x{}",
        geometry.n_u,
        geometry.n_v
    );

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(request.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {} workers: {e}", request.workers)))?;
    let kernels = KernelCache::new();
    let config = &request.config;
    let results: Vec<_> = pool.install(|| {
        normalized
            .axis_iter(Axis(0))
            .into_par_iter()
            .map(|y| match retrieve_one(y, &geometry, request.method, config, &kernels) {
                Ok((x, trace)) => (x.into_inner(), trace, None),
                Err(e) => {
                    let fallback = lpr_retrieve(y, &geometry, config)
                        .map(TransmissionMap::into_inner)
                        .unwrap_or_else(|_| Array2::ones(y.dim()));
                    let trace = match &e {
                        Error::OptimizationFailure { trace, .. } => Some((**trace).clone()),
                        _ => None,
                    };
                    (fallback, trace, Some(e.to_string()))
                }
            })
            .collect()
    });

    let mut transmission = Array3::zeros((n_views, n_u, n_v));
    let mut phase = Array3::zeros((n_views, n_u, n_v));
    let mut traces = Vec::with_capacity(n_views);
    let mut failures = Vec::new();
    for (view, (x, trace, failure)) in results.into_iter().enumerate() {
        let map = TransmissionMap::new(x.clone()).ok();
        if let Some(map) = &map {
            phase
                .index_axis_mut(Axis(0), view)
                .assign(&phase_from_transmission(map, config.gamma));
        }
        transmission.index_axis_mut(Axis(0), view).assign(&x);
        traces.push(trace);
        if let Some(msg) = failure {
            failures.push((view, msg));
        }
    }
    Ok(RetrievalOutput {
        transmission,
        phase,
        traces,
        failures,
        distance,
    })
}

fn carry_manifest(input: &Dataset) -> DatasetManifest {
    let src = &input.manifest;
    let mut manifest = DatasetManifest::new(src.geometry.clone(), src.provenance.clone());
    manifest.retrieval = src.retrieval.clone();
    manifest.reconstruction = src.reconstruction.clone();
    manifest
}

fn require_stage(dataset: &Dataset, stage: Stage, array: &str) -> Result<()> {
    ensure!(
        dataset.manifest.has_stage(stage) && dataset.has_array(array),
        InvalidData,
        "{}: dataset has no {stage:?} stage (array {array:?} is missing)",
        dataset.dir.display()
    );
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Retrieve transmission and phase for every view of `input` into `output`.
/// Per-view failures are reported after all other views are written.
pub fn run_retrieval(input: &Path, output: &Path, request: &RetrievalRequest) -> Result<DatasetManifest> {
    let dataset = load_dataset(input)?;
    require_stage(&dataset, Stage::Normalized, "normalized")?;
    let normalized = dataset.read3("normalized")?;
    let result = retrieve_views(normalized.view(), &dataset.manifest.geometry, request)?;

    let mut manifest = carry_manifest(&dataset);
    manifest.stages = vec![Stage::Transmission, Stage::Phase];
    manifest.reconstruction = None;
    manifest.retrieval = Some(RetrievalInfo {
        method: request.method.name().into(),
        config: request.config.clone(),
        distance: result.distance,
        failed_views: result.failures.iter().map(|(v, _)| *v).collect(),
    });
    let traces_dir = output.join("traces");
    if result.traces.iter().any(Option::is_some) {
        fs::create_dir_all(&traces_dir).map_err(|e| Error::io(&traces_dir, e))?;
        for (view, trace) in result.traces.iter().enumerate() {
            if let Some(trace) = trace {
                write_text(&traces_dir.join(format!("view_{view:03}.csv")), &trace.to_csv())?;
            }
        }
    }
    let arrays = vec![("transmission", to_dyn(result.transmission)), ("phase", to_dyn(result.phase))];
    save_dataset(output, &mut manifest, &arrays)?;

    if let Some((_, first)) = result.failures.first() {
        return Err(Error::ViewsFailed {
            views: result.failures.iter().map(|(v, _)| *v).collect(),
            first: first.clone(),
        });
    }
    Ok(manifest)
}

/// Filtered back projection of the retrieved phase into a δ volume.
pub fn run_reconstruct(input: &Path, output: &Path, apodize: bool) -> Result<DatasetManifest> {
    let dataset = load_dataset(input)?;
    require_stage(&dataset, Stage::Phase, "phase")?;
    let geometry = &dataset.manifest.geometry;
    let phase = dataset.read3("phase")?;
    let sinogram = Sinogram::new(phase.clone(), geometry.angles.clone(), geometry.pixel_pitch)?;
    let volume = reconstruct_delta(&sinogram, geometry.wavelength, apodize)?;

    let mut manifest = carry_manifest(&dataset);
    manifest.stages = vec![Stage::Phase, Stage::Volume];
    manifest.reconstruction = Some(ReconstructionInfo { apodize });
    let arrays = vec![("phase", to_dyn(phase)), ("delta", to_dyn(volume.data))];
    save_dataset(output, &mut manifest, &arrays)?;
    Ok(manifest)
}

/// Inputs to [`run_evaluate`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateRequest {
    pub truth: Option<PathBuf>,
    pub recon: Vec<PathBuf>,
    /// JSON [`ReportConfig`]; defaults to the phantom's sphere boxes.
    pub rois: Option<PathBuf>,
    pub report: PathBuf,
}

/// Circle boxes of every sphere, the MTF on the largest one and a profile
/// through its centre row.
pub fn default_report_config(spec: &PhantomSpec, geometry: &AcquisitionGeometry) -> Result<ReportConfig> {
    let circles = spec
        .spheres
        .iter()
        .map(|s| CircleRoi::from_sphere(s, geometry.n_u, geometry.n_v, geometry.pixel_pitch))
        .collect::<Result<Vec<_>>>()?;
    let largest = circles
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.radius.total_cmp(&b.1.radius))
        .map(|(i, _)| i);
    let profile = largest.map(|i| (circles[i].slice, ProfileLine::Row(circles[i].center.0.round() as usize)));
    Ok(ReportConfig {
        circles,
        mtf_circle: largest,
        profile,
    })
}

fn volume_of(dataset: &Dataset, name: &str) -> Result<Volume> {
    Ok(Volume {
        data: dataset.read3(name)?,
        voxel_width: dataset.manifest.geometry.pixel_pitch,
        quantity: Quantity::Delta,
    })
}

fn method_names(datasets: &[Dataset]) -> Vec<String> {
    let mut names: Vec<String> = datasets
        .iter()
        .map(|d| match &d.manifest.retrieval {
            Some(r) => r.method.clone(),
            None => d
                .dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "recon".into()),
        })
        .collect();
    for i in 0..names.len() {
        if names[..i].contains(&names[i]) || names[i + 1..].contains(&names[i]) {
            names[i] = format!("{}-{}", names[i], i);
        }
    }
    names
}

/// Score reconstructions against optional truth and write the JSON report
/// plus MTF/profile CSVs and a PGM of the measured slice next to it.
pub fn run_evaluate(request: &EvaluateRequest) -> Result<EvaluationReport> {
    ensure!(!request.recon.is_empty(), InvalidArgument, "no reconstruction to evaluate");
    let recons = request
        .recon
        .iter()
        .map(|p| {
            let d = load_dataset(p)?;
            require_stage(&d, Stage::Volume, "delta")?;
            Ok(d)
        })
        .collect::<Result<Vec<_>>>()?;
    let truth = request.truth.as_deref().map(load_dataset).transpose()?;
    if let Some(t) = &truth {
        ensure!(t.has_array("truth_delta"), InvalidData, "{}: no truth_delta array", t.dir.display());
    }
    let geometry = &recons[0].manifest.geometry;

    let config = match &request.rois {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?
        }
        None => {
            let spec = truth
                .iter()
                .chain(&recons)
                .find_map(|d| d.manifest.provenance.phantom.spec().cloned());
            match spec {
                Some(spec) => default_report_config(&spec, geometry)?,
                None => ReportConfig::default(),
            }
        }
    };

    let truth_delta = truth.as_ref().map(|t| volume_of(t, "truth_delta")).transpose()?;
    let truth_phase = match &truth {
        Some(t) if t.has_array("truth_phase") => Some(t.read3("truth_phase")?),
        _ => None,
    };
    let volumes = recons.iter().map(|d| volume_of(d, "delta")).collect::<Result<Vec<_>>>()?;
    let phases = recons
        .iter()
        .map(|d| {
            if d.has_array("phase") {
                d.read3("phase").map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let names = method_names(&recons);
    let inputs: Vec<Reconstruction<'_>> = names
        .iter()
        .zip(&volumes)
        .zip(&phases)
        .map(|((name, delta), phase)| Reconstruction {
            name,
            delta,
            phase: phase.as_ref(),
        })
        .collect();
    let truth_ref = truth_delta.as_ref().map(|delta| Truth {
        delta,
        phase: truth_phase.as_ref(),
    });
    let report = build_report(truth_ref, &inputs, &config)?;

    if let Some(parent) = request.report.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_text(&request.report, &json)?;
    let stem = request.report.with_extension("");
    let sibling = |suffix: &str| PathBuf::from(format!("{}.{suffix}", stem.display()));
    for (m, volume) in report.methods.iter().zip(&volumes) {
        if let Some(mtf) = &m.mtf {
            write_text(&sibling(&format!("{}.mtf.csv", m.name)), &mtf.to_csv())?;
        }
        if let Some(profile) = &m.profile {
            write_text(&sibling(&format!("{}.profile.csv", m.name)), &profile.to_csv())?;
        }
        if let Some((slice, _)) = config.profile {
            if slice < volume.dim().0 {
                let image = volume.data.index_axis(Axis(0), slice);
                export_pgm(image, &sibling(&format!("{}.pgm", m.name)), Window::Auto)?;
            }
        }
    }
    Ok(report)
}
