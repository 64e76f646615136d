//! `xpct`: simulate, retrieve, reconstruct and evaluate single-distance
//! phase-contrast tomography datasets.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use xpct::geometry::{equispaced_angles, wavelength_from_energy};
use xpct::pipeline::{run_evaluate, run_reconstruct, run_retrieval, simulate_dataset, EvaluateRequest, Method, RetrievalRequest};
use xpct::simulate::{PhantomSpec, SimulationOptions, DEFAULT_FLUX};
use xpct::{AcquisitionGeometry, Error, RetrievalConfig};

#[derive(Parser)]
#[command(name = "xpct", version, about = "Single-distance X-ray phase-contrast tomography pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate noisy radiographs of a sphere phantom.
    Simulate(SimulateArgs),
    /// Retrieve transmission and phase for every view.
    Retrieve(RetrieveArgs),
    /// Filtered back projection of retrieved phase into a δ volume.
    Reconstruct(ReconstructArgs),
    /// Score reconstructions and write a JSON report.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// `single`, `multi`, or a JSON phantom description.
    #[arg(long, default_value = "single")]
    phantom: String,
    #[arg(long, default_value_t = 64)]
    views: usize,
    #[arg(long, default_value_t = 20.0)]
    energy_kev: f64,
    #[arg(long, default_value_t = 100.0)]
    distance_mm: f64,
    #[arg(long, default_value_t = 0.645)]
    pixel_um: f64,
    /// Detector size as ROWSxCOLS.
    #[arg(long, default_value = "48x64", value_parser = parse_detector)]
    detector: (usize, usize),
    /// Incident photons per pixel.
    #[arg(long, default_value_t = DEFAULT_FLUX)]
    flux: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_noise: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RetrieveArgs {
    #[arg(long, default_value = "nlpr", value_parser = parse_method)]
    method: Method,
    #[arg(long, default_value_t = 350.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-6)]
    xtol: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 1.5)]
    pad_factor: f64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Propagation distance in mm assumed by the retrieval.
    #[arg(long)]
    distance_override: Option<f64>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Apply a Hamming window to the ramp filter.
    #[arg(long)]
    apodize: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Simulated dataset holding the ground truth.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// One or more reconstructed datasets.
    #[arg(long, num_args = 1.., required = true)]
    recon: Vec<PathBuf>,
    /// JSON file with circle ROIs; defaults to the phantom's spheres.
    #[arg(long)]
    rois: Option<PathBuf>,
    #[arg(long)]
    report: PathBuf,
}

fn parse_detector(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected ROWSxCOLS, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(r)?, parse(c)?))
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_phantom(name: &str, geometry: &AcquisitionGeometry) -> Result<PhantomSpec, Error> {
    let mut spec = match name {
        "single" => PhantomSpec::single_material(),
        "multi" => PhantomSpec::multi_material(),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidArgument(format!("{path}: {e}")))?;
            return serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{path}: {e}")));
        }
    };
    // built-in phantoms are voxelized at half the detector pitch
    spec.voxel_width = geometry.pixel_pitch / 2.0;
    spec.volume_dims = (2 * geometry.n_u, 2 * geometry.n_v, 2 * geometry.n_v);
    Ok(spec)
}

fn simulate(args: SimulateArgs) -> Result<(), Error> {
    let (rows, cols) = args.detector;
    let geometry = AcquisitionGeometry::new(
        wavelength_from_energy(args.energy_kev)?,
        args.distance_mm * 1e-3,
        args.pixel_um * 1e-6,
        rows,
        cols,
        equispaced_angles(args.views),
    )?;
    let spec = load_phantom(&args.phantom, &geometry)?;
    let options = SimulationOptions {
        flux: args.flux,
        seed: args.seed,
        noiseless: args.no_noise,
        ..SimulationOptions::default()
    };
    simulate_dataset(&args.out, &spec, &geometry, &options)?;
    Ok(())
}

fn retrieve(args: RetrieveArgs) -> Result<(), Error> {
    let request = RetrievalRequest {
        method: args.method,
        config: RetrievalConfig {
            alpha: args.alpha,
            gamma: args.gamma,
            xtol_rel: args.xtol,
            max_iterations: args.max_iter,
            pad_factor: args.pad_factor,
            ..RetrievalConfig::default()
        },
        workers: args.workers,
        distance_override: args.distance_override.map(|mm| mm * 1e-3),
    };
    run_retrieval(&args.input, &args.out, &request)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Retrieve(args) => retrieve(args),
        Command::Reconstruct(args) => run_reconstruct(&args.input, &args.out, args.apodize).map(drop),
        Command::Evaluate(args) => run_evaluate(&EvaluateRequest {
            truth: args.truth,
            recon: args.recon,
            rois: args.rois,
            report: args.report,
        })
        .map(drop),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
