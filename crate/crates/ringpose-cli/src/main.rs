//! Command-line front end: fit ellipses to landmark files, project posed
//! rings, register poses, and reproduce the simulation tables.
//!
//! Exit codes: 0 success, 2 bad input, 3 degenerate geometry or fit,
//! 4 registration finished without converging (the result document is
//! still written).

mod landmarks;
mod runs;
mod specfile;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use ringpose_core::{
    apply_pose, canonical_landmarks, distance_sweep, fit_ellipse, fit_implicit,
    hausdorff_distance, project_orthographic, project_perspective, records_to_jsonl, register,
    run_batch, summary_to_csv, sweep_to_csv, BatchSummary, EllipseParams, Error, ImplicitConic,
    Optimizer, Pose, RegistrationConfig, ScannerGeometry,
};

const EXIT_INPUT: u8 = 2;
const EXIT_DEGENERATE: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) => EXIT_INPUT,
            _ => EXIT_DEGENERATE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "ringpose",
    version,
    about = "Pose of a circular implant rim from its ellipse in a cone-beam image"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an ellipse to a landmark file and print its parameters.
    Fit(FitArgs),
    /// Project a posed ring into a landmark file.
    Project(ProjectArgs),
    /// Recover the pose whose projection reproduces a landmark file.
    Register(RegisterArgs),
    /// Run a batch experiment from a spec file into a run directory.
    Simulate(SimulateArgs),
    /// Run an in-plane distance sweep from a spec file.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Landmark file with an x,y header; - reads standard input.
    input: String,
    /// Treat input coordinates as pixels at this pitch (mm per pixel).
    #[arg(long)]
    pixel_pitch: Option<f64>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct ProjectArgs {
    /// Anteversion in degrees.
    #[arg(long)]
    theta: f64,
    /// Inclination in degrees.
    #[arg(long)]
    phi: f64,
    /// In-plane offset along x in mm.
    #[arg(long, default_value_t = 0.0)]
    k: f64,
    /// In-plane offset along y in mm.
    #[arg(long, default_value_t = 0.0)]
    l: f64,
    /// Depth of the ring center above the detector in mm.
    #[arg(long)]
    h: f64,
    /// Ring radius in mm.
    #[arg(long, default_value_t = 25.0)]
    radius: f64,
    /// Source-to-detector distance in mm.
    #[arg(long, default_value_t = 1040.0)]
    source_distance: f64,
    /// Number of projected landmarks.
    #[arg(long, default_value_t = 100)]
    landmarks: usize,
    /// Drop depth instead of projecting through the source.
    #[arg(long)]
    orthographic: bool,
    /// Output file (default standard output).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum OptimizerArg {
    LevenbergMarquardt,
    GradientDescent,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct RegisterArgs {
    /// Landmark file with an x,y header; - reads standard input.
    input: String,
    /// Ring radius in mm.
    #[arg(long, default_value_t = 25.0)]
    radius: f64,
    /// Source-to-detector distance in mm.
    #[arg(long, default_value_t = 1040.0)]
    source_distance: f64,
    /// Treat input coordinates as pixels at this pitch (mm per pixel).
    #[arg(long)]
    pixel_pitch: Option<f64>,
    #[arg(long, value_enum, default_value_t = OptimizerArg::LevenbergMarquardt)]
    optimizer: OptimizerArg,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    loss_tolerance: Option<f64>,
    #[arg(long)]
    step_tolerance: Option<f64>,
    /// Ring discretization of the forward model.
    #[arg(long)]
    n_model_landmarks: Option<usize>,
    /// Skip the mirrored second start.
    #[arg(long)]
    single_start: bool,
    /// Output file for the result document (default standard output).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment spec file (key = value lines).
    spec: PathBuf,
    /// Override the spec's trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the spec's detector noise in mm.
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Run-directory root (default $RINGPOSE_RUN_DIR, then ./runs).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment spec file (key = value lines).
    spec: PathBuf,
    /// In-plane offset distances in mm (overrides the spec's distances_mm).
    #[arg(long, value_delimiter = ',')]
    distances: Option<Vec<f64>>,
    /// Override the spec's trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the spec's detector noise in mm.
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Run-directory root (default $RINGPOSE_RUN_DIR, then ./runs).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct FitDocument {
    ellipse: EllipseParams,
    conic: ImplicitConic,
}

#[derive(Serialize, Deserialize)]
struct ConfigEcho {
    r_mm: f64,
    geometry: ScannerGeometry,
    registration: RegistrationConfig,
}

/// Everything needed to audit or reproduce one registration: the config
/// echo plus the same landmark file reruns to the identical document
/// apart from `time_s`.
#[derive(Serialize, Deserialize)]
struct ResultDocument {
    version: String,
    config: ConfigEcho,
    pose: Pose,
    final_loss: f64,
    iterations: usize,
    converged: bool,
    observed_ellipse: EllipseParams,
    fitted_ellipse: EllipseParams,
    hd_mm: f64,
    time_s: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Project(a) => cmd_project(a),
        Command::Register(a) => cmd_register(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

fn emit(output: Option<&Path>, contents: &str) -> Result<(), Failure> {
    match output {
        Some(path) => runs::write_file_atomic(path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn pretty_json<T: Serialize>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("documents serialize");
    out.push('\n');
    out
}

fn cmd_fit(args: &FitArgs) -> Result<u8, Failure> {
    let points = landmarks::read(&args.input, args.pixel_pitch)?;
    let doc = FitDocument {
        ellipse: fit_ellipse(&points)?,
        conic: fit_implicit(&points)?,
    };
    print!("{}", pretty_json(&doc));
    Ok(0)
}

fn cmd_project(args: &ProjectArgs) -> Result<u8, Failure> {
    let pose = Pose {
        theta: args.theta,
        phi: args.phi,
        k: args.k,
        l: args.l,
        h: args.h,
    };
    for (name, v) in [
        ("theta", pose.theta),
        ("phi", pose.phi),
        ("k", pose.k),
        ("l", pose.l),
        ("h", pose.h),
    ] {
        if !v.is_finite() {
            return Err(Failure::input(format!("{name} must be finite, got {v}")));
        }
    }
    if !(pose.h > 0.0 && pose.h < args.source_distance) {
        return Err(Failure::input(format!(
            "depth h must lie in (0, {}), got {}",
            args.source_distance, pose.h
        )));
    }
    let ring = apply_pose(&canonical_landmarks(args.radius, args.landmarks)?, &pose);
    let projected = if args.orthographic {
        project_orthographic(&ring)
    } else {
        let geom = ScannerGeometry::new(args.source_distance);
        project_perspective(&ring, &geom)?
    };
    emit(args.output.as_deref(), &landmarks::format(&projected))?;
    Ok(0)
}

fn registration_config(args: &RegisterArgs) -> RegistrationConfig {
    let optimizer = match args.optimizer {
        OptimizerArg::LevenbergMarquardt => Optimizer::LevenbergMarquardt,
        OptimizerArg::GradientDescent => Optimizer::GradientDescent,
    };
    let mut config = RegistrationConfig {
        optimizer,
        ..RegistrationConfig::default()
    };
    if let Some(v) = args.max_iterations {
        config.max_iterations = v;
    }
    if let Some(v) = args.loss_tolerance {
        config.loss_tolerance = v;
    }
    if let Some(v) = args.step_tolerance {
        config.step_tolerance = v;
    }
    if let Some(v) = args.n_model_landmarks {
        config.n_model_landmarks = v;
    }
    if args.single_start {
        config.second_start = false;
    }
    config
}

fn cmd_register(args: &RegisterArgs) -> Result<u8, Failure> {
    let points = landmarks::read(&args.input, args.pixel_pitch)?;
    let geom = ScannerGeometry {
        source_distance: args.source_distance,
        pixel_pitch: args.pixel_pitch.unwrap_or(1.0),
    };
    let config = registration_config(args);
    let res = register(&points, args.radius, &geom, &config)?;
    let doc = ResultDocument {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: ConfigEcho {
            r_mm: args.radius,
            geometry: geom,
            registration: config,
        },
        pose: res.pose,
        final_loss: res.final_loss,
        iterations: res.iterations,
        converged: res.converged,
        observed_ellipse: res.observed_ellipse,
        fitted_ellipse: res.fitted_ellipse,
        hd_mm: hausdorff_distance(&res.observed_ellipse, &res.fitted_ellipse, 360),
        time_s: res.wall_time,
    };
    emit(args.output.as_deref(), &pretty_json(&doc))?;
    if doc.converged {
        Ok(0)
    } else {
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn print_summary(summary: &BatchSummary) {
    println!(
        "trials {}  converged {} ({:.1}%)",
        summary.trials,
        summary.converged_trials,
        100.0 * summary.convergence_rate
    );
    println!(
        "{:<24} {:>14} {:>12} {:>10} {:>9}",
        "method", "mae_theta_deg", "mae_phi_deg", "mae_kl_mm", "mae_h_mm"
    );
    if let Some(p) = &summary.proposed {
        println!(
            "{:<24} {:>14.4} {:>12.4} {:>10.4} {:>9.4}",
            "proposed", p.mae_theta_deg, p.mae_phi_deg, p.mae_inplane_mm, p.mae_h_mm
        );
    }
    if let Some(p) = &summary.proposed_converged_only {
        println!(
            "{:<24} {:>14.4} {:>12.4} {:>10.4} {:>9.4}",
            "proposed_converged_only", p.mae_theta_deg, p.mae_phi_deg, p.mae_inplane_mm, p.mae_h_mm
        );
    }
    if let Some(o) = &summary.orthographic {
        println!(
            "{:<24} {:>14.4} {:>12.4} {:>10} {:>9}",
            "orthographic", o.mae_theta_deg, o.mae_phi_deg, "-", "-"
        );
    }
    match summary.mean_hd_mm {
        Some(hd) => println!(
            "mean hd {:.4} mm  mean time {:.4} s",
            hd, summary.mean_time_s
        ),
        None => println!("mean time {:.4} s", summary.mean_time_s),
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<u8, Failure> {
    let mut file = specfile::read(&args.spec)?;
    if let Some(v) = args.trials {
        file.spec.trials = v;
    }
    if let Some(v) = args.seed {
        file.spec.seed = v;
    }
    if let Some(v) = args.noise_sigma {
        file.spec.noise_sigma = v;
    }
    let config = RegistrationConfig::default();
    let (records, summary) = run_batch(&file.spec, &config)?;
    let dir = runs::resolve(args.out_dir.clone(), &args.spec);
    runs::write_atomic(&dir, "spec.json", &pretty_json(&file.spec))?;
    runs::write_atomic(&dir, "trials.jsonl", &records_to_jsonl(&records))?;
    runs::write_atomic(&dir, "summary.json", &pretty_json(&summary))?;
    runs::write_atomic(&dir, "summary.csv", &summary_to_csv(&summary))?;
    print_summary(&summary);
    println!("results: {}", dir.display());
    Ok(0)
}

fn cmd_sweep(args: &SweepArgs) -> Result<u8, Failure> {
    let mut file = specfile::read(&args.spec)?;
    if let Some(v) = args.trials {
        file.spec.trials = v;
    }
    if let Some(v) = args.seed {
        file.spec.seed = v;
    }
    if let Some(v) = args.noise_sigma {
        file.spec.noise_sigma = v;
    }
    let distances = args
        .distances
        .clone()
        .or(file.distances_mm)
        .unwrap_or_else(|| vec![0.0, 50.0, 100.0]);
    let config = RegistrationConfig::default();
    let rows = distance_sweep(&distances, &file.spec, &config)?;
    let dir = runs::resolve(args.out_dir.clone(), &args.spec);
    runs::write_atomic(&dir, "spec.json", &pretty_json(&file.spec))?;
    let csv = sweep_to_csv(&rows);
    runs::write_atomic(&dir, "sweep.csv", &csv)?;
    print!("{csv}");
    println!("results: {}", dir.display());
    Ok(0)
}
