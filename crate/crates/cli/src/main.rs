mod experiment;

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use egocal::par::trial_rng;
use egocal::problem::{load_measurements, load_trajectory, relative_motions_from_trajectories, write_measurements, write_trajectory};
use egocal::qcqp::assemble;
use egocal::sdp::{self, SdpOptions};
use egocal::sim::{
    corrupt_with, generate_path, random_extrinsic, sensor_trajectories, simulate_measurements, NoiseModel, PathParams,
};
use egocal::solver::{calibration_sdp, certify_candidate, CalibrationReport, REPORT_SCHEMA_VERSION};
use egocal::{calibrate, CalibrateOptions, ConstraintKind, Extrinsic, MeasurementSet};
use serde::{Deserialize, Serialize};

/// Certifiably globally optimal extrinsic calibration from paired egomotion.
#[derive(Debug, Parser)]
#[command(name = "egocal", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the extrinsic from paired motions and certify it.
    ///
    /// Exits 0 when the estimate is certified globally optimal, 2 when it is
    /// not (the report is still written) and 1 on error.
    Calibrate(CalibrateArgs),
    /// Generate a random terrain path with synthetic paired motions.
    #[command(allow_negative_numbers = true)]
    Simulate(SimulateArgs),
    /// Run one of the simulation experiments and write CSV and JSON summaries.
    Experiment(experiment::ExperimentArgs),
    /// Check whether a given extrinsic attains the dual lower bound.
    ///
    /// Exits 0 when the candidate is globally optimal, 2 when it is not.
    Certify(CertifyArgs),
}

#[derive(Debug, Args)]
pub(crate) struct SolverArgs {
    /// Constraint set of the relaxation: r, r+c, r+h or r+c+h.
    #[arg(long, default_value = "r+c+h")]
    pub constraint_set: ConstraintKind,
    /// Relative duality gap tolerance of the SDP solver.
    #[arg(long, default_value_t = 1e-9, value_parser = positive)]
    pub tol_gap: f64,
    /// Feasibility tolerance of the SDP solver.
    #[arg(long, default_value_t = 1e-9, value_parser = positive)]
    pub tol_feas: f64,
    /// Fail instead of solving when rotations do not span two axes.
    #[arg(long)]
    pub strict_observability: bool,
}

impl SolverArgs {
    pub fn options(&self) -> CalibrateOptions {
        let mut opts = CalibrateOptions::with_constraints(self.constraint_set);
        opts.tolerances.tol_gap = self.tol_gap;
        opts.tolerances.tol_feas = self.tol_feas;
        opts.strict_observability = self.strict_observability;
        opts
    }
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Paired relative motions as JSON lines.
    #[arg(long, required_unless_present = "trajectory_a", conflicts_with = "trajectory_a")]
    input: Option<PathBuf>,
    /// World-frame poses of sensor a, differenced into relative motions.
    #[arg(long, requires = "trajectory_b")]
    trajectory_a: Option<PathBuf>,
    /// World-frame poses of sensor b.
    #[arg(long, requires = "trajectory_a")]
    trajectory_b: Option<PathBuf>,
    /// Report destination; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write the SDP iterate history as CSV.
    #[arg(long)]
    sdp_history: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Output directory; created if missing.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    n_motions: usize,
    /// Standard deviation of the Euler-angle noise, in radians.
    #[arg(long, default_value_t = 0.0)]
    sigma_r: f64,
    /// Standard deviation of the translation noise, in meters.
    #[arg(long, default_value_t = 0.0)]
    sigma_t: f64,
    /// Terrain height scale; 0 gives a planar circle.
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    /// Radius of the circular path, in meters.
    #[arg(long, default_value_t = 10.0)]
    radius: f64,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    /// Paired relative motions as JSON lines.
    #[arg(long)]
    input: PathBuf,
    /// Candidate extrinsic: `{"R": ..., "t": ...}` or a calibration report.
    #[arg(long)]
    theta: PathBuf,
    /// Report destination; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be positive, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

/// Process outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Success,
    Uncertified,
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
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Uncertified) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Calibrate(args) => cmd_calibrate(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Experiment(args) => experiment::run(&args).map(|()| Outcome::Success),
        Command::Certify(args) => cmd_certify(&args),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub(crate) fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut sink: Box<dyn Write> = match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    serde_json::to_writer_pretty(&mut sink, value)?;
    sink.write_all(b"\n")?;
    sink.flush()?;
    Ok(())
}

fn read_measurements(path: &Path) -> Result<MeasurementSet> {
    load_measurements(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<Outcome> {
    let m = match (&args.input, &args.trajectory_a, &args.trajectory_b) {
        (Some(input), _, _) => read_measurements(input)?,
        (None, Some(a), Some(b)) => {
            let pa = load_trajectory(open(a)?).with_context(|| format!("reading {}", a.display()))?;
            let pb = load_trajectory(open(b)?).with_context(|| format!("reading {}", b.display()))?;
            relative_motions_from_trajectories(&pa, &pb)?
        }
        _ => bail!("either --input or both --trajectory-a and --trajectory-b are required"),
    };
    let opts = args.solver.options();
    let result = calibrate(&m, &opts)?;
    if let Some(path) = &args.sdp_history {
        let data = assemble(&m)?;
        let problem = calibration_sdp(&data, opts.constraint_set);
        let sdp_opts = SdpOptions {
            record_history: true,
            ..opts.tolerances.sdp_options()
        };
        sdp::solve(&problem, &sdp_opts).write_history_csv(create(path)?)?;
    }
    let certified = result.certificate.is_certified();
    eprintln!(
        "{:?}: cost {:.6e}, gap {:.3e}",
        result.certificate.verdict, result.cost, result.certificate.gap
    );
    write_json(args.output.as_deref(), &CalibrationReport::from(result))?;
    Ok(if certified { Outcome::Success } else { Outcome::Uncertified })
}

#[derive(Serialize)]
struct SimulationMetadata {
    schema_version: u32,
    seed: u64,
    n_motions: usize,
    sigma_r: f64,
    sigma_t: f64,
    path: PathParams,
    observable: bool,
    observability: egocal::ObservabilityReport,
}

fn cmd_simulate(args: &SimulateArgs) -> Result<Outcome> {
    if args.n_motions < 2 {
        bail!("--n-motions must be at least 2, got {}", args.n_motions);
    }
    let params = PathParams {
        radius: args.radius,
        amplitude: args.amplitude,
        ..PathParams::with_motions(args.n_motions, args.seed)
    };
    let noise = NoiseModel::new(args.sigma_r, args.sigma_t, args.seed)?;
    let path = generate_path(&params)?;
    let mut rng = trial_rng(args.seed, 0);
    let theta = random_extrinsic(&mut rng);
    let clean = simulate_measurements(&path, &theta)?;
    let m = corrupt_with(&clean, &noise, &mut rng);
    let observability = egocal::problem::check_observability_default(&m);

    fs::create_dir_all(&args.output).with_context(|| format!("cannot create {}", args.output.display()))?;
    let dir = &args.output;
    let mut w = create(&dir.join("measurements.jsonl"))?;
    write_measurements(&mut w, &m)?;
    w.flush()?;
    let (poses_a, poses_b) = sensor_trajectories(&path, &theta);
    for (name, poses) in [("trajectory_a.jsonl", &poses_a), ("trajectory_b.jsonl", &poses_b)] {
        let mut w = create(&dir.join(name))?;
        write_trajectory(&mut w, poses)?;
        w.flush()?;
    }
    write_json(Some(&dir.join("ground_truth.json")), &theta)?;
    write_path_csv(&dir.join("path.csv"), &poses_b)?;
    write_json(
        Some(&dir.join("metadata.json")),
        &SimulationMetadata {
            schema_version: REPORT_SCHEMA_VERSION,
            seed: args.seed,
            n_motions: args.n_motions,
            sigma_r: args.sigma_r,
            sigma_t: args.sigma_t,
            path: params,
            observable: observability.observable,
            observability,
        },
    )?;
    eprintln!("wrote {} motions to {}", m.len(), dir.display());
    Ok(Outcome::Success)
}

fn write_path_csv(path: &Path, poses: &[egocal::Transform]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "step,x,y,z,r11,r12,r13,r21,r22,r23,r31,r32,r33")?;
    for (i, p) in poses.iter().enumerate() {
        let t = p.translation;
        let r = p.rotation.to_rows().concat();
        let rot: Vec<String> = r.iter().map(f64::to_string).collect();
        writeln!(w, "{i},{},{},{},{}", t.x, t.y, t.z, rot.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ThetaFile {
    Bare(Extrinsic),
    Report { theta: Extrinsic },
}

#[derive(Serialize)]
struct CertifyReport {
    schema_version: u32,
    theta: Extrinsic,
    constraint_set: ConstraintKind,
    #[serde(flatten)]
    check: egocal::solver::CandidateCheck,
}

fn cmd_certify(args: &CertifyArgs) -> Result<Outcome> {
    let m = read_measurements(&args.input)?;
    let theta: ThetaFile = serde_json::from_reader(open(&args.theta)?)
        .with_context(|| format!("{} is neither an extrinsic nor a calibration report", args.theta.display()))?;
    let theta = match theta {
        ThetaFile::Bare(t) | ThetaFile::Report { theta: t } => t,
    };
    let opts = args.solver.options();
    if opts.strict_observability {
        let obs = egocal::problem::check_observability_default(&m);
        if !obs.observable {
            bail!("measurements are not observable: rotations span {} distinct axis(es)", obs.distinct_axis_count);
        }
    }
    let check = certify_candidate(&m, &theta, &opts)?;
    let optimal = check.globally_optimal;
    eprintln!(
        "{}: cost {:.6e}, dual bound {:.6e}, gap {:.3e}",
        if optimal { "globally optimal" } else { "not certified" },
        check.cost,
        check.dual_bound,
        check.gap
    );
    write_json(
        args.output.as_deref(),
        &CertifyReport {
            schema_version: REPORT_SCHEMA_VERSION,
            theta,
            constraint_set: opts.constraint_set,
            check,
        },
    )?;
    Ok(if optimal { Outcome::Success } else { Outcome::Uncertified })
}
