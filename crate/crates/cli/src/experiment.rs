use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use egocal::sim::{
    ablation_experiment, init_heatmap, noise_sweep, runtime_bench, write_trials_csv, AblationConfig, HeatmapConfig,
    RuntimeConfig, SweepConfig, TrialRecord,
};
use egocal::solver::REPORT_SCHEMA_VERSION;
use egocal::ConstraintKind;
use serde::Serialize;

use crate::{create, write_json, SolverArgs};

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(subcommand)]
    kind: Kind,
}

#[derive(Debug, Args)]
struct Common {
    /// Output directory for `trials.csv` and `summary.json`; created if missing.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for independent trials; all cores when omitted.
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Subcommand)]
enum Kind {
    /// Certified share of each constraint set under perturbed measurements.
    #[command(allow_negative_numbers = true)]
    Ablation {
        #[command(flatten)]
        common: Common,
        /// Rotation perturbation magnitudes, in radians.
        #[arg(long, value_delimiter = ',')]
        magnitudes: Option<Vec<f64>>,
        /// Perturbation axes per rotation magnitude.
        #[arg(long, default_value_t = 100)]
        n_axes: usize,
        /// Translation perturbations added to a pi/2 rotation perturbation, in meters.
        #[arg(long, value_delimiter = ',', conflicts_with = "rotation_only")]
        translations: Option<Vec<f64>>,
        /// Skip the translation-perturbed trials.
        #[arg(long)]
        rotation_only: bool,
        /// Constraint sets to compare.
        #[arg(long, value_delimiter = ',', default_value = "r,r+c,r+h,r+c+h")]
        sets: Vec<ConstraintKind>,
    },
    /// Convex and local estimation errors over a grid of noise levels.
    #[command(allow_negative_numbers = true)]
    NoiseSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1")]
        sigma_r: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1")]
        sigma_t: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 100)]
        n_motions: usize,
    },
    /// Local solver error against its initial guess, relative to the convex estimate.
    #[command(allow_negative_numbers = true)]
    Heatmap {
        #[command(flatten)]
        common: Common,
        /// Rotation offsets of the initial guesses, in radians.
        #[arg(long, value_delimiter = ',')]
        angles: Option<Vec<f64>>,
        /// Translation offsets of the initial guesses, in meters.
        #[arg(long, value_delimiter = ',')]
        distances: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.01)]
        sigma_r: f64,
        #[arg(long, default_value_t = 0.01)]
        sigma_t: f64,
        #[arg(long, default_value_t = 100)]
        n_motions: usize,
    },
    /// Solver wall time against the number of measurements.
    #[command(allow_negative_numbers = true)]
    Runtime {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long, default_value_t = 0.01)]
        sigma_r: f64,
        #[arg(long, default_value_t = 0.01)]
        sigma_t: f64,
    },
}

#[derive(Serialize)]
struct Summary<'a, C, R> {
    schema_version: u32,
    experiment: &'a str,
    config: &'a C,
    report: &'a R,
}

fn finite_non_negative(name: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        bail!("--{name} needs at least one value");
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        bail!("--{name} values must be finite and non-negative, got {v}");
    }
    Ok(())
}

fn save<C: Serialize, R: Serialize>(common: &Common, name: &str, config: &C, report: &R, records: &[TrialRecord]) -> Result<()> {
    let dir = &common.output;
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut w = create(&dir.join("trials.csv"))?;
    write_trials_csv(&mut w, records)?;
    w.flush()?;
    let summary = Summary {
        schema_version: REPORT_SCHEMA_VERSION,
        experiment: name,
        config,
        report,
    };
    write_json(Some(&dir.join("summary.json")), &summary)?;
    eprintln!("{name}: {} trials written to {}", records.len(), dir.display());
    Ok(())
}

pub fn run(args: &ExperimentArgs) -> Result<()> {
    if let Some(0) = common(&args.kind).jobs {
        bail!("--jobs must be at least 1");
    }
    match &args.kind {
        Kind::Ablation {
            common,
            magnitudes,
            n_axes,
            translations,
            rotation_only,
            sets,
        } => {
            let mut cfg = AblationConfig {
                n_axes: *n_axes,
                constraint_sets: sets.clone(),
                options: common.solver.options(),
                ..AblationConfig::default()
            };
            if let Some(m) = magnitudes {
                finite_non_negative("magnitudes", m)?;
                cfg.rotation_magnitudes = m.clone();
            }
            if let Some(t) = translations {
                finite_non_negative("translations", t)?;
                cfg.translation_magnitudes = t.clone();
            }
            if *rotation_only {
                cfg.translation_magnitudes.clear();
            }
            if cfg.n_axes == 0 {
                bail!("--n-axes must be at least 1");
            }
            let report = ablation_experiment(&cfg, common.jobs);
            save(common, "ablation", &cfg, &report, &report.records)
        }
        Kind::NoiseSweep {
            common,
            sigma_r,
            sigma_t,
            trials,
            n_motions,
        } => {
            finite_non_negative("sigma-r", sigma_r)?;
            finite_non_negative("sigma-t", sigma_t)?;
            let cfg = SweepConfig {
                sigma_r: sigma_r.clone(),
                sigma_t: sigma_t.clone(),
                n_trials: *trials,
                n_motions: *n_motions,
                seed: common.seed,
                options: common.solver.options(),
                ..SweepConfig::default()
            };
            let report = noise_sweep(&cfg, common.jobs)?;
            save(common, "noise-sweep", &cfg, &report, &report.records)
        }
        Kind::Heatmap {
            common,
            angles,
            distances,
            sigma_r,
            sigma_t,
            n_motions,
        } => {
            let mut cfg = HeatmapConfig {
                sigma_r: *sigma_r,
                sigma_t: *sigma_t,
                n_motions: *n_motions,
                seed: common.seed,
                options: common.solver.options(),
                ..HeatmapConfig::default()
            };
            if let Some(a) = angles {
                finite_non_negative("angles", a)?;
                cfg.angles = a.clone();
            }
            if let Some(d) = distances {
                finite_non_negative("distances", d)?;
                cfg.distances = d.clone();
            }
            let report = init_heatmap(&cfg, common.jobs)?;
            save(common, "heatmap", &cfg, &report, &report.records)
        }
        Kind::Runtime {
            common,
            n_list,
            runs,
            sigma_r,
            sigma_t,
        } => {
            if n_list.iter().any(|&n| n < 2) {
                bail!("--n-list values must be at least 2");
            }
            let cfg = RuntimeConfig {
                n_list: n_list.clone(),
                runs: *runs,
                sigma_r: *sigma_r,
                sigma_t: *sigma_t,
                seed: common.seed,
                options: common.solver.options(),
                ..RuntimeConfig::default()
            };
            let report = runtime_bench(&cfg)?;
            save(common, "runtime", &cfg, &report, &report.records)
        }
    }
}

fn common(kind: &Kind) -> &Common {
    match kind {
        Kind::Ablation { common, .. }
        | Kind::NoiseSweep { common, .. }
        | Kind::Heatmap { common, .. }
        | Kind::Runtime { common, .. } => common,
    }
}
