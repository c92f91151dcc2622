use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::time::Instant;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::report::{Method, TrialRecord};
use super::{corrupt_with, generate_path, simulate_measurements, NoiseModel, PathParams};
use crate::error::Result;
use crate::geom::{
    exp_so3, fibonacci_sphere, random_rotation_with, rotation_from_axis_angle, AxisAngle, Extrinsic,
    Transform,
};
use crate::par::{map_trials, trial_rng};
use crate::problem::{MeasurementSet, RelativeMotionPair};
use crate::qcqp::ConstraintKind;
use crate::solver::{calibrate, estimate_errors, local_estimate, CalibrateOptions, CalibrationResult, LocalOptions};

/// Rotation angle of the default extrinsic of the two-motion instance, about `(1, 1, 1) / sqrt(3)`.
pub const DEFAULT_ABLATION_THETA_ANGLE: f64 = FRAC_PI_4;
pub const DEFAULT_ABLATION_TRANSLATION: [f64; 3] = [0.1, 0.2, 0.3];

/// Random extrinsic: uniform rotation, translation uniform in `[-1, 1]^3` m.
pub fn random_extrinsic<R: Rng + ?Sized>(rng: &mut R) -> Extrinsic {
    let rotation = random_rotation_with(rng);
    let t = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    Transform::new(rotation, t)
}

fn default_ablation_theta() -> Extrinsic {
    let axis = Vector3::new(1.0, 1.0, 1.0);
    Transform::new(
        rotation_from_axis_angle(&AxisAngle::new(axis, DEFAULT_ABLATION_THETA_ANGLE)),
        Vector3::from(DEFAULT_ABLATION_TRANSLATION),
    )
}

/// The minimal observable instance: a quarter turn with 1 m of travel along
/// the vehicle x axis, then the same about and along y.
pub fn ablation_instance(theta: &Extrinsic) -> MeasurementSet {
    [Vector3::x(), Vector3::y()]
        .into_iter()
        .map(|axis| {
            let v_b = Transform::new(rotation_from_axis_angle(&AxisAngle::new(axis, FRAC_PI_2)), axis);
            let v_a = theta.inverse().compose(&v_b).compose(theta);
            RelativeMotionPair::new(v_a, v_b)
        })
        .collect()
}

/// Runs `calibrate`, timing it, and reports whether it certified.
fn run_convex(m: &MeasurementSet, opts: &CalibrateOptions) -> (Option<CalibrationResult>, f64) {
    let start = Instant::now();
    let r = calibrate(m, opts).ok();
    (r, start.elapsed().as_secs_f64())
}

fn fill_from(record: &mut TrialRecord, result: Option<&CalibrationResult>, truth: &Extrinsic) {
    if let Some(r) = result {
        let (er, et) = estimate_errors(&r.extrinsic, truth);
        record.rotation_error = er;
        record.translation_error = et;
        record.cost = r.cost;
        record.certified = r.certificate.is_certified();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub rotation_magnitudes: Vec<f64>,
    /// Perturbation axes per rotation magnitude.
    pub n_axes: usize,
    /// Translation perturbations applied on top of a `pi / 2` rotation perturbation.
    pub translation_magnitudes: Vec<f64>,
    pub n_translation_rotation_axes: usize,
    pub n_translation_directions: usize,
    pub constraint_sets: Vec<ConstraintKind>,
    pub theta: Extrinsic,
    pub options: CalibrateOptions,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            rotation_magnitudes: (1..=8).map(|k| k as f64 * PI / 16.0).collect(),
            n_axes: 100,
            translation_magnitudes: vec![0.1, 1.0, 10.0],
            n_translation_rotation_axes: 16,
            n_translation_directions: 16,
            constraint_sets: ConstraintKind::ALL.to_vec(),
            theta: default_ablation_theta(),
            options: CalibrateOptions::default(),
        }
    }
}

/// Certified share of one (constraint set, perturbation) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub constraint_set: ConstraintKind,
    pub rotation_magnitude: f64,
    /// `None` for the rotation-only variant.
    pub translation_magnitude: Option<f64>,
    pub trials: usize,
    pub certified: usize,
    pub percent_certified: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub theta: Extrinsic,
    pub rotation_rows: Vec<AblationRow>,
    pub translation_rows: Vec<AblationRow>,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

impl AblationReport {
    /// Certified percentage for a set at a rotation magnitude (rotation variant).
    pub fn rotation_percent(&self, set: ConstraintKind, magnitude: f64) -> Option<f64> {
        self.rotation_rows
            .iter()
            .find(|r| r.constraint_set == set && r.rotation_magnitude == magnitude)
            .map(|r| r.percent_certified)
    }

    /// Certified percentage for a set at a translation magnitude.
    pub fn translation_percent(&self, set: ConstraintKind, magnitude: f64) -> Option<f64> {
        self.translation_rows
            .iter()
            .find(|r| r.constraint_set == set && r.translation_magnitude == Some(magnitude))
            .map(|r| r.percent_certified)
    }
}

struct AblationTrial {
    set: ConstraintKind,
    rotation: Vector3<f64>,
    translation: Option<Vector3<f64>>,
    group: usize,
}

/// Certified percentage of each constraint set when one rotation (and
/// optionally one translation) measurement of the two-motion instance is
/// perturbed.
pub fn ablation_experiment(cfg: &AblationConfig, jobs: Option<usize>) -> AblationReport {
    let base = ablation_instance(&cfg.theta);
    let axes = fibonacci_sphere(cfg.n_axes);
    let t_axes = fibonacci_sphere(cfg.n_translation_rotation_axes);
    let t_dirs = fibonacci_sphere(cfg.n_translation_directions);

    let mut groups: Vec<AblationRow> = Vec::new();
    let mut trials: Vec<AblationTrial> = Vec::new();
    for &set in &cfg.constraint_sets {
        for &mag in &cfg.rotation_magnitudes {
            let group = groups.len();
            groups.push(AblationRow {
                constraint_set: set,
                rotation_magnitude: mag,
                translation_magnitude: None,
                trials: 0,
                certified: 0,
                percent_certified: 0.0,
            });
            trials.extend(axes.iter().map(|a| AblationTrial {
                set,
                rotation: a * mag,
                translation: None,
                group,
            }));
        }
        for &tmag in &cfg.translation_magnitudes {
            let group = groups.len();
            groups.push(AblationRow {
                constraint_set: set,
                rotation_magnitude: FRAC_PI_2,
                translation_magnitude: Some(tmag),
                trials: 0,
                certified: 0,
                percent_certified: 0.0,
            });
            for a in &t_axes {
                trials.extend(t_dirs.iter().map(|d| AblationTrial {
                    set,
                    rotation: a * FRAC_PI_2,
                    translation: Some(d * tmag),
                    group,
                }));
            }
        }
    }

    let records = map_trials(trials.len(), jobs, |i| {
        let trial = &trials[i];
        let mut m = base.clone();
        let first = &mut m.pairs[0];
        let v_b = first.v_b;
        first.v_b = Transform::new(
            exp_so3(&trial.rotation).compose(&v_b.rotation),
            v_b.translation + trial.translation.unwrap_or_else(Vector3::zeros),
        );
        let mut opts = cfg.options;
        opts.constraint_set = trial.set;
        let (result, elapsed) = run_convex(&m, &opts);
        let mut rec = TrialRecord::new("ablation", i, 0, m.len(), Method::Convex);
        rec.constraint_set = Some(trial.set);
        rec.rotation_perturbation = Some(trial.rotation.norm());
        rec.translation_perturbation = trial.translation.map(|t| t.norm());
        rec.wall_time_seconds = elapsed;
        fill_from(&mut rec, result.as_ref(), &cfg.theta);
        rec
    });

    for (trial, rec) in trials.iter().zip(&records) {
        let g = &mut groups[trial.group];
        g.trials += 1;
        g.certified += rec.certified as usize;
    }
    for g in &mut groups {
        g.percent_certified = if g.trials == 0 { 0.0 } else { 100.0 * g.certified as f64 / g.trials as f64 };
    }
    let (translation_rows, rotation_rows) = groups.into_iter().partition(|g| g.translation_magnitude.is_some());
    AblationReport {
        theta: cfg.theta,
        rotation_rows,
        translation_rows,
        records,
    }
}

/// Order statistics of a sample, ignoring NaNs (linear interpolation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl Quantiles {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            if v.is_empty() {
                return f64::NAN;
            }
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Self {
            count: v.len(),
            min: q(0.0),
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: q(1.0),
            mean: if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub sigma_r: Vec<f64>,
    pub sigma_t: Vec<f64>,
    pub n_trials: usize,
    pub n_motions: usize,
    pub seed: u64,
    pub options: CalibrateOptions,
    pub local: LocalOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sigma_r: vec![0.01, 0.05, 0.1],
            sigma_t: vec![0.01, 0.05, 0.1],
            n_trials: 100,
            n_motions: 100,
            seed: 0,
            options: CalibrateOptions::default(),
            local: LocalOptions::default(),
        }
    }
}

/// Per-method error statistics of one noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub sigma_r: f64,
    pub sigma_t: f64,
    pub trials: usize,
    pub certified: usize,
    pub convex_rotation_error: Quantiles,
    pub convex_translation_error: Quantiles,
    pub local_rotation_error: Quantiles,
    pub local_translation_error: Quantiles,
    /// Trials where the convex cost exceeds the local cost by more than `1e-9`.
    pub dominance_violations: usize,
    /// Largest `convex cost - local cost` over the trials.
    pub max_cost_excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub seed: u64,
    pub n_motions: usize,
    pub cells: Vec<SweepCell>,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

/// One noisy random instance: path, extrinsic and corrupted measurements.
fn noisy_instance(seed: u64, index: u64, n_motions: usize, sigma_r: f64, sigma_t: f64) -> Result<(MeasurementSet, Extrinsic, u64)> {
    let mut rng = trial_rng(seed, index);
    let path_seed: u64 = rng.random();
    let theta = random_extrinsic(&mut rng);
    let path = generate_path(&PathParams::with_motions(n_motions, path_seed))?;
    let clean = simulate_measurements(&path, &theta)?;
    let noise = NoiseModel::new(sigma_r, sigma_t, path_seed)?;
    Ok((corrupt_with(&clean, &noise, &mut rng), theta, path_seed))
}

/// Convex and local solves on fresh noisy instances at each noise level.
/// The local solver starts from the identity extrinsic.
pub fn noise_sweep(cfg: &SweepConfig, jobs: Option<usize>) -> Result<SweepReport> {
    let levels: Vec<(f64, f64)> = cfg
        .sigma_t
        .iter()
        .flat_map(|&st| cfg.sigma_r.iter().map(move |&sr| (sr, st)))
        .collect();
    for &(sr, st) in &levels {
        NoiseModel::new(sr, st, 0)?;
    }
    let total = levels.len() * cfg.n_trials;
    let pairs = map_trials(total, jobs, |i| {
        let (sr, st) = levels[i / cfg.n_trials];
        let mut convex = TrialRecord::new("noise-sweep", i, cfg.seed, cfg.n_motions, Method::Convex);
        let mut local = TrialRecord::new("noise-sweep", i, cfg.seed, cfg.n_motions, Method::Local);
        for r in [&mut convex, &mut local] {
            r.sigma_r = sr;
            r.sigma_t = st;
        }
        convex.constraint_set = Some(cfg.options.constraint_set);
        let Ok((m, theta, _)) = noisy_instance(cfg.seed, i as u64, cfg.n_motions, sr, st) else {
            return (convex, local);
        };
        let (result, _) = run_convex(&m, &cfg.options);
        if let Some(r) = &result {
            convex.wall_time_seconds = r.solve_stats.solver_time_seconds;
        }
        fill_from(&mut convex, result.as_ref(), &theta);
        if let Ok(l) = local_estimate(&m, &Transform::identity(), &cfg.local) {
            local.wall_time_seconds = l.solve_stats.solver_time_seconds;
            fill_from(&mut local, Some(&l), &theta);
        }
        (convex, local)
    });

    let cells = levels
        .iter()
        .enumerate()
        .map(|(c, &(sr, st))| {
            let chunk = &pairs[c * cfg.n_trials..(c + 1) * cfg.n_trials];
            let excess: Vec<f64> = chunk.iter().map(|(cv, lc)| cv.cost - lc.cost).collect();
            SweepCell {
                sigma_r: sr,
                sigma_t: st,
                trials: chunk.len(),
                certified: chunk.iter().filter(|(cv, _)| cv.certified).count(),
                convex_rotation_error: Quantiles::of(chunk.iter().map(|(cv, _)| cv.rotation_error)),
                convex_translation_error: Quantiles::of(chunk.iter().map(|(cv, _)| cv.translation_error)),
                local_rotation_error: Quantiles::of(chunk.iter().map(|(_, lc)| lc.rotation_error)),
                local_translation_error: Quantiles::of(chunk.iter().map(|(_, lc)| lc.translation_error)),
                dominance_violations: excess.iter().filter(|&&e| !(e <= 1e-9)).count(),
                max_cost_excess: excess.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    let records = pairs.into_iter().flat_map(|(a, b)| [a, b]).collect();
    Ok(SweepReport {
        seed: cfg.seed,
        n_motions: cfg.n_motions,
        cells,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapConfig {
    /// Rotation angles of the initial guess away from the truth, in radians.
    pub angles: Vec<f64>,
    /// Translation offsets of the initial guess from the truth, in meters.
    pub distances: Vec<f64>,
    pub n_rotation_axes: usize,
    pub n_translation_directions: usize,
    pub n_motions: usize,
    pub sigma_r: f64,
    pub sigma_t: f64,
    pub seed: u64,
    pub options: CalibrateOptions,
    pub local: LocalOptions,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self {
            angles: (0..=8).map(|k| k as f64 * PI / 8.0).collect(),
            distances: vec![0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0],
            n_rotation_axes: 8,
            n_translation_directions: 8,
            n_motions: 100,
            sigma_r: 0.01,
            sigma_t: 0.01,
            seed: 0,
            options: CalibrateOptions::default(),
            local: LocalOptions::default(),
        }
    }
}

/// Worst excess error of the local solver over the convex one among the
/// initial guesses at one (angle, distance) offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub angle: f64,
    pub distance: f64,
    pub max_rotation_difference: f64,
    pub max_translation_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapReport {
    pub seed: u64,
    pub convex_rotation_error: f64,
    pub convex_translation_error: f64,
    pub convex_certified: bool,
    pub cells: Vec<HeatmapCell>,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

/// Local solves from initial guesses at fixed offsets from the truth on one
/// noisy instance, compared against the convex estimate.
pub fn init_heatmap(cfg: &HeatmapConfig, jobs: Option<usize>) -> Result<HeatmapReport> {
    let (m, theta, _) = noisy_instance(cfg.seed, 0, cfg.n_motions, cfg.sigma_r, cfg.sigma_t)?;
    let (convex, elapsed) = run_convex(&m, &cfg.options);
    let convex = match convex {
        Some(c) => c,
        None => calibrate(&m, &cfg.options)?,
    };
    let (cr, ct) = estimate_errors(&convex.extrinsic, &theta);

    let axes = fibonacci_sphere(cfg.n_rotation_axes);
    let dirs = fibonacci_sphere(cfg.n_translation_directions);
    let per_cell = axes.len() * dirs.len();
    let cells: Vec<(f64, f64)> = cfg
        .distances
        .iter()
        .flat_map(|&d| cfg.angles.iter().map(move |&a| (a, d)))
        .collect();
    let records = map_trials(cells.len() * per_cell, jobs, |i| {
        let (angle, distance) = cells[i / per_cell];
        let k = i % per_cell;
        let (axis, dir) = (axes[k / dirs.len()], dirs[k % dirs.len()]);
        let init = Transform::new(
            exp_so3(&(axis * angle)).compose(&theta.rotation),
            theta.translation + dir * distance,
        );
        let mut rec = TrialRecord::new("heatmap", i, cfg.seed, m.len(), Method::Local);
        rec.sigma_r = cfg.sigma_r;
        rec.sigma_t = cfg.sigma_t;
        rec.init_angle = Some(angle);
        rec.init_distance = Some(distance);
        if let Ok(l) = local_estimate(&m, &init, &cfg.local) {
            rec.wall_time_seconds = l.solve_stats.solver_time_seconds;
            fill_from(&mut rec, Some(&l), &theta);
        }
        rec
    });

    let cells = cells
        .iter()
        .enumerate()
        .map(|(c, &(angle, distance))| {
            let chunk = &records[c * per_cell..(c + 1) * per_cell];
            let worst = |f: fn(&TrialRecord) -> f64, base: f64| {
                chunk.iter().map(|r| f(r) - base).fold(f64::NEG_INFINITY, |a, b| if b.is_nan() { f64::INFINITY } else { a.max(b) })
            };
            HeatmapCell {
                angle,
                distance,
                max_rotation_difference: worst(|r| r.rotation_error, cr),
                max_translation_difference: worst(|r| r.translation_error, ct),
            }
        })
        .collect();

    let mut convex_rec = TrialRecord::new("heatmap", records.len(), cfg.seed, m.len(), Method::Convex);
    convex_rec.sigma_r = cfg.sigma_r;
    convex_rec.sigma_t = cfg.sigma_t;
    convex_rec.constraint_set = Some(cfg.options.constraint_set);
    convex_rec.wall_time_seconds = elapsed;
    fill_from(&mut convex_rec, Some(&convex), &theta);
    let mut records = records;
    records.push(convex_rec);

    Ok(HeatmapReport {
        seed: cfg.seed,
        convex_rotation_error: cr,
        convex_translation_error: ct,
        convex_certified: convex.certificate.is_certified(),
        cells,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeConfig {
    pub n_list: Vec<usize>,
    pub runs: usize,
    pub sigma_r: f64,
    pub sigma_t: f64,
    pub seed: u64,
    pub options: CalibrateOptions,
    pub local: LocalOptions,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            n_list: vec![10, 100, 1000],
            runs: 20,
            sigma_r: 0.01,
            sigma_t: 0.01,
            seed: 0,
            options: CalibrateOptions::default(),
            local: LocalOptions::default(),
        }
    }
}

/// Solver-only wall time statistics at one measurement count, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimePoint {
    pub n: usize,
    pub convex: Quantiles,
    pub local: Quantiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeReport {
    pub seed: u64,
    pub points: Vec<RuntimePoint>,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

/// Solver wall time against the number of measurements. Runs sequentially
/// so that timings are not skewed by contention.
pub fn runtime_bench(cfg: &RuntimeConfig) -> Result<RuntimeReport> {
    let mut records = Vec::new();
    let mut points = Vec::new();
    let mut index = 0u64;
    for &n in &cfg.n_list {
        let (mut convex_t, mut local_t) = (Vec::new(), Vec::new());
        for _ in 0..cfg.runs {
            let (m, theta, _) = noisy_instance(cfg.seed, index, n, cfg.sigma_r, cfg.sigma_t)?;
            let mut convex = TrialRecord::new("runtime", index as usize, cfg.seed, n, Method::Convex);
            let mut local = TrialRecord::new("runtime", index as usize, cfg.seed, n, Method::Local);
            for r in [&mut convex, &mut local] {
                r.sigma_r = cfg.sigma_r;
                r.sigma_t = cfg.sigma_t;
            }
            convex.constraint_set = Some(cfg.options.constraint_set);
            let c = calibrate(&m, &cfg.options)?;
            convex.wall_time_seconds = c.solve_stats.solver_time_seconds;
            fill_from(&mut convex, Some(&c), &theta);
            let l = local_estimate(&m, &Transform::identity(), &cfg.local)?;
            local.wall_time_seconds = l.solve_stats.solver_time_seconds;
            fill_from(&mut local, Some(&l), &theta);
            convex_t.push(convex.wall_time_seconds);
            local_t.push(local.wall_time_seconds);
            records.push(convex);
            records.push(local);
            index += 1;
        }
        points.push(RuntimePoint {
            n,
            convex: Quantiles::of(convex_t),
            local: Quantiles::of(local_t),
        });
    }
    Ok(RuntimeReport {
        seed: cfg.seed,
        points,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::rotation_distance;

    #[test]
    fn quantiles_interpolate() {
        let q = Quantiles::of([4.0, 1.0, 3.0, 2.0, f64::NAN]);
        assert_eq!(q.count, 4);
        assert_eq!(q.min, 1.0);
        assert_eq!(q.max, 4.0);
        assert!((q.median - 2.5).abs() < 1e-15);
        assert!((q.q1 - 1.75).abs() < 1e-15);
        assert!((q.mean - 2.5).abs() < 1e-15);
        assert!(Quantiles::of([]).median.is_nan());
    }

    #[test]
    fn ablation_instance_is_exact() {
        let theta = default_ablation_theta();
        for p in ablation_instance(&theta).iter() {
            let d = theta.compose(&p.v_a);
            let e = p.v_b.compose(&theta);
            assert!(rotation_distance(&d.rotation, &e.rotation) < 1e-12);
            assert!((d.translation - e.translation).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_magnitude_ablation_certifies_everything() {
        let cfg = AblationConfig {
            rotation_magnitudes: vec![0.0],
            n_axes: 5,
            translation_magnitudes: vec![],
            ..AblationConfig::default()
        };
        let report = ablation_experiment(&cfg, Some(1));
        assert_eq!(report.rotation_rows.len(), 4);
        for row in &report.rotation_rows {
            assert_eq!(row.percent_certified, 100.0, "{:?}", row.constraint_set);
        }
    }

    #[test]
    fn noiseless_sweep_is_exact_for_both_solvers() {
        let cfg = SweepConfig {
            sigma_r: vec![0.0],
            sigma_t: vec![0.0],
            n_trials: 4,
            n_motions: 20,
            seed: 5,
            ..SweepConfig::default()
        };
        let report = noise_sweep(&cfg, None).unwrap();
        let cell = &report.cells[0];
        assert_eq!(cell.certified, 4);
        assert!(cell.convex_rotation_error.max < 1e-6);
        assert!(cell.convex_translation_error.max < 1e-6);
        assert!(cell.local_rotation_error.max < 1e-6, "{:?}", cell.local_rotation_error);
        assert!(cell.local_translation_error.max < 1e-6);
    }

    #[test]
    fn heatmap_origin_cell_matches_convex() {
        let cfg = HeatmapConfig {
            angles: vec![0.0],
            distances: vec![0.0],
            n_rotation_axes: 2,
            n_translation_directions: 2,
            n_motions: 30,
            ..HeatmapConfig::default()
        };
        let report = init_heatmap(&cfg, None).unwrap();
        let cell = report.cells[0];
        assert!(cell.max_rotation_difference <= 1e-6);
        assert!(cell.max_translation_difference <= 1e-6);
        assert_eq!(report.records.len(), 5);
    }

    #[test]
    fn sweep_is_independent_of_jobs() {
        let cfg = SweepConfig {
            sigma_r: vec![0.05],
            sigma_t: vec![0.05],
            n_trials: 6,
            n_motions: 15,
            seed: 8,
            ..SweepConfig::default()
        };
        let strip = |mut r: SweepReport| {
            for rec in &mut r.records {
                rec.wall_time_seconds = 0.0;
            }
            r
        };
        let a = strip(noise_sweep(&cfg, Some(1)).unwrap());
        let b = strip(noise_sweep(&cfg, Some(4)).unwrap());
        assert_eq!(a.records, b.records);
        assert_eq!(a.cells, b.cells);
    }
}
