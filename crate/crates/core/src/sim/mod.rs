//! Synthetic terrain paths, sensor trajectories, measurement noise and the
//! experiment protocols built on them.

mod experiments;
mod report;

use std::f64::consts::{FRAC_PI_4, TAU};

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::geom::{rotation_from_axis_angle, rotation_from_euler_xyz, AxisAngle, Extrinsic, Transform};
use crate::par::trial_rng;
use crate::problem::{relative_motions_from_trajectories, MeasurementSet, RelativeMotionPair};

pub use experiments::{
    ablation_experiment, ablation_instance, init_heatmap, noise_sweep, random_extrinsic, runtime_bench, AblationConfig,
    AblationReport, AblationRow, HeatmapCell, HeatmapConfig, HeatmapReport, Quantiles, RuntimeConfig, RuntimePoint,
    RuntimeReport, SweepCell, SweepConfig, SweepReport, DEFAULT_ABLATION_THETA_ANGLE, DEFAULT_ABLATION_TRANSLATION,
};
pub use report::{write_trials_csv, Method, TrialRecord};

/// Parameters of a random terrain path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    /// Radius of the circle traced in the x-y plane, in meters.
    pub radius: f64,
    /// Number of waypoints; the path yields `n_steps - 1` relative motions.
    pub n_steps: usize,
    /// Scale of the terrain height; zero gives a flat plane.
    pub amplitude: f64,
    pub n_sinusoids: usize,
    pub seed: u64,
}

impl Default for PathParams {
    fn default() -> Self {
        Self {
            radius: 10.0,
            n_steps: 101,
            amplitude: 1.0,
            n_sinusoids: 3,
            seed: 0,
        }
    }
}

impl PathParams {
    pub fn with_motions(n_motions: usize, seed: u64) -> Self {
        Self {
            n_steps: n_motions + 1,
            seed,
            ..Self::default()
        }
    }
}

/// One term `amplitude * sin(freq_x * x + freq_y * y + phase)` of the terrain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub freq_x: f64,
    pub freq_y: f64,
    pub phase: f64,
}

/// Vehicle poses along a closed route over sinusoidal terrain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainPath {
    pub waypoints: Vec<Transform>,
    pub params: PathParams,
    pub terrain: Vec<Sinusoid>,
}

impl TerrainPath {
    /// Terrain height at `(x, y)`.
    pub fn height(&self, x: f64, y: f64) -> f64 {
        terrain_height(&self.terrain, x, y)
    }
}

fn terrain_height(terrain: &[Sinusoid], x: f64, y: f64) -> f64 {
    terrain
        .iter()
        .map(|s| s.amplitude * (s.freq_x * x + s.freq_y * y + s.phase).sin())
        .sum()
}

fn terrain_gradient(terrain: &[Sinusoid], x: f64, y: f64) -> (f64, f64) {
    terrain.iter().fold((0.0, 0.0), |(gx, gy), s| {
        let c = s.amplitude * (s.freq_x * x + s.freq_y * y + s.phase).cos();
        (gx + c * s.freq_x, gy + c * s.freq_y)
    })
}

/// Traces a circle of `params.radius` over random sinusoidal terrain.
///
/// The vehicle's x axis follows the direction of travel, pitched to the
/// terrain slope; there is no roll. Each step covers `2 pi / (n_steps - 1)`
/// of the circle, capped at `pi / 4` so short paths stay smooth.
pub fn generate_path(params: &PathParams) -> Result<TerrainPath> {
    if params.n_steps < 3 {
        return Err(CalibError::InvalidParameter(format!("n_steps must be at least 3, got {}", params.n_steps)));
    }
    if !(params.radius > 0.0) || !params.radius.is_finite() {
        return Err(CalibError::InvalidParameter(format!("radius must be positive, got {}", params.radius)));
    }
    if !(params.amplitude >= 0.0) || !params.amplitude.is_finite() {
        return Err(CalibError::InvalidParameter(format!("amplitude must be non-negative, got {}", params.amplitude)));
    }
    let mut rng = trial_rng(params.seed, 0);
    let terrain: Vec<Sinusoid> = (0..params.n_sinusoids)
        .map(|_| Sinusoid {
            amplitude: params.amplitude * rng.random_range(0.5..1.5),
            freq_x: rng.random_range(-0.6..0.6),
            freq_y: rng.random_range(-0.6..0.6),
            phase: rng.random_range(0.0..TAU),
        })
        .collect();

    let step = (TAU / (params.n_steps - 1) as f64).min(FRAC_PI_4);
    let waypoints = (0..params.n_steps)
        .map(|k| {
            let phi = step * k as f64;
            let (x, y) = (params.radius * phi.cos(), params.radius * phi.sin());
            let z = terrain_height(&terrain, x, y);
            // unit tangent of the circle and the height change along it
            let (dx, dy) = (-phi.sin(), phi.cos());
            let (gx, gy) = terrain_gradient(&terrain, x, y);
            let slope = gx * dx + gy * dy;
            let yaw = rotation_from_axis_angle(&AxisAngle::new(Vector3::z(), phi + std::f64::consts::FRAC_PI_2));
            let pitch = rotation_from_axis_angle(&AxisAngle::new(Vector3::y(), -slope.atan()));
            Transform::new(yaw.compose(&pitch), Vector3::new(x, y, z))
        })
        .collect();
    Ok(TerrainPath {
        waypoints,
        params: *params,
        terrain,
    })
}

/// World poses of both sensors for a vehicle following `path`: sensor `b`
/// sits at the vehicle frame and sensor `a` at `b * theta`.
pub fn sensor_trajectories(path: &TerrainPath, theta: &Extrinsic) -> (Vec<Transform>, Vec<Transform>) {
    let poses_b = path.waypoints.clone();
    let poses_a = poses_b.iter().map(|p| p.compose(theta)).collect();
    (poses_a, poses_b)
}

/// Noise-free relative motions of both sensors along `path`.
pub fn simulate_measurements(path: &TerrainPath, theta: &Extrinsic) -> Result<MeasurementSet> {
    let (a, b) = sensor_trajectories(path, theta);
    relative_motions_from_trajectories(&a, &b)
}

/// Zero-mean Gaussian noise on Euler angles and translations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Standard deviation of each Euler angle, in radians.
    pub sigma_r: f64,
    /// Standard deviation of each translation component, in meters.
    pub sigma_t: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(sigma_r: f64, sigma_t: f64, seed: u64) -> Result<Self> {
        for (name, v) in [("sigma_r", sigma_r), ("sigma_t", sigma_t)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(CalibError::InvalidParameter(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(Self { sigma_r, sigma_t, seed })
    }

    pub fn noiseless() -> Self {
        Self {
            sigma_r: 0.0,
            sigma_t: 0.0,
            seed: 0,
        }
    }
}

/// Corrupts every motion of both sensors: the rotation is right-multiplied
/// by an intrinsic X-Y-Z Euler rotation with `N(0, sigma_r^2)` angles and
/// the translation gets `N(0, sigma_t^2 I)` added.
pub fn corrupt(m: &MeasurementSet, noise: &NoiseModel) -> MeasurementSet {
    corrupt_with(m, noise, &mut trial_rng(noise.seed, 0))
}

/// [`corrupt`] drawing from a caller-supplied stream.
pub fn corrupt_with<R: Rng + ?Sized>(m: &MeasurementSet, noise: &NoiseModel, rng: &mut R) -> MeasurementSet {
    let rot = Normal::new(0.0, noise.sigma_r).expect("validated standard deviation");
    let trans = Normal::new(0.0, noise.sigma_t).expect("validated standard deviation");
    let mut perturb = |v: &Transform| {
        let e = rotation_from_euler_xyz(rot.sample(rng), rot.sample(rng), rot.sample(rng));
        let dt = Vector3::new(trans.sample(rng), trans.sample(rng), trans.sample(rng));
        Transform::new(v.rotation.compose(&e), v.translation + dt)
    };
    m.iter()
        .map(|p| {
            let v_a = perturb(&p.v_a);
            let v_b = perturb(&p.v_b);
            RelativeMotionPair::new(v_a, v_b).with_weights(p.kappa, p.tau)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{random_rotation, rotation_distance};
    use crate::problem::check_observability_default;
    use crate::qcqp::assemble;

    fn theta() -> Extrinsic {
        Transform::new(random_rotation(3), Vector3::new(0.3, -0.2, 0.5))
    }

    #[test]
    fn path_is_deterministic_and_smooth() {
        let p = PathParams::with_motions(40, 9);
        let a = generate_path(&p).unwrap();
        assert_eq!(a, generate_path(&p).unwrap());
        assert_eq!(a.waypoints.len(), 41);
        for w in a.waypoints.windows(2) {
            assert!(w[0].rotation.angle_to(&w[1].rotation) < std::f64::consts::FRAC_PI_2);
        }
        let short = generate_path(&PathParams::with_motions(2, 9)).unwrap();
        for w in short.waypoints.windows(2) {
            assert!(w[0].rotation.angle_to(&w[1].rotation) < std::f64::consts::FRAC_PI_2);
        }
    }

    #[test]
    fn waypoints_lie_on_the_terrain() {
        let path = generate_path(&PathParams::default()).unwrap();
        for w in &path.waypoints {
            let p = w.translation;
            assert!((p.z - path.height(p.x, p.y)).abs() < 1e-12);
            assert!(((p.x * p.x + p.y * p.y).sqrt() - 10.0).abs() < 1e-9);
        }
    }

    #[test]
    fn bad_path_parameters_are_rejected() {
        let mut p = PathParams {
            n_steps: 2,
            ..PathParams::default()
        };
        assert!(generate_path(&p).is_err());
        p = PathParams::default();
        p.radius = 0.0;
        assert!(generate_path(&p).is_err());
    }

    #[test]
    fn flat_terrain_is_unobservable() {
        let mut p = PathParams::with_motions(30, 1);
        p.amplitude = 0.0;
        let m = simulate_measurements(&generate_path(&p).unwrap(), &theta()).unwrap();
        assert!(!check_observability_default(&m).observable);
        assert!(matches!(assemble(&m), Err(CalibError::SingularQtt(_))));
    }

    #[test]
    fn random_terrain_is_observable() {
        for seed in 0..20 {
            let m = simulate_measurements(&generate_path(&PathParams::with_motions(30, seed)).unwrap(), &theta()).unwrap();
            assert!(check_observability_default(&m).observable, "seed {seed}");
        }
    }

    #[test]
    fn identity_extrinsic_gives_identical_trajectories() {
        let path = generate_path(&PathParams::default()).unwrap();
        let (a, b) = sensor_trajectories(&path, &Transform::identity());
        assert_eq!(a, b);
    }

    #[test]
    fn simulated_motions_satisfy_the_calibration_equation() {
        let th = theta();
        let m = simulate_measurements(&generate_path(&PathParams::default()).unwrap(), &th).unwrap();
        for p in m.iter() {
            let lhs = th.compose(&p.v_a);
            let rhs = p.v_b.compose(&th);
            assert!((lhs.rotation.matrix() - rhs.rotation.matrix()).norm() < 1e-12);
            assert!((lhs.translation - rhs.translation).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_noise_is_exact() {
        let m = simulate_measurements(&generate_path(&PathParams::default()).unwrap(), &theta()).unwrap();
        assert_eq!(corrupt(&m, &NoiseModel::noiseless()), m);
    }

    #[test]
    fn corrupted_rotations_stay_valid() {
        let m = simulate_measurements(&generate_path(&PathParams::default()).unwrap(), &theta()).unwrap();
        let noisy = corrupt(&m, &NoiseModel::new(0.3, 0.1, 4).unwrap());
        for (p, q) in m.iter().zip(noisy.iter()) {
            let r = q.v_a.rotation.matrix();
            assert!((r.transpose() * r - nalgebra::Matrix3::identity()).norm() < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
            assert!(rotation_distance(&p.v_a.rotation, &q.v_a.rotation) > 0.0);
        }
        assert_eq!(noisy, corrupt(&m, &NoiseModel::new(0.3, 0.1, 4).unwrap()));
    }

    #[test]
    fn negative_sigma_is_rejected() {
        assert!(NoiseModel::new(-0.1, 0.0, 0).is_err());
        assert!(NoiseModel::new(0.0, f64::NAN, 0).is_err());
    }
    /// Inverse of `rotation_from_euler_xyz` for angles inside (-pi/2, pi/2).
    fn euler_xyz(r: &nalgebra::Matrix3<f64>) -> [f64; 3] {
        [(-r[(1, 2)]).atan2(r[(2, 2)]), r[(0, 2)].asin(), (-r[(0, 1)]).atan2(r[(0, 0)])]
    }

    #[test]
    fn noise_moments_match_the_model() {
        let (sr, st) = (0.05, 0.2);
        let pair = RelativeMotionPair::new(Transform::identity(), Transform::identity());
        let m = MeasurementSet::new(vec![pair; 5000]);
        // the mean bound is three standard errors, so a fixed seed keeps this reproducible
        let noisy = corrupt(&m, &NoiseModel::new(sr, st, 7).unwrap());
        let draws: Vec<&Transform> = noisy.iter().flat_map(|p| [&p.v_a, &p.v_b]).collect();
        assert_eq!(draws.len(), 10_000);
        let n = draws.len() as f64;
        for k in 0..3 {
            let angles: Vec<f64> = draws.iter().map(|v| euler_xyz(v.rotation.matrix())[k]).collect();
            let shifts: Vec<f64> = draws.iter().map(|v| v.translation[k]).collect();
            for (sample, sigma) in [(angles, sr), (shifts, st)] {
                let mean = sample.iter().sum::<f64>() / n;
                let std = (sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                assert!(mean.abs() < 3.0 * sigma / 100.0, "axis {k}: mean {mean}");
                assert!((std / sigma - 1.0).abs() < 0.05, "axis {k}: std {std}");
            }
        }
    }

    #[test]
    fn euler_inverse_round_trips() {
        let r = rotation_from_euler_xyz(0.3, -0.2, 1.1);
        let e = euler_xyz(r.matrix());
        assert!((e[0] - 0.3).abs() < 1e-14 && (e[1] + 0.2).abs() < 1e-14 && (e[2] - 1.1).abs() < 1e-14);
    }
}
