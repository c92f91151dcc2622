//! Measurement data model, JSON-lines ingestion and the two-axis
//! observability predicate.

use std::io::{BufRead, Write};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::geom::{axis_angle_from_rotation, compose, invert, matrix_from_rows, RotationMatrix, Transform};

/// Rotations read from files must be orthonormal to this tolerance.
pub const FILE_ROTATION_TOL: f64 = 1e-6;

/// Rotation angle below which a motion is treated as rotation-free.
pub const DEFAULT_ANGLE_TOL: f64 = 1e-3;
/// Minimum separation for two rotation axes to count as distinct.
pub const DEFAULT_AXIS_TOL: f64 = 1e-2;

/// Egomotion of both sensors over one timestep, with its cost weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeMotionPair {
    pub v_a: Transform,
    pub v_b: Transform,
    pub kappa: f64,
    pub tau: f64,
}

impl RelativeMotionPair {
    pub fn new(v_a: Transform, v_b: Transform) -> Self {
        Self {
            v_a,
            v_b,
            kappa: 1.0,
            tau: 1.0,
        }
    }

    pub fn with_weights(mut self, kappa: f64, tau: f64) -> Self {
        self.kappa = kappa;
        self.tau = tau;
        self
    }
}

/// Ordered relative-motion measurements.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeasurementSet {
    pub pairs: Vec<RelativeMotionPair>,
}

impl MeasurementSet {
    pub fn new(pairs: Vec<RelativeMotionPair>) -> Self {
        Self { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, RelativeMotionPair> {
        self.pairs.iter()
    }

    /// Multiplies every weight by `c`.
    pub fn scaled_weights(&self, c: f64) -> Self {
        Self::new(
            self.pairs
                .iter()
                .map(|p| p.with_weights(p.kappa * c, p.tau * c))
                .collect(),
        )
    }

    pub fn concat(&self, other: &MeasurementSet) -> Self {
        let mut pairs = self.pairs.clone();
        pairs.extend_from_slice(&other.pairs);
        Self::new(pairs)
    }
}

impl FromIterator<RelativeMotionPair> for MeasurementSet {
    fn from_iter<I: IntoIterator<Item = RelativeMotionPair>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

#[derive(Deserialize)]
struct RawPose {
    #[serde(rename = "R")]
    r: [[f64; 3]; 3],
    t: [f64; 3],
}

#[derive(Deserialize)]
struct RawRecord {
    #[serde(default)]
    #[allow(dead_code)]
    t: Option<i64>,
    a: RawPose,
    b: RawPose,
    kappa: Option<f64>,
    tau: Option<f64>,
}

#[derive(Deserialize)]
struct RawTrajectoryRecord {
    #[serde(default)]
    #[allow(dead_code)]
    t: Option<i64>,
    pose: RawPose,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    t: usize,
    a: &'a Transform,
    b: &'a Transform,
    kappa: f64,
    tau: f64,
}

#[derive(Serialize)]
struct TrajectoryRecordOut<'a> {
    t: usize,
    pose: &'a Transform,
}

fn pose_from_raw(raw: &RawPose, line: usize) -> Result<Transform> {
    let m = matrix_from_rows(&raw.r);
    let rotation = RotationMatrix::try_new(m, FILE_ROTATION_TOL)
        .map_err(|reason| CalibError::InvalidRotation { line, reason })?;
    let t = Vector3::from(raw.t);
    if !t.iter().all(|v| v.is_finite()) {
        return Err(CalibError::Parse {
            line,
            message: "non-finite translation".into(),
        });
    }
    Ok(Transform::new(rotation, t))
}

fn weight(value: Option<f64>, name: &str, line: usize) -> Result<f64> {
    match value {
        None => Ok(1.0),
        Some(w) if w > 0.0 && w.is_finite() => Ok(w),
        Some(w) => Err(CalibError::Parse {
            line,
            message: format!("{name} must be positive, got {w}"),
        }),
    }
}

fn json_lines<R: BufRead, T, F>(source: R, mut f: F) -> Result<Vec<T>>
where
    F: FnMut(&str, usize) -> Result<T>,
{
    let mut out = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        out.push(f(trimmed, line_no)?);
    }
    if out.is_empty() {
        return Err(CalibError::EmptyInput);
    }
    Ok(out)
}

/// Reads the JSON-lines measurement format. Omitted weights default to 1.
pub fn load_measurements<R: BufRead>(source: R) -> Result<MeasurementSet> {
    let pairs = json_lines(source, |text, line| {
        let raw: RawRecord = serde_json::from_str(text).map_err(|e| CalibError::Parse {
            line,
            message: e.to_string(),
        })?;
        Ok(RelativeMotionPair {
            v_a: pose_from_raw(&raw.a, line)?,
            v_b: pose_from_raw(&raw.b, line)?,
            kappa: weight(raw.kappa, "kappa", line)?,
            tau: weight(raw.tau, "tau", line)?,
        })
    })?;
    Ok(MeasurementSet::new(pairs))
}

/// Reads a world-frame trajectory, one `{"t", "pose"}` record per line.
pub fn load_trajectory<R: BufRead>(source: R) -> Result<Vec<Transform>> {
    json_lines(source, |text, line| {
        let raw: RawTrajectoryRecord = serde_json::from_str(text).map_err(|e| CalibError::Parse {
            line,
            message: e.to_string(),
        })?;
        pose_from_raw(&raw.pose, line)
    })
}

pub fn write_measurements<W: Write>(mut sink: W, m: &MeasurementSet) -> Result<()> {
    for (t, p) in m.pairs.iter().enumerate() {
        let rec = RecordOut {
            t: t + 1,
            a: &p.v_a,
            b: &p.v_b,
            kappa: p.kappa,
            tau: p.tau,
        };
        serde_json::to_writer(&mut sink, &rec).map_err(std::io::Error::from)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_trajectory<W: Write>(mut sink: W, poses: &[Transform]) -> Result<()> {
    for (t, pose) in poses.iter().enumerate() {
        serde_json::to_writer(&mut sink, &TrajectoryRecordOut { t, pose }).map_err(std::io::Error::from)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

/// Differences world-frame poses into per-step egomotion:
/// `v[t] = poses[t-1]^-1 * poses[t]`.
pub fn relative_motions_from_trajectories(
    poses_a: &[Transform],
    poses_b: &[Transform],
) -> Result<MeasurementSet> {
    if poses_a.len() != poses_b.len() {
        return Err(CalibError::LengthMismatch {
            a: poses_a.len(),
            b: poses_b.len(),
        });
    }
    if poses_a.len() < 3 {
        return Err(CalibError::TooShort {
            needed: 3,
            got: poses_a.len(),
        });
    }
    let diff = |w: &[Transform; 2]| compose(&invert(&w[0]), &w[1]);
    Ok(poses_a
        .windows(2)
        .zip(poses_b.windows(2))
        .map(|(wa, wb)| {
            RelativeMotionPair::new(diff(&[wa[0], wa[1]]), diff(&[wb[0], wb[1]]))
        })
        .collect())
}

/// Outcome of the two-axis observability test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityReport {
    pub distinct_axis_count: usize,
    pub max_axis_angle_between: f64,
    pub rotation_magnitudes: Vec<f64>,
    pub observable: bool,
    /// Condition number of the translation block `sum tau (I - R_b)^T (I - R_b)`.
    pub condition_estimate: f64,
}

/// Angle between two axes treating `u` and `-u` as the same axis.
fn axis_separation(u: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
    let c = u.dot(v).abs().min(1.0);
    let s = u.cross(v).norm();
    s.atan2(c)
}

/// Counts distinct rotation axes among the sensor-a motions.
///
/// Axes are selected by farthest-point sampling seeded with the largest
/// rotation, so the count does not depend on measurement order or on a
/// common change of frame.
pub fn check_observability(m: &MeasurementSet, angle_tol: f64, axis_tol: f64) -> ObservabilityReport {
    let rotation_magnitudes: Vec<f64> = m
        .iter()
        .map(|p| axis_angle_from_rotation(&p.v_a.rotation).angle)
        .collect();
    let axes: Vec<(f64, Vector3<f64>)> = m
        .iter()
        .map(|p| axis_angle_from_rotation(&p.v_a.rotation))
        .filter(|aa| aa.angle > angle_tol)
        .map(|aa| (aa.angle, aa.axis))
        .collect();

    let mut distinct_axis_count = 0;
    let mut max_axis_angle_between: f64 = 0.0;
    if let Some(first) = (0..axes.len()).max_by(|&i, &j| axes[i].0.total_cmp(&axes[j].0)) {
        distinct_axis_count = 1;
        let mut nearest: Vec<f64> = axes.iter().map(|(_, u)| axis_separation(u, &axes[first].1)).collect();
        loop {
            let (idx, &gap) = nearest
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("non-empty");
            if gap <= axis_tol {
                break;
            }
            distinct_axis_count += 1;
            let chosen = axes[idx].1;
            for (d, (_, u)) in nearest.iter_mut().zip(&axes) {
                *d = d.min(axis_separation(u, &chosen));
            }
        }
        for i in 0..axes.len() {
            for j in (i + 1)..axes.len() {
                max_axis_angle_between = max_axis_angle_between.max(axis_separation(&axes[i].1, &axes[j].1));
            }
        }
    }

    ObservabilityReport {
        distinct_axis_count,
        max_axis_angle_between,
        rotation_magnitudes,
        observable: distinct_axis_count >= 2,
        condition_estimate: translation_block_condition(m),
    }
}

/// `check_observability` with the default tolerances.
pub fn check_observability_default(m: &MeasurementSet) -> ObservabilityReport {
    check_observability(m, DEFAULT_ANGLE_TOL, DEFAULT_AXIS_TOL)
}

pub(crate) fn translation_block(m: &MeasurementSet) -> Matrix3<f64> {
    m.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = Matrix3::identity() - p.v_b.rotation.matrix();
        acc + d.transpose() * d * p.tau
    })
}

pub(crate) fn symmetric_condition(m: &Matrix3<f64>) -> f64 {
    let eig = m.symmetric_eigenvalues();
    let hi = eig.max();
    let lo = eig.min();
    if hi <= 0.0 || lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn translation_block_condition(m: &MeasurementSet) -> f64 {
    symmetric_condition(&translation_block(m))
}
