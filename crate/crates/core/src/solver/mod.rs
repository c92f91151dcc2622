//! End-to-end certifiable calibration: assemble, reduce over translation,
//! solve the strengthened dual SDP, extract the rotation, recover the
//! translation in closed form and certify the result.
//!
//! The SDP multipliers follow [`crate::sdp`]'s convention
//! `H = C - sum y_k A_k - y_E E`. In Lagrangian terms the constraint
//! multipliers are `-y_k` and the dual bound is `gamma = y_E`, so
//! `H = Q~ + P~(lambda, gamma)` with `gamma` maximized.

mod local;

use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

pub use local::{cost_gradient, local_solve, LocalOptions};
pub(crate) use local::local_estimate;

use crate::error::{CalibError, Result};
use crate::geom::{project_to_so3, Extrinsic, RotationMatrix, Transform};
use crate::problem::{check_observability, MeasurementSet, ObservabilityReport, DEFAULT_ANGLE_TOL, DEFAULT_AXIS_TOL};
use crate::qcqp::{
    self, assemble, constraint_catalog, full_vector, reduced_vector, unvec_rotation, ConstraintKind, DataMatrix,
    Matrix10, Vector10, Y_INDEX,
};
use crate::sdp::{self, certify_lmi, EqConstraint, SdpOptions, SdpProblem, SdpSolution, SdpStatus};

/// Thresholds for the SDP solve and the optimality certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub max_iter: usize,
    /// Certified only if `cost - gamma < gap_tol * (1 + |cost|)`.
    pub gap_tol: f64,
    /// Certified only if `min eig(H) > -psd_tol`.
    pub psd_tol: f64,
    /// Second-to-first eigenvalue ratio below which `X` counts as rank one;
    /// also the relative threshold for the nullspace of `H`.
    pub rank_ratio: f64,
    /// Allowed distance between the primal eigenvector and the dual nullspace vector.
    pub mismatch_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_feas: 1e-9,
            tol_gap: 1e-9,
            max_iter: 100,
            gap_tol: 1e-7,
            psd_tol: 1e-8,
            rank_ratio: 1e-6,
            mismatch_tol: 1e-6,
        }
    }
}

impl Tolerances {
    pub fn sdp_options(&self) -> SdpOptions {
        SdpOptions {
            tol_feas: self.tol_feas,
            tol_gap: self.tol_gap,
            max_iter: self.max_iter,
            record_history: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrateOptions {
    pub constraint_set: ConstraintKind,
    pub tolerances: Tolerances,
    pub strict_observability: bool,
    pub angle_tol: f64,
    pub axis_tol: f64,
}

impl Default for CalibrateOptions {
    fn default() -> Self {
        Self {
            constraint_set: ConstraintKind::RCH,
            tolerances: Tolerances::default(),
            strict_observability: false,
            angle_tol: DEFAULT_ANGLE_TOL,
            axis_tol: DEFAULT_AXIS_TOL,
        }
    }
}

impl CalibrateOptions {
    pub fn with_constraints(kind: ConstraintKind) -> Self {
        Self {
            constraint_set: kind,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    CertifiedGlobal,
    NotCertified,
}

/// JSON has no NaN; `serde_json` writes it as `null`, so read `null` back as NaN.
fn nullable_f64<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Option::<f64>::deserialize(d).map(|v| v.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Cost at the returned estimate minus the dual bound, in cost units.
    #[serde(deserialize_with = "nullable_f64")]
    pub gap: f64,
    /// Dual lower bound `gamma` on the optimal cost, in cost units.
    #[serde(deserialize_with = "nullable_f64")]
    pub dual_bound: f64,
    /// Smallest eigenvalue of the dual matrix `H` (normalized units).
    #[serde(rename = "min_eig_H", deserialize_with = "nullable_f64")]
    pub min_eig_h: f64,
    pub nullspace_dim: usize,
    /// Frobenius distance of the extracted matrix from SO(3) before projection.
    #[serde(deserialize_with = "nullable_f64")]
    pub extraction_residual: f64,
    /// Second-to-first eigenvalue ratio of the primal matrix.
    #[serde(deserialize_with = "nullable_f64")]
    pub rank_ratio: f64,
    /// Distance between the refined estimate and the dual nullspace vector.
    #[serde(deserialize_with = "nullable_f64")]
    pub eigvec_mismatch: f64,
    pub verdict: Verdict,
}

impl Certificate {
    /// Placeholder for estimates that come without a dual certificate.
    pub fn uncertified() -> Self {
        Self {
            gap: f64::NAN,
            dual_bound: f64::NAN,
            min_eig_h: f64::NAN,
            nullspace_dim: 0,
            extraction_residual: f64::NAN,
            rank_ratio: f64::NAN,
            eigvec_mismatch: f64::NAN,
            verdict: Verdict::NotCertified,
        }
    }

    pub fn is_certified(&self) -> bool {
        self.verdict == Verdict::CertifiedGlobal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub sdp_iters: usize,
    pub sdp_status: Option<SdpStatus>,
    pub local_iters: usize,
    /// Whole call, including assembly.
    pub wall_time_seconds: f64,
    /// Solver only: SDP, extraction and certification, or the local iterations.
    pub solver_time_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    #[serde(rename = "theta")]
    pub extrinsic: Extrinsic,
    /// Homogenized cost at `theta` with `y = 1`.
    pub cost: f64,
    pub constraint_set: Option<ConstraintKind>,
    pub certificate: Certificate,
    pub observability: ObservabilityReport,
    pub solve_stats: SolveStats,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Newton steps used to refine the relaxation estimate.
const POLISH_STEPS: usize = 20;

/// Versioned JSON envelope around a [`CalibrationResult`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub schema_version: u32,
    #[serde(flatten)]
    pub result: CalibrationResult,
}

impl From<CalibrationResult> for CalibrationReport {
    fn from(result: CalibrationResult) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            result,
        }
    }
}

/// `sum kappa ||R R_a - R_b R||_F^2 + sum tau ||R t_a + t - R_b t - t_b||^2`.
pub fn evaluate_cost(m: &MeasurementSet, theta: &Extrinsic) -> f64 {
    let r = theta.rotation.matrix();
    let t = theta.translation;
    m.iter()
        .map(|p| {
            let rb = p.v_b.rotation.matrix();
            let rot = (r * p.v_a.rotation.matrix() - rb * r).norm_squared();
            let tr = (r * p.v_a.translation + t - rb * t - p.v_b.translation).norm_squared();
            p.kappa * rot + p.tau * tr
        })
        .sum()
}

/// `x^T q x` for `x = [t; vec(R); 1]`.
pub fn quadratic_cost(data: &DataMatrix, theta: &Extrinsic) -> f64 {
    let x = full_vector(theta, 1.0);
    (x.transpose() * data.q * x)[0]
}

/// Minimizer over `t` of the homogenized cost for fixed `r~`.
pub fn recover_translation(data: &DataMatrix, r_tilde: &Vector10) -> Result<Vector3<f64>> {
    qcqp::recover_translation(data, r_tilde)
}

/// The SDP relaxation of the reduced rotation problem on `q / trace(q)`.
pub fn calibration_sdp(data: &DataMatrix, kind: ConstraintKind) -> SdpProblem {
    let to_dense = |m: &Matrix10| DMatrix::from_column_slice(10, 10, m.as_slice());
    let catalog = constraint_catalog(kind);
    let mut constraints: Vec<EqConstraint> = catalog
        .matrices
        .iter()
        .map(|a| EqConstraint {
            matrix: to_dense(a),
            rhs: 0.0,
        })
        .collect();
    constraints.push(EqConstraint {
        matrix: to_dense(&catalog.homogenizer),
        rhs: 1.0,
    });
    SdpProblem::new(to_dense(&data.normalized_q_tilde()), constraints).expect("catalog matrices are symmetric")
}

/// Rotation read off a (near) rank-one primal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub rotation: RotationMatrix,
    /// Sign of the homogenizing entry of the dominant eigenvector.
    pub y: f64,
    /// `r~` scaled so its last entry is +1, before projection.
    pub r_tilde: Vector10,
    pub extraction_residual: f64,
    pub rank_ratio: f64,
}

fn dominant_extraction(x: &DMatrix<f64>) -> Result<Extraction> {
    let eig = x.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let top = eig.eigenvalues[order[0]];
    if !(top > 0.0) {
        return Err(CalibError::SdpFailure("primal matrix has no positive eigenvalue".into()));
    }
    let second = order.get(1).map(|&i| eig.eigenvalues[i].max(0.0)).unwrap_or(0.0);
    let v = eig.eigenvectors.column(order[0]);
    let yv = v[Y_INDEX];
    if yv.abs() < 1e-12 {
        return Err(CalibError::SdpFailure("homogenizing entry of the primal eigenvector vanishes".into()));
    }
    let r_tilde = Vector10::from_iterator(v.iter().map(|c| c / yv));
    let raw = unvec_rotation(r_tilde.as_slice());
    let rotation = project_to_so3(&raw)?;
    Ok(Extraction {
        rotation,
        y: yv.signum(),
        extraction_residual: (raw - rotation.matrix()).norm(),
        r_tilde,
        rank_ratio: second / top,
    })
}

/// Reads `(R, y)` off the dominant eigenvector of `x`; fails when the second
/// eigenvalue exceeds `rank_ratio` times the first.
pub fn extract_solution(x: &DMatrix<f64>, rank_ratio: f64) -> Result<Extraction> {
    let e = dominant_extraction(x)?;
    if e.rank_ratio > rank_ratio {
        return Err(CalibError::RankDeficiencyAmbiguous(e.rank_ratio));
    }
    Ok(e)
}

/// Dual quantities rebuilt from the SDP multipliers.
#[derive(Debug, Clone)]
pub struct DualCertificate {
    /// Dual bound in normalized units.
    pub gamma: f64,
    pub h: DMatrix<f64>,
    pub min_eig: f64,
    pub max_eig: f64,
    pub nullspace_dim: usize,
    /// `[r; 1]` spanning the (numerical) nullspace of `H`, if it has a y-component.
    pub null_vector: Option<Vector10>,
}

/// Rebuilds `H` from the multipliers and tightens `gamma` to the largest
/// value keeping `H >= 0` for those multipliers, when the rotation block of
/// `H` is positive definite.
pub fn dual_certificate(problem: &SdpProblem, multipliers: &[f64], rank_ratio: f64) -> DualCertificate {
    let last = problem.constraints.len() - 1;
    let gamma_ipm = multipliers[last];
    let mut mult = multipliers.to_vec();
    mult[last] = 0.0;
    let h0 = problem.dual_slack(&mult);
    let h0 = (&h0 + h0.transpose()) * 0.5;

    let block = h0.view((0, 0), (9, 9)).into_owned();
    let cross = h0.view((0, Y_INDEX), (9, 1)).into_owned();
    let mut gamma = gamma_ipm;
    if let Some(chol) = block.cholesky() {
        let refined = h0[(Y_INDEX, Y_INDEX)] - cross.dot(&chol.solve(&cross));
        if refined.is_finite() && refined >= gamma_ipm {
            gamma = refined;
        }
    }
    mult[last] = gamma;
    let lmi = certify_lmi(problem, &mult, 0.0);
    let h = problem.dual_slack(&mult);
    let eig = ((&h + h.transpose()) * 0.5).symmetric_eigen();
    let max_eig = eig.eigenvalues.max();
    let nullspace_dim = eig
        .eigenvalues
        .iter()
        .filter(|&&e| e <= rank_ratio * max_eig.max(0.0))
        .count();
    let weakest = eig.eigenvalues.imin();
    let v = eig.eigenvectors.column(weakest);
    let null_vector = (v[Y_INDEX].abs() > 1e-12).then(|| Vector10::from_iterator(v.iter().map(|c| c / v[Y_INDEX])));
    DualCertificate {
        gamma,
        h,
        min_eig: lmi.min_eig,
        max_eig,
        nullspace_dim,
        null_vector,
    }
}

/// Smallest correction of `multipliers` for which `H r_tilde = 0` holds,
/// i.e. the stationarity condition of the candidate `r_tilde`.
pub fn align_multipliers(problem: &SdpProblem, multipliers: &[f64], r_tilde: &Vector10) -> Vec<f64> {
    let n = problem.dimension();
    let x = DVector::from_column_slice(r_tilde.as_slice());
    let mut g = DMatrix::zeros(n, multipliers.len());
    for (k, c) in problem.constraints.iter().enumerate() {
        g.set_column(k, &(&c.matrix * &x));
    }
    let h = problem.dual_slack(multipliers);
    let residual = &h * &x;
    // minimum-norm solution of g c = residual through the small Gram matrix
    let gram = &g * g.transpose();
    let eig = gram.symmetric_eigen();
    let cutoff = 1e-12 * eig.eigenvalues.amax();
    let mut coeffs = eig.eigenvectors.transpose() * &residual;
    for (c, &l) in coeffs.iter_mut().zip(eig.eigenvalues.iter()) {
        *c = if l > cutoff { *c / l } else { 0.0 };
    }
    let correction = g.transpose() * (&eig.eigenvectors * coeffs);
    multipliers.iter().zip(correction.iter()).map(|(m, c)| m + c).collect()
}

/// The stronger of the solver's dual and its alignment to `r_tilde`; the
/// aligned one is only used when its `H` stays positive semidefinite.
fn best_dual(problem: &SdpProblem, solution: &SdpSolution, r_tilde: &Vector10, tol: &Tolerances) -> DualCertificate {
    let base = dual_certificate(problem, &solution.multipliers, tol.rank_ratio);
    let aligned = align_multipliers(problem, &solution.multipliers, r_tilde);
    let candidate = dual_certificate(problem, &aligned, tol.rank_ratio);
    let valid = |d: &DualCertificate| d.min_eig > -tol.psd_tol;
    match (valid(&base), valid(&candidate)) {
        (_, true) if !valid(&base) || candidate.gamma >= base.gamma - tol.psd_tol => candidate,
        _ => base,
    }
}

/// Certifiably globally optimal calibration from relative motions.
pub fn calibrate(m: &MeasurementSet, opts: &CalibrateOptions) -> Result<CalibrationResult> {
    let start = Instant::now();
    if m.len() < 2 {
        return Err(CalibError::TooFewMeasurements(m.len()));
    }
    let observability = check_observability(m, opts.angle_tol, opts.axis_tol);
    if opts.strict_observability && !observability.observable {
        return Err(CalibError::NotObservable(format!(
            "rotations span {} distinct axis(es); at least 2 are required",
            observability.distinct_axis_count
        )));
    }
    let data = assemble(m)?;
    let mut result = calibrate_assembled(&data, opts)?;
    result.observability = observability;
    result.solve_stats.wall_time_seconds = start.elapsed().as_secs_f64();
    Ok(result)
}

/// Runs the solver stages on an already assembled data matrix. The
/// observability report in the result is left empty.
pub fn calibrate_assembled(data: &DataMatrix, opts: &CalibrateOptions) -> Result<CalibrationResult> {
    let start = Instant::now();
    let tol = &opts.tolerances;
    let problem = calibration_sdp(data, opts.constraint_set);
    let solution = sdp::solve(&problem, &tol.sdp_options());
    match solution.status {
        SdpStatus::Optimal | SdpStatus::MaxIter => {}
        SdpStatus::NumericalFailure if solution.kkt.primal_residual < 1e-6 && solution.kkt.dual_residual < 1e-6 => {}
        status => {
            return Err(CalibError::SdpFailure(format!(
                "{status:?} after {} iterations (primal residual {:e}, dual residual {:e})",
                solution.iterations, solution.kkt.primal_residual, solution.kkt.dual_residual
            )))
        }
    }

    let extraction = dominant_extraction(&solution.x_primal)?;
    let rotation = extraction.rotation;
    let translation = recover_translation(data, &reduced_vector(rotation.matrix(), 1.0))?;
    let (extrinsic, polish_steps) = local::polish(data, &Transform::new(rotation, translation), POLISH_STEPS);
    let cost = quadratic_cost(data, &extrinsic).max(0.0);

    let candidate = reduced_vector(extrinsic.rotation.matrix(), 1.0);
    let dual = best_dual(&problem, &solution, &candidate, tol);
    let dual_bound = dual.gamma * data.scale;
    let gap = cost - dual_bound;
    let eigvec_mismatch = dual
        .null_vector
        .map(|v| (v - candidate).norm())
        .unwrap_or(f64::INFINITY);
    let certified = solution.status == SdpStatus::Optimal
        && gap < tol.gap_tol * (1.0 + cost.abs())
        && dual.min_eig > -tol.psd_tol
        && dual.nullspace_dim == 1
        && extraction.rank_ratio < tol.rank_ratio
        && eigvec_mismatch <= tol.mismatch_tol;

    let elapsed = start.elapsed().as_secs_f64();
    Ok(CalibrationResult {
        extrinsic,
        cost,
        constraint_set: Some(opts.constraint_set),
        certificate: Certificate {
            gap,
            dual_bound,
            min_eig_h: dual.min_eig,
            nullspace_dim: dual.nullspace_dim,
            extraction_residual: extraction.extraction_residual,
            rank_ratio: extraction.rank_ratio,
            eigvec_mismatch,
            verdict: if certified { Verdict::CertifiedGlobal } else { Verdict::NotCertified },
        },
        observability: ObservabilityReport {
            distinct_axis_count: 0,
            max_axis_angle_between: 0.0,
            rotation_magnitudes: Vec::new(),
            observable: false,
            condition_estimate: data.qtt_condition,
        },
        solve_stats: SolveStats {
            sdp_iters: solution.iterations,
            sdp_status: Some(solution.status),
            local_iters: polish_steps,
            wall_time_seconds: elapsed,
            solver_time_seconds: elapsed,
        },
    })
}

/// Outcome of certifying a candidate calibration against the dual bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateCheck {
    pub cost: f64,
    pub dual_bound: f64,
    pub gap: f64,
    #[serde(rename = "min_eig_H")]
    pub min_eig_h: f64,
    pub globally_optimal: bool,
}

/// Solves the dual and tests whether `candidate` attains the dual bound.
pub fn certify_candidate(m: &MeasurementSet, candidate: &Extrinsic, opts: &CalibrateOptions) -> Result<CandidateCheck> {
    let data = assemble(m)?;
    let tol = &opts.tolerances;
    let problem = calibration_sdp(&data, opts.constraint_set);
    let solution = sdp::solve(&problem, &tol.sdp_options());
    if matches!(solution.status, SdpStatus::InfeasibleDetected) {
        return Err(CalibError::SdpFailure("dual problem reported infeasible".into()));
    }
    let dual = best_dual(&problem, &solution, &reduced_vector(candidate.rotation.matrix(), 1.0), tol);
    let cost = evaluate_cost(m, candidate);
    let dual_bound = dual.gamma * data.scale;
    let gap = cost - dual_bound;
    Ok(CandidateCheck {
        cost,
        dual_bound,
        gap,
        min_eig_h: dual.min_eig,
        globally_optimal: dual.min_eig > -tol.psd_tol && gap <= tol.gap_tol * (1.0 + cost.abs()),
    })
}

/// Frobenius rotation error and Euclidean translation error.
pub fn estimate_errors(estimate: &Extrinsic, truth: &Extrinsic) -> (f64, f64) {
    (
        (estimate.rotation.matrix() - truth.rotation.matrix()).norm(),
        (estimate.translation - truth.translation).norm(),
    )
}
