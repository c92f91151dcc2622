//! Levenberg-Marquardt baseline on the same cost, parameterized by a left
//! rotation increment and the translation.

use std::time::Instant;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::{evaluate_cost, CalibrationResult, Certificate, SolveStats};
use crate::error::{CalibError, Result};
use crate::geom::{exp_so3, skew, Extrinsic, Transform};
use crate::problem::{check_observability_default, MeasurementSet};
use crate::qcqp::{full_vector, vec_rotation, DataMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalOptions {
    pub max_iter: usize,
    /// Stop once `||grad|| <= grad_tol * (1 + cost)`.
    pub grad_tol: f64,
    /// Stop once the parameter step falls below this norm.
    pub step_tol: f64,
    pub initial_damping: f64,
}

impl Default for LocalOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-13,
            step_tol: 1e-15,
            initial_damping: 1e-4,
        }
    }
}

struct Linearization {
    cost: f64,
    jtj: Matrix6<f64>,
    /// `J^T r`; the cost gradient is twice this.
    jtr: Vector6<f64>,
}

fn linearize(m: &MeasurementSet, theta: &Extrinsic) -> Linearization {
    let r = theta.rotation.matrix();
    let t = theta.translation;
    let generators = [skew(&Vector3::x()), skew(&Vector3::y()), skew(&Vector3::z())];
    let mut jtj = Matrix6::zeros();
    let mut jtr = Vector6::zeros();
    let mut cost = 0.0;
    for p in m.iter() {
        let ra = p.v_a.rotation.matrix();
        let rb = p.v_b.rotation.matrix();
        let (wk, wt) = (p.kappa.sqrt(), p.tau.sqrt());

        // rotation residual R R_a - R_b R; derivative along [e_k]x R
        let res_r = (r * ra - rb * r) * wk;
        let rra = r * ra;
        let mut jr = [Matrix3::zeros(); 3];
        for (k, g) in generators.iter().enumerate() {
            jr[k] = (g * rra - rb * g * r) * wk;
        }

        // translation residual R t_a + t - R_b t - t_b
        let rta = r * p.v_a.translation;
        let res_t = (rta + t - rb * t - p.v_b.translation) * wt;
        let mut jt = nalgebra::Matrix3x6::zeros();
        for (k, g) in generators.iter().enumerate() {
            jt.set_column(k, &(g * rta * wt));
        }
        jt.fixed_view_mut::<3, 3>(0, 3).copy_from(&((Matrix3::identity() - rb) * wt));

        cost += res_r.norm_squared() + res_t.norm_squared();
        for i in 0..3 {
            jtr[i] += jr[i].dot(&res_r);
            for j in i..3 {
                let v = jr[i].dot(&jr[j]);
                jtj[(i, j)] += v;
                if i != j {
                    jtj[(j, i)] += v;
                }
            }
        }
        jtj += jt.transpose() * jt;
        jtr += jt.transpose() * res_t;
    }
    Linearization { cost, jtj, jtr }
}

fn retract(theta: &Extrinsic, delta: &Vector6<f64>) -> Extrinsic {
    let dr = exp_so3(&delta.fixed_rows::<3>(0).into_owned());
    Transform::new(dr.compose(&theta.rotation), theta.translation + delta.fixed_rows::<3>(3))
}

/// Gradient of [`evaluate_cost`] with respect to `(omega, dt)` where the
/// estimate is perturbed as `(exp(omega) R, t + dt)`.
pub fn cost_gradient(m: &MeasurementSet, theta: &Extrinsic) -> Vector6<f64> {
    linearize(m, theta).jtr * 2.0
}

/// Local minimization of the calibration cost from `init`.
///
/// Returns [`CalibError::MaxIter`] carrying the best iterate when the
/// iteration budget runs out before convergence.
pub fn local_solve(m: &MeasurementSet, init: &Extrinsic, opts: &LocalOptions) -> Result<CalibrationResult> {
    let start = Instant::now();
    let mut theta = *init;
    let mut lin = linearize(m, &theta);
    let mut damping = opts.initial_damping * lin.jtj.diagonal().max().max(1e-12);
    let mut nu = 2.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        let grad_norm = 2.0 * lin.jtr.norm();
        if grad_norm <= opts.grad_tol * (1.0 + lin.cost) {
            converged = true;
            break;
        }
        iterations += 1;
        let mut lhs = lin.jtj;
        for i in 0..6 {
            lhs[(i, i)] += damping * lin.jtj[(i, i)].max(1e-12);
        }
        let Some(chol) = lhs.cholesky() else {
            damping *= nu;
            nu *= 2.0;
            continue;
        };
        let delta = -chol.solve(&lin.jtr);
        if delta.norm() <= opts.step_tol {
            converged = true;
            break;
        }
        let candidate = retract(&theta, &delta);
        let cand = linearize(m, &candidate);
        let predicted = -(2.0 * delta.dot(&lin.jtr) + delta.dot(&(lin.jtj * delta)));
        let actual = lin.cost - cand.cost;
        // near the minimum cost differences drown in rounding; fall back to the gradient
        let flat = actual.abs() <= 8.0 * f64::EPSILON * lin.cost.max(cand.cost);
        if actual > 0.0 || (flat && cand.jtr.norm() < lin.jtr.norm()) {
            let rho = if predicted > 0.0 && !flat { actual / predicted } else { 1.0 };
            damping *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
            theta = candidate;
            lin = cand;
        } else {
            if actual.abs() <= 1e-15 * lin.cost && delta.norm() < 1e-12 {
                converged = true;
                break;
            }
            damping *= nu;
            nu *= 2.0;
            if !damping.is_finite() || damping > 1e300 {
                converged = true;
                break;
            }
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    let result = CalibrationResult {
        extrinsic: theta,
        cost: evaluate_cost(m, &theta),
        constraint_set: None,
        certificate: Certificate::uncertified(),
        observability: check_observability_default(m),
        solve_stats: SolveStats {
            sdp_iters: 0,
            sdp_status: None,
            local_iters: iterations,
            wall_time_seconds: elapsed,
            solver_time_seconds: elapsed,
        },
    };
    if converged {
        Ok(result)
    } else {
        Err(CalibError::MaxIter {
            iterations,
            best: Box::new(result),
        })
    }
}

/// The converged or best iterate, whichever the solver produced.
pub(crate) fn local_estimate(m: &MeasurementSet, init: &Extrinsic, opts: &LocalOptions) -> Result<CalibrationResult> {
    match local_solve(m, init, opts) {
        Ok(r) => Ok(r),
        Err(CalibError::MaxIter { best, .. }) => Ok(*best),
        Err(e) => Err(e),
    }
}

/// Newton refinement of `x^T q x` from a nearby estimate. Works on the
/// quadratic form directly, so it needs no access to the measurements; falls
/// back to a Gauss-Newton step where the full Hessian is not positive
/// definite. Returns the refined estimate and the number of steps taken; the
/// input is returned unchanged if refinement does not lower the cost.
pub(crate) fn polish(data: &DataMatrix, init: &Extrinsic, max_iter: usize) -> (Extrinsic, usize) {
    let generators = [skew(&Vector3::x()), skew(&Vector3::y()), skew(&Vector3::z())];
    let q = &data.q;
    let mut theta = *init;
    let mut best = (theta, q_gradient_norm(data, &theta));
    let mut steps = 0;
    for _ in 0..max_iter {
        let x = full_vector(&theta, 1.0);
        let r = theta.rotation.matrix();
        let mut j = Matrix13x6::zeros();
        for (k, g) in generators.iter().enumerate() {
            j.fixed_view_mut::<9, 1>(3, k).copy_from(&vec_rotation(&(g * r)));
        }
        j.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
        let qx = q * x;
        let grad = j.transpose() * qx;
        let gauss_newton = j.transpose() * q * j;
        let mut newton = gauss_newton;
        for a in 0..3 {
            for b in 0..3 {
                let second = (generators[a] * generators[b] + generators[b] * generators[a]) * r * 0.5;
                newton[(a, b)] += vec_rotation(&second).dot(&qx.fixed_rows::<9>(3));
            }
        }
        let Some(chol) = newton.cholesky().or_else(|| gauss_newton.cholesky()) else {
            break;
        };
        let delta = -chol.solve(&grad);
        if !delta.iter().all(|v| v.is_finite()) {
            break;
        }
        theta = retract(&theta, &delta);
        steps += 1;
        let g = q_gradient_norm(data, &theta);
        if g < best.1 {
            best = (theta, g);
        }
        if delta.norm() < 1e-13 {
            break;
        }
    }
    let before = full_vector(init, 1.0);
    let after = full_vector(&best.0, 1.0);
    if (after.transpose() * q * after)[0] <= (before.transpose() * q * before)[0] + 1e-12 * data.scale {
        (best.0, steps)
    } else {
        (*init, 0)
    }
}

fn q_gradient_norm(data: &DataMatrix, theta: &Extrinsic) -> f64 {
    let x = full_vector(theta, 1.0);
    let qx = data.q * x;
    let r = theta.rotation.matrix();
    let generators = [skew(&Vector3::x()), skew(&Vector3::y()), skew(&Vector3::z())];
    let mut g = Vector6::zeros();
    for (k, gen) in generators.iter().enumerate() {
        g[k] = vec_rotation(&(gen * r)).dot(&qx.fixed_rows::<9>(3));
    }
    g.fixed_rows_mut::<3>(3).copy_from(&qx.fixed_rows::<3>(0));
    g.norm()
}

type Matrix13x6 = nalgebra::SMatrix<f64, 13, 6>;
