//! Dense primal-dual interior-point solver for small SDPs.
//!
//! Primal: minimize `<C, X>` s.t. `<A_i, X> = b_i`, `X >= 0`.
//! Dual: maximize `b^T y` s.t. `S = C - sum y_i A_i >= 0`.
//!
//! Infeasible-start path following with Nesterov-Todd scaling and a Mehrotra
//! predictor-corrector step. Linearly dependent constraints are detected up
//! front and dropped (their multipliers are reported as zero).

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Solver tolerances and limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SdpOptions {
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub max_iter: usize,
    pub record_history: bool,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            tol_feas: 1e-9,
            tol_gap: 1e-9,
            max_iter: 100,
            record_history: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EqConstraint {
    pub matrix: DMatrix<f64>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub cost: DMatrix<f64>,
    pub constraints: Vec<EqConstraint>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SdpProblemError {
    #[error("cost matrix must be square and non-empty")]
    BadCost,
    #[error("constraint {0} has the wrong shape")]
    BadShape(usize),
    #[error("matrix {0} is not symmetric")]
    NotSymmetric(String),
    #[error("no constraints")]
    NoConstraints,
}

/// Merit, `X`, `y` and `S` of an iterate.
type Iterate = (f64, DMatrix<f64>, DVector<f64>, DMatrix<f64>);

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = 1.0 + m.amax();
    (m - m.transpose()).amax() <= 1e-12 * scale
}

impl SdpProblem {
    pub fn new(cost: DMatrix<f64>, constraints: Vec<EqConstraint>) -> Result<Self, SdpProblemError> {
        if cost.nrows() == 0 || !cost.is_square() {
            return Err(SdpProblemError::BadCost);
        }
        if !is_symmetric(&cost) {
            return Err(SdpProblemError::NotSymmetric("cost".into()));
        }
        if constraints.is_empty() {
            return Err(SdpProblemError::NoConstraints);
        }
        for (i, c) in constraints.iter().enumerate() {
            if c.matrix.shape() != cost.shape() {
                return Err(SdpProblemError::BadShape(i));
            }
            if !is_symmetric(&c.matrix) {
                return Err(SdpProblemError::NotSymmetric(format!("constraint {i}")));
            }
        }
        Ok(Self { cost, constraints })
    }

    pub fn dimension(&self) -> usize {
        self.cost.nrows()
    }

    pub fn rhs(&self) -> DVector<f64> {
        DVector::from_iterator(self.constraints.len(), self.constraints.iter().map(|c| c.rhs))
    }

    /// `C - sum y_i A_i`.
    pub fn dual_slack(&self, multipliers: &[f64]) -> DMatrix<f64> {
        let mut s = self.cost.clone();
        for (c, &y) in self.constraints.iter().zip(multipliers) {
            s -= &c.matrix * y;
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    Optimal,
    MaxIter,
    NumericalFailure,
    InfeasibleDetected,
}

/// Relative residuals of the optimality conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktResiduals {
    /// `||b - A(X)|| / (1 + ||b||)`
    pub primal_residual: f64,
    /// `||C - S - A^T y||_F / (1 + ||C||_F)`
    pub dual_residual: f64,
    /// `<X, S> / (1 + |pobj| + |dobj|)`
    pub complementarity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterateRecord {
    pub iter: usize,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub mu: f64,
    /// `<X, S>`; nonnegative while both iterates are positive semidefinite.
    pub xs_inner: f64,
    /// `<R_d, X> - r_p^T y`, so that `primal_obj - dual_obj - correction = <X, S>`
    /// for infeasible iterates.
    pub infeasibility_correction: f64,
    pub min_eig_x: f64,
    pub min_eig_s: f64,
    pub step_primal: f64,
    pub step_dual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub x_primal: DMatrix<f64>,
    pub s_dual: DMatrix<f64>,
    /// One multiplier per constraint, so that `S = C - sum y_i A_i`.
    pub multipliers: Vec<f64>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub kkt: KktResiduals,
    pub status: SdpStatus,
    pub iterations: usize,
    /// Indices of constraints dropped as linearly dependent.
    pub dropped: Vec<usize>,
    pub history: Vec<IterateRecord>,
}

impl SdpSolution {
    pub fn relative_gap(&self) -> f64 {
        (self.primal_obj - self.dual_obj).abs() / (1.0 + self.primal_obj.abs() + self.dual_obj.abs())
    }

    /// Writes the iterate history as CSV.
    pub fn write_history_csv<W: Write>(&self, sink: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        for rec in &self.history {
            w.serialize(rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Result of re-checking the dual LMI from the multipliers alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LmiCheck {
    pub min_eig: f64,
    pub norm: f64,
    pub psd: bool,
}

/// Rebuilds `H = C - sum y_i A_i` from the problem data and checks `H >= 0`
/// to within `tol_feas * (1 + ||H||)`.
pub fn certify_lmi(problem: &SdpProblem, multipliers: &[f64], tol_feas: f64) -> LmiCheck {
    let h = problem.dual_slack(multipliers);
    let h = (&h + h.transpose()) * 0.5;
    let eig = h.clone().symmetric_eigenvalues();
    let min_eig = eig.min();
    let norm = eig.amax();
    LmiCheck {
        min_eig,
        norm,
        psd: min_eig > -tol_feas * (1.0 + norm),
    }
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Greedy selection of a linearly independent subset of constraints.
/// Returns `(kept, dropped)` or `None` when a dependent constraint has an
/// inconsistent right-hand side.
fn independent_constraints(p: &SdpProblem) -> Option<(Vec<usize>, Vec<usize>)> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (i, c) in p.constraints.iter().enumerate() {
        let v = DVector::from_column_slice(c.matrix.as_slice());
        let norm = v.norm();
        let mut res = v.clone();
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&res);
                res.axpy(-proj, q, 1.0);
            }
        }
        if res.norm() > 1e-9 * norm.max(f64::MIN_POSITIVE) {
            basis.push(res.normalize());
            kept.push(i);
        } else {
            dropped.push(i);
        }
    }
    // dependent rows must be consistent with the kept ones
    if !dropped.is_empty() {
        let k = DMatrix::from_fn(p.constraints[0].matrix.len(), kept.len(), |r, j| {
            p.constraints[kept[j]].matrix.as_slice()[r]
        });
        let b_kept = DVector::from_iterator(kept.len(), kept.iter().map(|&i| p.constraints[i].rhs));
        let gram = k.transpose() * &k;
        let chol = gram.cholesky()?;
        for &i in &dropped {
            let v = DVector::from_column_slice(p.constraints[i].matrix.as_slice());
            let coef = chol.solve(&(k.transpose() * v));
            let implied = coef.dot(&b_kept);
            let rhs = p.constraints[i].rhs;
            if (implied - rhs).abs() > 1e-8 * (1.0 + rhs.abs() + implied.abs()) {
                return None;
            }
        }
    }
    Some((kept, dropped))
}

/// Largest `a` with `L L^T + a D >= 0`, where `L` is the Cholesky factor.
fn max_step(chol_l: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    let Some(li_d) = chol_l.solve_lower_triangular(d) else {
        return 0.0;
    };
    let Some(t) = chol_l.solve_lower_triangular(&li_d.transpose()) else {
        return 0.0;
    };
    let lmin = sym(t).symmetric_eigenvalues().min();
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

struct Residuals {
    rp: DVector<f64>,
    rd: DMatrix<f64>,
    pobj: f64,
    dobj: f64,
    kkt: KktResiduals,
}

struct Reduced<'a> {
    c: &'a DMatrix<f64>,
    a: Vec<&'a DMatrix<f64>>,
    b: DVector<f64>,
    norm_b: f64,
    norm_c: f64,
}

impl Reduced<'_> {
    fn a_op(&self, x: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.a.len(), self.a.iter().map(|a| inner(a, x)))
    }

    fn a_adj(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let n = self.c.nrows();
        let mut out = DMatrix::zeros(n, n);
        for (a, &yi) in self.a.iter().zip(y.iter()) {
            out += *a * yi;
        }
        out
    }

    fn residuals(&self, x: &DMatrix<f64>, y: &DVector<f64>, s: &DMatrix<f64>) -> Residuals {
        let rp = &self.b - self.a_op(x);
        let rd = self.c - s - self.a_adj(y);
        let pobj = inner(self.c, x);
        let dobj = self.b.dot(y);
        let denom = 1.0 + pobj.abs() + dobj.abs();
        let kkt = KktResiduals {
            primal_residual: rp.norm() / (1.0 + self.norm_b),
            dual_residual: rd.norm() / (1.0 + self.norm_c),
            complementarity: inner(x, s) / denom,
        };
        Residuals { rp, rd, pobj, dobj, kkt }
    }
}

fn converged(r: &Residuals, opts: &SdpOptions) -> bool {
    let gap = (r.pobj - r.dobj).abs() / (1.0 + r.pobj.abs() + r.dobj.abs());
    r.kkt.primal_residual < opts.tol_feas
        && r.kkt.dual_residual < opts.tol_feas
        && gap < opts.tol_gap
        && r.kkt.complementarity < opts.tol_gap
}

fn merit(r: &Residuals) -> f64 {
    let gap = (r.pobj - r.dobj).abs() / (1.0 + r.pobj.abs() + r.dobj.abs());
    r.kkt.primal_residual.max(r.kkt.dual_residual).max(gap).max(r.kkt.complementarity)
}

/// Solves `p`. Never panics on numerical trouble; the returned status says
/// whether the iterate is optimal to the requested tolerances.
pub fn solve(p: &SdpProblem, opts: &SdpOptions) -> SdpSolution {
    let n = p.dimension();
    let Some((kept, dropped)) = independent_constraints(p) else {
        return SdpSolution {
            x_primal: DMatrix::identity(n, n),
            s_dual: DMatrix::identity(n, n),
            multipliers: vec![0.0; p.constraints.len()],
            primal_obj: f64::NAN,
            dual_obj: f64::NAN,
            kkt: KktResiduals {
                primal_residual: f64::INFINITY,
                dual_residual: f64::INFINITY,
                complementarity: f64::INFINITY,
            },
            status: SdpStatus::InfeasibleDetected,
            iterations: 0,
            dropped: Vec::new(),
            history: Vec::new(),
        };
    };
    let red = Reduced {
        c: &p.cost,
        a: kept.iter().map(|&i| &p.constraints[i].matrix).collect(),
        b: DVector::from_iterator(kept.len(), kept.iter().map(|&i| p.constraints[i].rhs)),
        norm_b: 0.0,
        norm_c: p.cost.norm(),
    };
    let red = Reduced {
        norm_b: red.b.norm(),
        ..red
    };
    let m = kept.len();

    let mut x = DMatrix::<f64>::identity(n, n);
    let mut s = DMatrix::<f64>::identity(n, n);
    let mut y = DVector::<f64>::zeros(m);

    let mut history = Vec::new();
    let mut best: Option<Iterate> = None;
    let mut status = SdpStatus::MaxIter;
    let mut iterations = 0;
    let mut last_steps = (0.0, 0.0);

    for iter in 0..=opts.max_iter {
        iterations = iter;
        let r = red.residuals(&x, &y, &s);
        let mu = inner(&x, &s) / n as f64;
        if opts.record_history {
            history.push(IterateRecord {
                iter,
                primal_obj: r.pobj,
                dual_obj: r.dobj,
                primal_residual: r.kkt.primal_residual,
                dual_residual: r.kkt.dual_residual,
                mu,
                xs_inner: inner(&x, &s),
                infeasibility_correction: inner(&r.rd, &x) - r.rp.dot(&y),
                min_eig_x: x.clone().symmetric_eigenvalues().min(),
                min_eig_s: s.clone().symmetric_eigenvalues().min(),
                step_primal: last_steps.0,
                step_dual: last_steps.1,
            });
        }
        let score = merit(&r);
        if best.as_ref().is_none_or(|b| score <= b.0) {
            best = Some((score, x.clone(), y.clone(), s.clone()));
        }
        if converged(&r, opts) {
            status = SdpStatus::Optimal;
            break;
        }
        if iter == opts.max_iter {
            break;
        }
        if !r.pobj.is_finite() || !r.dobj.is_finite() || r.pobj.abs() > 1e14 || r.dobj.abs() > 1e14 {
            status = SdpStatus::InfeasibleDetected;
            break;
        }

        match newton_step(&red, &x, &y, &s, &r, mu, last_steps.0.min(last_steps.1)) {
            Some((dx, dy, ds, ap, ad)) => {
                x = sym(&x + dx * ap);
                y += dy * ad;
                s = sym(&s + ds * ad);
                last_steps = (ap, ad);
                if ap.max(ad) < 1e-12 {
                    status = SdpStatus::NumericalFailure;
                    break;
                }
            }
            None => {
                status = SdpStatus::NumericalFailure;
                break;
            }
        }
    }

    if status != SdpStatus::Optimal {
        if let Some((_, bx, by, bs)) = best {
            x = bx;
            y = by;
            s = bs;
        }
    }
    let r = red.residuals(&x, &y, &s);
    let mut multipliers = vec![0.0; p.constraints.len()];
    for (k, &i) in kept.iter().enumerate() {
        multipliers[i] = y[k];
    }
    SdpSolution {
        x_primal: x,
        s_dual: s,
        multipliers,
        primal_obj: r.pobj,
        dual_obj: r.dobj,
        kkt: r.kkt,
        status,
        iterations,
        dropped,
        history,
    }
}

type Step = (DMatrix<f64>, DVector<f64>, DMatrix<f64>, f64, f64);

/// One Mehrotra predictor-corrector step with NT scaling.
fn newton_step(
    red: &Reduced<'_>,
    x: &DMatrix<f64>,
    _y: &DVector<f64>,
    s: &DMatrix<f64>,
    r: &Residuals,
    mu: f64,
    last_step: f64,
) -> Option<Step> {
    let n = x.nrows();
    let lx = x.clone().cholesky()?.l();
    let ls = s.clone().cholesky()?.l();

    // NT scaling: G^{-1} X G^{-T} = G^T S G = diag(lambda), W = G G^T, W S W = X
    let svd = (ls.transpose() * &lx).svd(true, true);
    let lambda = svd.singular_values.clone();
    if lambda.iter().any(|&l| !(l > 0.0)) {
        return None;
    }
    let v = svd.v_t.as_ref()?.transpose();
    let d_inv_sqrt = DMatrix::from_diagonal(&lambda.map(|l| 1.0 / l.sqrt()));
    let d_sqrt = DMatrix::from_diagonal(&lambda.map(f64::sqrt));
    let g = &lx * &v * &d_inv_sqrt;
    let lx_inv = lx.clone().solve_lower_triangular(&DMatrix::identity(n, n))?;
    let g_inv = &d_sqrt * v.transpose() * lx_inv;
    let w = sym(&g * g.transpose());

    // Schur complement M_ij = <A_i, W A_j W>
    let waw: Vec<DMatrix<f64>> = red.a.iter().map(|a| &w * *a * &w).collect();
    let m = red.a.len();
    let mut schur = DMatrix::from_fn(m, m, |i, j| inner(red.a[i], &waw[j]));
    schur = sym(schur);
    let factor = {
        let mut reg = 0.0;
        let diag_max = schur.diagonal().amax().max(f64::MIN_POSITIVE);
        loop {
            let mut trial = schur.clone();
            for i in 0..m {
                trial[(i, i)] += reg;
            }
            if let Some(c) = trial.cholesky() {
                break c;
            }
            reg = if reg == 0.0 { 1e-14 * diag_max } else { reg * 100.0 };
            if reg > 1e-4 * diag_max {
                return None;
            }
        }
    };
    let wrdw = &w * &r.rd * &w;
    let a_wrdw = red.a_op(&wrdw);

    let direction = |z: &DMatrix<f64>| {
        let k = sym(&g * z * g.transpose());
        let rhs = &r.rp - red.a_op(&k) + &a_wrdw;
        let dy = factor.solve(&rhs);
        let ds = sym(&r.rd - red.a_adj(&dy));
        let dx = sym(&k - &w * &ds * &w);
        (dx, dy, ds)
    };

    let lam2 = DMatrix::from_diagonal(&lambda.map(|l| l * l));
    let jordan_inverse = |rc: &DMatrix<f64>| DMatrix::from_fn(n, n, |i, j| 2.0 * rc[(i, j)] / (lambda[i] + lambda[j]));

    // predictor
    let (dx_a, _dy_a, ds_a) = direction(&jordan_inverse(&(-&lam2)));
    let ap_a = max_step(&lx, &dx_a).min(1.0);
    let ad_a = max_step(&ls, &ds_a).min(1.0);
    let mu_aff = inner(&(x + &dx_a * ap_a), &(s + &ds_a * ad_a)) / n as f64;
    let mut sigma = if mu > 0.0 { (mu_aff / mu).clamp(0.0, 1.0).powi(3) } else { 0.0 };
    // short steps mean the iterate hugs the boundary; recentre before pushing on
    if last_step > 0.0 && last_step < 0.2 {
        sigma = sigma.max(0.5);
    }

    // corrector with the second-order term in the scaled space
    let dx_t = &g_inv * &dx_a * g_inv.transpose();
    let ds_t = g.transpose() * &ds_a * &g;
    let prod = &dx_t * &ds_t;
    let corr = (&prod + prod.transpose()) * 0.5;
    let rc = DMatrix::<f64>::identity(n, n) * (sigma * mu) - &lam2 - corr;
    let (dx, dy, ds) = direction(&jordan_inverse(&rc));

    let frac = 0.9 + 0.09 * ap_a.min(ad_a);
    let ap = (frac * max_step(&lx, &dx)).min(1.0);
    let ad = (frac * max_step(&ls, &ds)).min(1.0);
    if !ap.is_finite() || !ad.is_finite() {
        return None;
    }
    Some((dx, dy, ds, ap, ad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    #[test]
    fn two_by_two_eigenvalue_problem() {
        let p = SdpProblem::new(
            diag(&[1.0, 2.0]),
            vec![EqConstraint {
                matrix: DMatrix::identity(2, 2),
                rhs: 1.0,
            }],
        )
        .unwrap();
        let sol = solve(&p, &SdpOptions::default());
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.primal_obj - 1.0).abs() < 1e-8);
        assert!((&sol.x_primal - diag(&[1.0, 0.0])).norm() < 1e-8);
        assert!((sol.multipliers[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_malformed_problems() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(
            SdpProblem::new(c, vec![EqConstraint { matrix: DMatrix::identity(2, 2), rhs: 1.0 }]),
            Err(SdpProblemError::NotSymmetric(_))
        ));
        assert!(matches!(SdpProblem::new(DMatrix::identity(2, 2), vec![]), Err(SdpProblemError::NoConstraints)));
        assert!(matches!(
            SdpProblem::new(DMatrix::identity(2, 2), vec![EqConstraint { matrix: DMatrix::identity(3, 3), rhs: 1.0 }]),
            Err(SdpProblemError::BadShape(0))
        ));
    }

    #[test]
    fn dependent_constraints_are_dropped() {
        let a = DMatrix::identity(2, 2);
        let p = SdpProblem::new(
            diag(&[1.0, 2.0]),
            vec![
                EqConstraint { matrix: a.clone(), rhs: 1.0 },
                EqConstraint { matrix: &a * 2.0, rhs: 2.0 },
            ],
        )
        .unwrap();
        let sol = solve(&p, &SdpOptions::default());
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert_eq!(sol.dropped, vec![1]);
        assert_eq!(sol.multipliers[1], 0.0);
        assert!((sol.primal_obj - 1.0).abs() < 1e-8);
    }

    #[test]
    fn inconsistent_dependent_constraints_are_infeasible() {
        let a = DMatrix::identity(2, 2);
        let p = SdpProblem::new(
            diag(&[1.0, 2.0]),
            vec![
                EqConstraint { matrix: a.clone(), rhs: 1.0 },
                EqConstraint { matrix: &a * 2.0, rhs: 3.0 },
            ],
        )
        .unwrap();
        assert_eq!(solve(&p, &SdpOptions::default()).status, SdpStatus::InfeasibleDetected);
    }

    #[test]
    fn zero_multipliers_on_indefinite_cost_fail_the_lmi() {
        let p = SdpProblem::new(
            diag(&[1.0, -0.5]),
            vec![EqConstraint { matrix: DMatrix::identity(2, 2), rhs: 1.0 }],
        )
        .unwrap();
        let check = certify_lmi(&p, &[0.0], 1e-9);
        assert!(!check.psd);
        assert!((check.min_eig + 0.5).abs() < 1e-15);
    }

    #[test]
    fn history_csv_has_one_row_per_iterate() {
        let p = SdpProblem::new(
            diag(&[3.0, 1.0, 2.0]),
            vec![EqConstraint { matrix: DMatrix::identity(3, 3), rhs: 2.0 }],
        )
        .unwrap();
        let sol = solve(&p, &SdpOptions { record_history: true, ..Default::default() });
        assert!((sol.primal_obj - 2.0).abs() < 1e-8);
        let mut buf = Vec::new();
        sol.write_history_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), sol.history.len() + 1);
        assert!(text.starts_with("iter,primal_obj,dual_obj"));
    }
}
