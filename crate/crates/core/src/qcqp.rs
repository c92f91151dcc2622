//! Quadratic-form assembly of the calibration cost and the quadratic
//! constraint catalog describing SO(3).
//!
//! The full variable is `x = [t; vec(R); y]` (13 entries, `vec` stacks
//! columns) and the reduced variable is `r~ = [vec(R); y]` (10 entries).

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::geom::Transform;
use crate::problem::{symmetric_condition, MeasurementSet, RelativeMotionPair};

pub type Matrix9 = SMatrix<f64, 9, 9>;
pub type Matrix10 = SMatrix<f64, 10, 10>;
pub type Matrix13 = SMatrix<f64, 13, 13>;
pub type Matrix3x10 = SMatrix<f64, 3, 10>;
pub type Matrix3x13 = SMatrix<f64, 3, 13>;
pub type Vector10 = SVector<f64, 10>;
pub type Vector13 = SVector<f64, 13>;

/// Index of the homogenizing variable inside `r~`.
pub const Y_INDEX: usize = 9;

/// Largest admissible condition number of the translation block.
pub const MAX_QTT_CONDITION: f64 = 1e12;

/// Position of `R[(row, col)]` inside `vec(R)`.
#[inline]
pub const fn vec_index(row: usize, col: usize) -> usize {
    row + 3 * col
}

pub fn vec_rotation(r: &Matrix3<f64>) -> SVector<f64, 9> {
    SVector::<f64, 9>::from_column_slice(r.as_slice())
}

pub fn unvec_rotation(r: &[f64]) -> Matrix3<f64> {
    Matrix3::from_column_slice(&r[..9])
}

/// `r~ = [vec(R); y]`.
pub fn reduced_vector(r: &Matrix3<f64>, y: f64) -> Vector10 {
    let mut v = Vector10::zeros();
    v.fixed_rows_mut::<9>(0).copy_from(&vec_rotation(r));
    v[Y_INDEX] = y;
    v
}

/// `x = [t; vec(R); y]`.
pub fn full_vector(theta: &Transform, y: f64) -> Vector13 {
    let mut x = Vector13::zeros();
    x.fixed_rows_mut::<3>(0).copy_from(&theta.translation);
    x.fixed_rows_mut::<10>(3).copy_from(&reduced_vector(theta.rotation.matrix(), y));
    x
}

/// `M_r = (R_a^T kron I) - (I kron R_b)`, so `M_r vec(R) = vec(R R_a - R_b R)`.
pub fn rotation_block(pair: &RelativeMotionPair) -> Matrix9 {
    let eye = Matrix3::<f64>::identity();
    let ra_t = pair.v_a.rotation.matrix().transpose();
    let rb = pair.v_b.rotation.matrix();
    let lhs: Matrix9 = ra_t.kronecker(&eye);
    let rhs: Matrix9 = eye.kronecker(rb);
    lhs - rhs
}

/// `M_t = [I - R_b, t_a^T kron I, -t_b]`, so
/// `M_t x = R t_a + t - R_b t - y t_b`.
pub fn translation_block(pair: &RelativeMotionPair) -> Matrix3x13 {
    let eye = Matrix3::<f64>::identity();
    let mut m = Matrix3x13::zeros();
    m.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(eye - pair.v_b.rotation.matrix()));
    let ta = pair.v_a.translation;
    for col in 0..3 {
        m.fixed_view_mut::<3, 3>(0, 3 + 3 * col).copy_from(&(eye * ta[col]));
    }
    m.fixed_view_mut::<3, 1>(0, 12).copy_from(&(-pair.v_b.translation));
    m
}

/// The assembled cost `x^T q x` and its Schur reduction over `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    pub q: Matrix13,
    pub q_tt: Matrix3<f64>,
    pub q_t_rtilde: Matrix3x10,
    pub q_tilde: Matrix10,
    /// `trace(q)`; the reduction runs on `q / scale`.
    pub scale: f64,
    pub qtt_condition: f64,
}

impl DataMatrix {
    /// `q_tilde / scale`, the matrix handed to the SDP.
    pub fn normalized_q_tilde(&self) -> Matrix10 {
        self.q_tilde / self.scale
    }

    /// Minimizer of `x^T q x` over `t` for fixed `r~`.
    pub fn recover_translation(&self, r_tilde: &Vector10) -> Result<Vector3<f64>> {
        recover_translation(self, r_tilde)
    }
}

/// Raw `q = sum kappa M_r^T M_r (embedded) + sum tau M_t^T M_t`.
pub fn assemble_q(m: &MeasurementSet) -> Matrix13 {
    let mut q = Matrix13::zeros();
    for pair in m.iter() {
        let mr = rotation_block(pair);
        let qr = mr.transpose() * mr * pair.kappa;
        let mut view = q.fixed_view_mut::<9, 9>(3, 3);
        view += qr;
        let mt = translation_block(pair);
        q += mt.transpose() * mt * pair.tau;
    }
    symmetrize13(&mut q);
    q
}

fn symmetrize13(q: &mut Matrix13) {
    *q = (*q + q.transpose()) * 0.5;
}

/// Builds the data matrix and reduces it to `q_tilde = q / q_tt`.
pub fn assemble(m: &MeasurementSet) -> Result<DataMatrix> {
    if m.len() < 2 {
        return Err(CalibError::TooFewMeasurements(m.len()));
    }
    let q = assemble_q(m);
    reduce(q)
}

/// Schur reduction of an already assembled `q`.
pub fn reduce(q: Matrix13) -> Result<DataMatrix> {
    let q_tt: Matrix3<f64> = q.fixed_view::<3, 3>(0, 0).into_owned();
    let qtt_condition = symmetric_condition(&q_tt);
    if !(qtt_condition <= MAX_QTT_CONDITION) {
        return Err(CalibError::SingularQtt(qtt_condition));
    }
    let scale = q.trace();
    let qn = q / scale;
    let ntt: Matrix3<f64> = qn.fixed_view::<3, 3>(0, 0).into_owned();
    let ntr: Matrix3x10 = qn.fixed_view::<3, 10>(0, 3).into_owned();
    let nrr: Matrix10 = qn.fixed_view::<10, 10>(3, 3).into_owned();
    let chol = ntt
        .cholesky()
        .ok_or(CalibError::SingularQtt(qtt_condition))?;
    // q_rr - W^T W with W = L^-1 q_tr
    let w = chol
        .l()
        .solve_lower_triangular(&ntr)
        .ok_or(CalibError::SingularQtt(qtt_condition))?;
    let mut reduced = nrr - w.transpose() * w;
    reduced = (reduced + reduced.transpose()) * 0.5;
    Ok(DataMatrix {
        q,
        q_tt,
        q_t_rtilde: q.fixed_view::<3, 10>(0, 3).into_owned(),
        q_tilde: reduced * scale,
        scale,
        qtt_condition,
    })
}

/// `t* = -q_tt^-1 q_t,r~ r~`.
pub fn recover_translation(q: &DataMatrix, r_tilde: &Vector10) -> Result<Vector3<f64>> {
    let chol = q
        .q_tt
        .cholesky()
        .ok_or(CalibError::SingularQtt(q.qtt_condition))?;
    Ok(-chol.solve(&(q.q_t_rtilde * r_tilde)))
}

/// Which SO(3) constraint families enter the relaxation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintKind {
    /// Row orthogonality `R R^T = y^2 I`.
    #[serde(rename = "r")]
    R,
    /// Rows plus column orthogonality `R^T R = y^2 I`.
    #[serde(rename = "r+c")]
    RC,
    /// Rows plus handedness `c_i x c_j = y c_k`.
    #[serde(rename = "r+h")]
    RH,
    #[serde(rename = "r+c+h")]
    #[default]
    RCH,
}

impl ConstraintKind {
    pub const ALL: [ConstraintKind; 4] = [Self::R, Self::RC, Self::RH, Self::RCH];

    pub fn has_columns(self) -> bool {
        matches!(self, Self::RC | Self::RCH)
    }

    pub fn has_handedness(self) -> bool {
        matches!(self, Self::RH | Self::RCH)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::R => "r",
            Self::RC => "r+c",
            Self::RH => "r+h",
            Self::RCH => "r+c+h",
        }
    }
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConstraintKind {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(' ', "").as_str() {
            "r" => Ok(Self::R),
            "r+c" => Ok(Self::RC),
            "r+h" => Ok(Self::RH),
            "r+c+h" => Ok(Self::RCH),
            other => Err(CalibError::InvalidParameter(format!("unknown constraint set '{other}'"))),
        }
    }
}

/// Quadratic forms `r~^T A_k r~ = 0` plus the homogenizer `r~^T E r~ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub kind: ConstraintKind,
    pub matrices: Vec<Matrix10>,
    pub labels: Vec<String>,
    pub homogenizer: Matrix10,
}

impl ConstraintSet {
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }
}

/// Adds `coeff * u_p * u_q` to the quadratic form `A`.
fn add_product(a: &mut Matrix10, p: usize, q: usize, coeff: f64) {
    a[(p, q)] += 0.5 * coeff;
    a[(q, p)] += 0.5 * coeff;
}

const UPPER_PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

fn orthogonality(rows: bool) -> impl Iterator<Item = (String, Matrix10)> {
    UPPER_PAIRS.iter().map(move |&(i, j)| {
        let mut a = Matrix10::zeros();
        for k in 0..3 {
            let (p, q) = if rows {
                (vec_index(i, k), vec_index(j, k))
            } else {
                (vec_index(k, i), vec_index(k, j))
            };
            add_product(&mut a, p, q, 1.0);
        }
        if i == j {
            add_product(&mut a, Y_INDEX, Y_INDEX, -1.0);
        }
        let label = if rows { format!("row({},{})", i + 1, j + 1) } else { format!("col({},{})", i + 1, j + 1) };
        (label, a)
    })
}

fn handedness() -> impl Iterator<Item = (String, Matrix10)> {
    [(0usize, 1usize, 2usize), (1, 2, 0), (2, 0, 1)]
        .into_iter()
        .flat_map(|(i, j, k)| {
            (0..3).map(move |l| {
                let (l1, l2) = ((l + 1) % 3, (l + 2) % 3);
                let mut a = Matrix10::zeros();
                // (c_i x c_j)_l - y c_k[l]
                add_product(&mut a, vec_index(l1, i), vec_index(l2, j), 1.0);
                add_product(&mut a, vec_index(l2, i), vec_index(l1, j), -1.0);
                add_product(&mut a, Y_INDEX, vec_index(l, k), -1.0);
                (format!("hand(c{}xc{})[{}]", i + 1, j + 1, l + 1), a)
            })
        })
}

pub fn constraint_catalog(kind: ConstraintKind) -> ConstraintSet {
    let mut entries: Vec<(String, Matrix10)> = orthogonality(true).collect();
    if kind.has_columns() {
        entries.extend(orthogonality(false));
    }
    if kind.has_handedness() {
        entries.extend(handedness());
    }
    let mut homogenizer = Matrix10::zeros();
    homogenizer[(Y_INDEX, Y_INDEX)] = 1.0;
    let (labels, matrices) = entries.into_iter().unzip();
    ConstraintSet {
        kind,
        matrices,
        labels,
        homogenizer,
    }
}
