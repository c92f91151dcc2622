//! Certifiably globally optimal extrinsic calibration of two egomotion
//! sensors.
//!
//! Relative motions of both sensors are turned into a homogenized QCQP over
//! `(R, t, y)`. The translation is eliminated in closed form, the rotation
//! problem is relaxed to an SDP over its Lagrangian dual with redundant
//! orthogonality and handedness constraints, and the returned estimate comes
//! with a numerical certificate of global optimality.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geom;
pub mod par;
pub mod problem;
pub mod qcqp;
pub mod sdp;
pub mod sim;
pub mod solver;

pub use error::{CalibError, Result};
pub use geom::{Extrinsic, RotationMatrix, Transform};
pub use problem::{MeasurementSet, ObservabilityReport, RelativeMotionPair};
pub use qcqp::ConstraintKind;
pub use solver::{calibrate, CalibrateOptions, CalibrationResult, Certificate, Verdict};
