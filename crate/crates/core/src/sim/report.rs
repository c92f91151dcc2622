use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::qcqp::ConstraintKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Convex,
    Local,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Convex => "convex",
            Method::Local => "local",
        })
    }
}

/// One solver run inside an experiment; a row of the trial CSV.
///
/// Fields that do not apply to an experiment are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub experiment: String,
    pub trial: usize,
    pub seed: u64,
    pub sigma_r: f64,
    pub sigma_t: f64,
    pub n: usize,
    pub method: Method,
    pub constraint_set: Option<ConstraintKind>,
    pub rotation_perturbation: Option<f64>,
    pub translation_perturbation: Option<f64>,
    pub init_angle: Option<f64>,
    pub init_distance: Option<f64>,
    pub rotation_error: f64,
    pub translation_error: f64,
    pub cost: f64,
    pub certified: bool,
    pub wall_time_seconds: f64,
}

impl TrialRecord {
    pub(crate) fn new(experiment: &str, trial: usize, seed: u64, n: usize, method: Method) -> Self {
        Self {
            experiment: experiment.to_string(),
            trial,
            seed,
            sigma_r: 0.0,
            sigma_t: 0.0,
            n,
            method,
            constraint_set: None,
            rotation_perturbation: None,
            translation_perturbation: None,
            init_angle: None,
            init_distance: None,
            rotation_error: f64::NAN,
            translation_error: f64::NAN,
            cost: f64::NAN,
            certified: false,
            wall_time_seconds: 0.0,
        }
    }
}

/// Writes `records` as CSV with a header row.
pub fn write_trials_csv<W: Write>(sink: W, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
