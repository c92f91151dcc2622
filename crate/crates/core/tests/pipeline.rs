mod common;

use std::io::Cursor;

use common::path_instance;
use egocal::par::trial_rng;
use egocal::problem::{load_measurements, load_trajectory, relative_motions_from_trajectories, write_measurements, write_trajectory};
use egocal::sim::{
    ablation_experiment, generate_path, random_extrinsic, sensor_trajectories, AblationConfig, PathParams,
};
use egocal::solver::{estimate_errors, CalibrationReport};
use egocal::{calibrate, CalibError, CalibrateOptions, ConstraintKind};

#[test]
fn measurements_survive_a_file_round_trip() {
    let (m, _) = path_instance(4, 30, 0.02, 0.02);
    let mut buf = Vec::new();
    write_measurements(&mut buf, &m).unwrap();
    let back = load_measurements(Cursor::new(buf)).unwrap();
    assert_eq!(back, m);
    let opts = CalibrateOptions::default();
    let a = calibrate(&m, &opts).unwrap();
    let b = calibrate(&back, &opts).unwrap();
    assert_eq!(a.extrinsic, b.extrinsic);
    assert_eq!(a.certificate, b.certificate);
}

#[test]
fn trajectories_calibrate_to_the_simulated_extrinsic() {
    let theta = random_extrinsic(&mut trial_rng(8, 0));
    let path = generate_path(&PathParams::with_motions(40, 8)).unwrap();
    let (poses_a, poses_b) = sensor_trajectories(&path, &theta);
    let mut files = [Vec::new(), Vec::new()];
    write_trajectory(&mut files[0], &poses_a).unwrap();
    write_trajectory(&mut files[1], &poses_b).unwrap();
    let [fa, fb] = files;
    let a = load_trajectory(Cursor::new(fa)).unwrap();
    let b = load_trajectory(Cursor::new(fb)).unwrap();
    let m = relative_motions_from_trajectories(&a, &b).unwrap();
    assert_eq!(m.len(), 40);
    let r = calibrate(&m, &CalibrateOptions::default()).unwrap();
    let (er, et) = estimate_errors(&r.extrinsic, &theta);
    assert!(er < 1e-8 && et < 1e-8, "{er} {et}");
    assert!(r.certificate.is_certified());
}

#[test]
fn loader_reports_the_offending_line() {
    let good = r#"{"t":1,"a":{"R":[[1,0,0],[0,1,0],[0,0,1]],"t":[0,0,0]},"b":{"R":[[1,0,0],[0,1,0],[0,0,1]],"t":[1,0,0]}}"#;
    let skewed = r#"{"t":2,"a":{"R":[[1,0.1,0],[0,1,0],[0,0,1]],"t":[0,0,0]},"b":{"R":[[1,0,0],[0,1,0],[0,0,1]],"t":[1,0,0]}}"#;
    let text = format!("{good}\n{skewed}\n");
    match load_measurements(Cursor::new(text)) {
        Err(CalibError::InvalidRotation { line, .. }) => assert_eq!(line, 2),
        other => panic!("unexpected {other:?}"),
    }
    let text = format!("{good}\n\n{{not json\n");
    assert!(matches!(load_measurements(Cursor::new(text)), Err(CalibError::Parse { line: 3, .. })));
    assert!(matches!(load_measurements(Cursor::new("\n\n")), Err(CalibError::EmptyInput)));
    let negative = good.replace("}}", "},\"kappa\":-1}").replacen("},\"kappa\":-1}", "}", 1);
    assert!(matches!(load_measurements(Cursor::new(negative)), Err(CalibError::Parse { line: 1, .. })));
}

#[test]
fn report_json_has_the_documented_fields() {
    let (m, _) = path_instance(5, 20, 0.01, 0.01);
    let r = calibrate(&m, &CalibrateOptions::with_constraints(ConstraintKind::RH)).unwrap();
    let v = serde_json::to_value(CalibrationReport::from(r.clone())).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["constraint_set"], "r+h");
    assert!(v["theta"]["R"].is_array() && v["theta"]["t"].is_array());
    for key in ["gap", "dual_bound", "min_eig_H", "nullspace_dim", "rank_ratio", "verdict"] {
        assert!(!v["certificate"][key].is_null(), "{key}");
    }
    let back: CalibrationReport = serde_json::from_value(v).unwrap();
    assert_eq!(back.result.extrinsic, r.extrinsic);
}

#[test]
fn trial_records_do_not_depend_on_the_job_count() {
    let cfg = AblationConfig {
        rotation_magnitudes: vec![0.5, 1.5],
        n_axes: 6,
        translation_magnitudes: vec![1.0],
        n_translation_rotation_axes: 2,
        n_translation_directions: 3,
        ..AblationConfig::default()
    };
    let strip = |mut rs: Vec<egocal::sim::TrialRecord>| {
        for r in &mut rs {
            r.wall_time_seconds = 0.0;
        }
        rs
    };
    let one = ablation_experiment(&cfg, Some(1));
    let many = ablation_experiment(&cfg, Some(4));
    assert_eq!(one.rotation_rows, many.rotation_rows);
    assert_eq!(one.translation_rows, many.translation_rows);
    assert_eq!(strip(one.records), strip(many.records));
}
