#![allow(dead_code)]

use egocal::par::trial_rng;
use egocal::sdp::{EqConstraint, SdpProblem};
use egocal::sim::{corrupt_with, generate_path, random_extrinsic, simulate_measurements, NoiseModel, PathParams};
use egocal::{Extrinsic, MeasurementSet};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// SDP with a known optimum from a strictly complementary, nondegenerate
/// primal-dual pair.
pub struct KnownSdp {
    pub problem: SdpProblem,
    pub optimum: f64,
    pub x_star: DMatrix<f64>,
    pub y_star: Vec<f64>,
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    a.qr().q()
}

/// `X* = U diag(l, 0) U^T` and `S* = U diag(0, s) U^T` share eigenvectors with
/// complementary supports; `C = S* + sum y*_i A_i` and `b_i = <A_i, X*>`.
pub fn complementary_sdp(seed: u64) -> KnownSdp {
    let mut rng = trial_rng(seed, 0);
    let n = rng.random_range(3..=8);
    let rank = rng.random_range(1..n);
    // r(r+1)/2 <= m <= n(n+1)/2 - (n-r)(n-r+1)/2 keeps the pair nondegenerate,
    // so the primal and dual optima are unique
    let tri = |k: usize| k * (k + 1) / 2;
    let m = rng.random_range(tri(rank).max(2)..=tri(n) - tri(n - rank));
    let u = random_orthogonal(&mut rng, n);
    let mut dx = DVector::zeros(n);
    let mut ds = DVector::zeros(n);
    for i in 0..n {
        if i < rank {
            dx[i] = rng.random_range(0.5..2.0);
        } else {
            ds[i] = rng.random_range(0.5..2.0);
        }
    }
    let x_star = &u * DMatrix::from_diagonal(&dx) * u.transpose();
    let s_star = &u * DMatrix::from_diagonal(&ds) * u.transpose();
    let mut constraints = Vec::with_capacity(m);
    let mut y_star = Vec::with_capacity(m);
    let mut c = s_star;
    // the first constraint is the trace, which keeps the feasible set bounded
    for i in 0..m {
        let a = if i == 0 { DMatrix::identity(n, n) } else { random_symmetric(&mut rng, n) };
        let y: f64 = rng.random_range(-1.0..1.0);
        c += &a * y;
        constraints.push(EqConstraint {
            rhs: a.dot(&x_star),
            matrix: a,
        });
        y_star.push(y);
    }
    let c = (&c + c.transpose()) * 0.5;
    let optimum = c.dot(&x_star);
    KnownSdp {
        problem: SdpProblem::new(c, constraints).expect("constructed problem is well formed"),
        optimum,
        x_star,
        y_star,
    }
}

/// Measurements along a random terrain path with a random extrinsic.
pub fn path_instance(seed: u64, n_motions: usize, sigma_r: f64, sigma_t: f64) -> (MeasurementSet, Extrinsic) {
    let mut rng = trial_rng(seed, 17);
    let theta = random_extrinsic(&mut rng);
    let path = generate_path(&PathParams::with_motions(n_motions, seed)).expect("valid path parameters");
    let clean = simulate_measurements(&path, &theta).expect("path has enough waypoints");
    let noise = NoiseModel::new(sigma_r, sigma_t, seed).expect("valid noise");
    (corrupt_with(&clean, &noise, &mut rng), theta)
}
