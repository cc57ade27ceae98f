#![allow(dead_code)]

use informa::data_model::{build_instrument, build_io_matrices, build_state_matrices, make_cross_cov_bound, Instrument, InstrumentSpec, NoiseBound, Trajectory};
use informa::informativity::{build_feasible_form_io, build_feasible_form_state, FeasibleSetForm};
use informa::lifting::{lift_structure, LiftingStructure};
use informa::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Random matrix rescaled to spectral radius `rho`.
pub fn stable_matrix(n: usize, rho: f64, rng: &mut ChaCha8Rng) -> Mat {
    let a = gaussian(n, n, rng);
    let r = a.complex_eigenvalues().iter().map(|e| e.norm()).fold(0.0, f64::max);
    if r == 0.0 {
        a
    } else {
        a * (rho / r)
    }
}

pub fn state_form(traj: &Trajectory, spec: &InstrumentSpec, hu: f64) -> (FeasibleSetForm, Instrument, NoiseBound) {
    let d = build_state_matrices(traj).unwrap();
    let r = build_instrument(traj, spec, d.samples()).unwrap();
    let q = make_cross_cov_bound(&(Mat::identity(d.state_dim(), d.state_dim()) * hu), d.samples(), r.rows()).unwrap();
    (build_feasible_form_state(&d, &r, &q).unwrap(), r, q)
}

pub fn io_form(traj: &Trajectory, lag: usize, spec: &InstrumentSpec, hu: f64) -> (FeasibleSetForm, LiftingStructure, Instrument, NoiseBound) {
    let d = build_io_matrices(traj, lag).unwrap();
    let s = lift_structure(lag, d.output_dim(), d.input_dim()).unwrap();
    let r = build_instrument(traj, spec, d.samples()).unwrap();
    let q = make_cross_cov_bound(&(Mat::identity(d.output_dim(), d.output_dim()) * hu), d.samples(), r.rows()).unwrap();
    (build_feasible_form_io(&d, &r, &q, &s).unwrap(), s, r, q)
}
