mod common;

use common::*;
use informa::data_model::{build_state_matrices, check_noise_bound, InstrumentSpec};
use informa::experiments::{benchmark_system, generate_state_dataset, NoiseModel};
use informa::linalg::{self, Mat};
use informa::verification::sample_members;
use proptest::prelude::*;

fn dataset(seed: u64, n_data: usize, radius_sq: f64) -> informa::data_model::Trajectory {
    let (a0, b0, _) = benchmark_system();
    generate_state_dataset(&a0, &b0, &NoiseModel::BallUniform { radius_sq }, 1.0, 3, n_data, seed).unwrap().trajectory
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Membership of θ is the noise bound on its residual.
    #[test]
    fn membership_is_residual_bound(seed in 0u64..10_000, n_data in 6usize..40, hu in 0.05f64..1.0, scale in 0.0f64..0.3, lagged in any::<bool>()) {
        let traj = dataset(seed, n_data, 0.35);
        let spec = if lagged { InstrumentSpec::lagged(3) } else { InstrumentSpec::Identity };
        let (f, r, q) = state_form(&traj, &spec, hu);
        let d = build_state_matrices(&traj).unwrap();
        let (a0, b0, _) = benchmark_system();
        let mut g = rng(seed);
        let theta = linalg::hstack(&[&a0, &b0]) + gaussian(3, 5, &mut g) * scale;
        let phi = linalg::vstack(&[&d.xm, &d.um]);
        let residual = &d.xp - &theta * &phi;
        let direct = check_noise_bound(&residual, &r, &q).unwrap();
        let margin = linalg::min_sym_eigenvalue(&f.quad_form(&theta).unwrap());
        // Skip the boundary where the two tolerances may legitimately disagree.
        prop_assume!(margin.abs() > 1e-7 * (1.0 + f.lambda.amax()));
        prop_assert_eq!(f.contains(&theta).unwrap(), direct);
    }

    #[test]
    fn lambda_is_symmetric(seed in 0u64..10_000, n_data in 4usize..40, hu in 0.01f64..2.0) {
        let (f, _, _) = state_form(&dataset(seed, n_data, 0.35), &InstrumentSpec::lagged(2), hu);
        prop_assert_eq!(f.lambda.clone(), f.lambda.transpose());
    }

    #[test]
    fn sampled_members_are_members(seed in 0u64..10_000, n_data in 15usize..60) {
        let (f, _, _) = state_form(&dataset(seed, n_data, 0.05), &InstrumentSpec::Identity, 0.05);
        prop_assume!(f.rank_flag && f.contains(&f.center()).unwrap());
        for theta in sample_members(&f, &f.center(), 10, seed).unwrap() {
            prop_assert!(f.contains(&theta).unwrap());
        }
    }

    #[test]
    fn generation_is_deterministic(seed in 0u64..10_000, n_data in 1usize..30) {
        prop_assert_eq!(dataset(seed, n_data, 0.35), dataset(seed, n_data, 0.35));
        let other: Mat = dataset(seed + 1, n_data, 0.35).inputs().clone();
        prop_assert_ne!(dataset(seed, n_data, 0.35).inputs().clone(), other);
    }
}
