mod common;

use std::sync::OnceLock;

use felt_core::bernstein::{basis, Period, SieveCoefficients};
use felt_core::panel::{
    rank_transform, read_panel, standardize_covariates, write_panel, PanelSchema,
    StandardizeOptions,
};
use felt_core::pipeline::{summarize_estimate, PipelineConfig};
use felt_core::qp::{solve_qp, QpProblem};
use felt_core::sieve_gmm::{
    build_moments, estimate, EstimateOptions, GmmEstimate, MomentSystem, Weighting,
};
use felt_core::synth::{generate, DgpConfig, Simulated};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_dgp_s() -> &'static Simulated {
    static SIM: OnceLock<Simulated> = OnceLock::new();
    SIM.get_or_init(|| generate(&DgpConfig::dgp_s(400, 21)).unwrap())
}

fn small_system() -> &'static MomentSystem {
    static SYS: OnceLock<MomentSystem> = OnceLock::new();
    SYS.get_or_init(|| build_moments(&small_dgp_s().panel, 4, Weighting::Identity).unwrap())
}

fn small_fit() -> &'static GmmEstimate {
    static EST: OnceLock<GmmEstimate> = OnceLock::new();
    EST.get_or_init(|| estimate(&small_dgp_s().panel, 6, &EstimateOptions::default()).unwrap())
}

/// Coefficients that are non-decreasing in k at every z in the box.
fn monotone_coeffs(degree: usize, steps: &[f64], start: f64) -> SieveCoefficients {
    let mut c = SieveCoefficients::zeros(degree, 0);
    for t in Period::BOTH {
        let mut v = start;
        for k in 0..=degree {
            c.beta[t.index()][0][k] = v;
            v += steps[k % steps.len()];
        }
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn qp_solutions_certified_and_match_reference(seed in any::<u64>()) {
        let bq = common::random_box_qp(&mut ChaCha8Rng::seed_from_u64(seed));
        let sol = solve_qp(&bq.problem).unwrap();
        prop_assert!(sol.certified(1e-8), "{sol:?}");
        let reference = common::projected_gradient(&bq);
        prop_assert!((sol.objective - bq.problem.objective(&reference)).abs() <= 1e-6);
    }

    #[test]
    fn qp_argmin_unchanged_by_joint_scaling(seed in any::<u64>()) {
        let bq = common::random_box_qp(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = solve_qp(&bq.problem).unwrap();
        let p = &bq.problem;
        let scaled = QpProblem::new(&p.q * 10.0, &p.c * 10.0)
            .with_inequalities(p.a_in.clone(), p.b_in.clone());
        let b = solve_qp(&scaled).unwrap();
        prop_assert!((&a.theta - &b.theta).amax() <= 1e-8);
    }

    #[test]
    fn basis_partitions_unity(u in 0.0f64..=1.0, degree in 1usize..=12) {
        let b = basis(u, degree).unwrap();
        prop_assert!(b.iter().all(|&v| v >= 0.0));
        prop_assert!((b.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn sieve_interpolates_endpoints(degree in 1usize..=12, coefs in prop::collection::vec(-5.0f64..5.0, 13)) {
        let mut c = SieveCoefficients::zeros(degree, 0);
        c.beta[0][0].copy_from_slice(&coefs[..=degree]);
        prop_assert!((c.eval(Period::First, 0.0, &[1.0]).unwrap() - coefs[0]).abs() <= 1e-12);
        prop_assert!((c.eval(Period::First, 1.0, &[1.0]).unwrap() - coefs[degree]).abs() <= 1e-12);
    }

    #[test]
    fn monotone_coefficients_give_monotone_curves(
        degree in 1usize..=12,
        steps in prop::collection::vec(0.0f64..2.0, 1..6),
        start in -3.0f64..3.0,
    ) {
        let c = monotone_coeffs(degree, &steps, start);
        let vals: Vec<f64> = (0..1000).map(|j| c.eval(Period::Second, j as f64 / 999.0, &[1.0]).unwrap()).collect();
        prop_assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn inversion_round_trips(
        degree in 1usize..=12,
        steps in prop::collection::vec(0.05f64..2.0, 1..6),
        u in 0.0f64..=1.0,
    ) {
        let c = monotone_coeffs(degree, &steps, -1.0);
        let y = c.eval(Period::First, u, &[1.0]).unwrap();
        let back = c.invert(Period::First, y, &[1.0]).unwrap();
        prop_assert!((back - u).abs() <= 1e-8, "{u} -> {y} -> {back}");
    }

    #[test]
    fn ranks_ignore_increasing_maps(values in prop::collection::vec(-50.0f64..50.0, 2..60)) {
        let (_, a) = rank_transform(&values).unwrap();
        let mapped: Vec<f64> = values.iter().map(|v| v * v * v + 2.0 * v).collect();
        let (_, b) = rank_transform(&mapped).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn moments_ignore_common_location_profiles(
        theta_seed in prop::collection::vec(-2.0f64..2.0, 20),
        delta in prop::collection::vec(-5.0f64..5.0, 2),
    ) {
        let sys = small_system();
        let theta = DVector::from_vec(theta_seed);
        let mut c = SieveCoefficients::from_flat(sys.degree, sys.covariates, theta.as_slice()).unwrap();
        let before = sys.moments(&theta);
        c.shift_profile(&delta);
        let after = sys.moments(&DVector::from_vec(c.to_flat()));
        let scale = before.amax().max(1.0);
        prop_assert!((&before - &after).amax() <= 1e-12 * scale);
    }

    #[test]
    fn summaries_ignore_location_profiles(delta in prop::collection::vec(-3.0f64..3.0, 2)) {
        let p = &small_dgp_s().panel;
        let cfg = PipelineConfig::default();
        let base = summarize_estimate(small_fit(), p, &cfg).unwrap();
        let mut moved = small_fit().clone();
        moved.coeffs.shift_profile(&delta);
        let f = summarize_estimate(&moved, p, &cfg).unwrap();
        for ((_, a), (_, b)) in base.statistics().iter().zip(f.statistics()) {
            match (a, b) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-10),
                (a, b) => prop_assert_eq!(a.is_some(), b.is_some()),
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn panel_csv_round_trip_is_exact(seed in 0u64..1000, n in 3usize..40) {
        let sim = generate(&DgpConfig::dgp_s(n, seed)).unwrap();
        let mut buf = Vec::new();
        write_panel(&sim.panel, &mut buf).unwrap();
        let loaded = read_panel(buf.as_slice(), &PanelSchema::default()).unwrap();
        prop_assert!(loaded.rejected.is_empty());
        let mut again = Vec::new();
        write_panel(&loaded.panel, &mut again).unwrap();
        prop_assert_eq!(&buf, &again);
        for t in 1..=2 {
            prop_assert_eq!(loaded.panel.y(t), sim.panel.y(t));
            prop_assert_eq!(loaded.panel.x(t), sim.panel.x(t));
        }
    }

    #[test]
    fn standardizing_twice_changes_nothing(seed in 0u64..1000) {
        let sim = generate(&DgpConfig::dgp_s(50, seed)).unwrap();
        // stretch the covariate so the first pass has work to do
        let raw = sim.panel.covariates() * 7.0;
        let p = &sim.panel;
        let stretched = felt_core::panel::Panel::new(
            (0..p.n()).map(|i| i.to_string()).collect(),
            p.y(1).to_vec(), p.y(2).to_vec(), p.x(1).to_vec(), p.x(2).to_vec(),
            raw, vec!["z1".into()],
        ).unwrap();
        let opts = StandardizeOptions::default();
        let once = standardize_covariates(&stretched, &opts).unwrap().panel;
        let twice = standardize_covariates(&once, &opts).unwrap().panel;
        prop_assert!((once.covariates() - twice.covariates()).amax() <= 1e-12);
    }
}
