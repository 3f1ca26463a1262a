mod common;

use common::random::{random_faces, random_solenoidal, speeds};
use nsvi_core::grid::{cell_vectors, norm_l2, MacGrid};
use nsvi_core::vi_step::{ball_project, energy_step_defect, solve_step};
use nsvi_core::{SplitParams, StepProblem};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn ball_projection_is_nonexpansive(
        a in prop::array::uniform2(-10.0..10.0f64),
        b in prop::array::uniform2(-10.0..10.0f64),
        r in 0.0..5.0f64,
    ) {
        let (pa, pb) = (ball_project(a, r).unwrap(), ball_project(b, r).unwrap());
        let d = (a[0] - b[0]).hypot(a[1] - b[1]);
        prop_assert!((pa[0] - pb[0]).hypot(pa[1] - pb[1]) <= d + 1e-12);
        prop_assert!(pa[0].hypot(pa[1]) <= r * (1.0 + 1e-15));
        let again = ball_project(pa, r).unwrap();
        prop_assert!((again[0] - pa[0]).hypot(again[1] - pa[1]) <= 1e-15 * (1.0 + r));
    }

    #[test]
    fn step_operator_is_monotone(seed in any::<u64>(), nu in 0.001..1.0f64, tau in 0.001..1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = MacGrid::unit(8).unwrap();
        let prob = StepProblem {
            u_prev: random_faces(&grid, &mut rng).scaled(10.0),
            p_slice: vec![1.0; 64],
            g_slice: random_faces(&grid, &mut rng),
            nu,
            tau,
        };
        let (v, w) = (random_faces(&grid, &mut rng), random_faces(&grid, &mut rng));
        let d = v.sub(&w);
        let lhs = prob.apply_operator(&grid, &v).sub(&prob.apply_operator(&grid, &w)).dot(&d);
        let l2 = norm_l2(&grid, &d).unwrap();
        prop_assert!(lhs >= l2 * l2 / tau * (1.0 - 1e-12), "{} < {}", lhs, l2 * l2 / tau);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn step_solution_is_complementary_and_dissipative(seed in any::<u64>(), cap in 0.05..2.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = MacGrid::unit(8).unwrap();
        let u_prev = random_solenoidal(&grid, &mut rng, false);
        let peak = speeds(&grid, &u_prev).into_iter().fold(0.0, f64::max);
        let prob = StepProblem {
            u_prev: u_prev.scaled(cap / peak.max(1e-300)),
            p_slice: vec![cap; 64],
            g_slice: random_solenoidal(&grid, &mut rng, false),
            nu: 0.05,
            tau: 0.05,
        };
        let params = SplitParams::default();
        let sol = solve_step(&grid, &prob, &params).unwrap();
        let sp: Vec<f64> = cell_vectors(&grid, &sol.u).iter().map(|c| c[0].hypot(c[1])).collect();
        let scale = 1.0 + sol.radial_multiplier.iter().copied().fold(0.0, f64::max);
        for ((s, p), l) in sp.iter().zip(&prob.p_slice).zip(&sol.radial_multiplier) {
            prop_assert!(*s <= p + params.feas_tol);
            prop_assert!(*l >= 0.0);
            prop_assert!(l * (p - s) <= 1e-6 * scale, "{} * {}", l, p - s);
        }
        let defect = energy_step_defect(&grid, &prob, &sol.u).unwrap();
        prop_assert!(defect <= params.kkt_tol, "{}", defect);
    }
}
