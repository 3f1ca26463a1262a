mod common;

use common::fixture;
use common::random::random_solenoidal;
use nsvi_core::diagnostics::{
    blockage_check, bv_estimate, energy_check, global_vi_residual, perturbation_structure_check, total_variation,
    Subcylinder, TestFunction, TestFunctionFamily, TestShape,
};
use nsvi_core::grid::{embedding_constants, poincare_constant, DualNormParams};
use nsvi_core::obstacle::build_ladder;
use nsvi_core::stepper::run;
use nsvi_core::{CellMask, InitialPreset, SimulationConfig, TrajectoryRecord};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn single(cfg: &SimulationConfig, n: u64, members: Vec<TestFunction>) -> (TrajectoryRecord, f64, Vec<Vec<f64>>) {
    let rec = run(cfg, n).unwrap();
    let field = cfg.obstacle_field().unwrap();
    let lattice = cfg.lattice().unwrap();
    let ladder = build_ladder(&field, &[n], &lattice).unwrap();
    let family = TestFunctionFamily::new(members, &field, &lattice).unwrap();
    let rep = global_vi_residual(&rec, &family, cfg, &ladder.members[0], 1e-3).unwrap();
    let worst = rep.worst;
    (rec, worst, rep.members.into_iter().map(|m| m.residual).collect())
}

#[test]
fn zero_member_residual_is_the_work_form() {
    for name in ["free-flow", "lid-free-check"] {
        let sc = fixture(name);
        let cfg = &sc.config;
        let zero = TestFunction {
            name: "zero".into(),
            margin: 1.0,
            shape: TestShape::Zero,
        };
        let (rec, _, res) = single(cfg, sc.run_index(), vec![zero]);
        let grid = cfg.mac_grid().unwrap();
        let ledger = energy_check(&rec, cfg, poincare_constant(&grid).unwrap()).unwrap();
        let work = ledger.work_form.unwrap();
        assert_eq!(res[0].len(), work.len() - 1);
        for (r, w) in res[0].iter().zip(&work[1..]) {
            assert!((r - w).abs() <= 1e-10, "{name}: {r} vs {w}");
        }
        // The implicit steps dissipate: the work form is nonpositive.
        assert!(work.iter().all(|w| *w <= 1e-12), "{name}");
    }
}

#[test]
fn solution_sampled_into_the_family_has_no_residual() {
    let sc = fixture("lid-free-check");
    let cfg = &sc.config;
    let n = sc.run_index();
    let rec = run(cfg, n).unwrap();
    let member = TestFunction {
        name: "u_n".into(),
        margin: 1.0,
        shape: TestShape::Sampled {
            times: rec.times.clone(),
            states: rec.snapshots.clone(),
        },
    };
    let (_, worst, _) = single(cfg, n, vec![member]);
    assert!(worst.abs() <= 1e-12, "{worst}");
}

fn every_other(rec: &TrajectoryRecord) -> TrajectoryRecord {
    let mut out = rec.clone();
    let keep: Vec<usize> = (0..rec.snapshot_steps.len()).step_by(2).collect();
    out.snapshot_steps = keep.iter().map(|&w| rec.snapshot_steps[w]).collect();
    out.snapshots = keep.iter().map(|&w| rec.snapshots[w].clone()).collect();
    out
}

#[test]
fn total_variation_is_additive_and_dominates_coarser_partitions() {
    let sc = fixture("free-flow");
    let cfg = &sc.config;
    let rec = run(cfg, sc.run_index()).unwrap();
    let grid = cfg.mac_grid().unwrap();
    let mask = CellMask::rect(&grid, 4, 12, 4, 12).unwrap();
    let params = DualNormParams::default();
    let tv = |r: &TrajectoryRecord, a: f64, b: f64| total_variation(&grid, r, &mask, a, b, params).unwrap();
    let whole = tv(&rec, 0.0, 0.5);
    let split = tv(&rec, 0.0, 0.25) + tv(&rec, 0.25, 0.5);
    assert!((whole - split).abs() <= 1e-12 * whole, "{whole} vs {split}");
    let coarse = tv(&every_other(&rec), 0.0, 0.5);
    assert!(coarse > 0.0);
    assert!(coarse <= whole * (1.0 + 1e-3), "{coarse} > {whole}");
}

#[test]
fn free_flow_variation_is_stable_under_step_halving() {
    let sc = fixture("free-flow");
    let mut fine = sc.config.clone();
    fine.tau *= 0.5;
    let n = sc.run_index();
    let grid = sc.config.mac_grid().unwrap();
    let mask = CellMask::rect(&grid, 4, 12, 4, 12).unwrap();
    let params = DualNormParams::default();
    let a = total_variation(&grid, &run(&sc.config, n).unwrap(), &mask, 0.0, 0.5, params).unwrap();
    let b = total_variation(&grid, &run(&fine, n).unwrap(), &mask, 0.0, 0.5, params).unwrap();
    assert!((a - b).abs() <= 0.1 * a, "TV {a} vs {b}");
}

#[test]
fn stationary_run_has_no_variation() {
    let sc = fixture("free-flow");
    let mut cfg = sc.config.clone();
    cfg.initial = InitialPreset::Zero;
    let rec = run(&cfg, 8).unwrap();
    assert!(rec.snapshots.iter().all(|u| u.is_zero()));
    let grid = cfg.mac_grid().unwrap();
    let mask = CellMask::rect(&grid, 2, 14, 2, 14).unwrap();
    let tv = total_variation(&grid, &rec, &mask, 0.0, 0.5, DualNormParams::default()).unwrap();
    assert_eq!(tv, 0.0);
}

#[test]
fn blockage_decays_monotonically_and_stays_zero() {
    let sc = fixture("total-blockage");
    let rec = run(&sc.config, sc.run_index()).unwrap();
    let rep = blockage_check(&rec, &sc.config).unwrap();
    assert!(rep.applicable && rep.monotone);
    assert_eq!(rep.pass, Some(true), "max after t0 + tau: {}", rep.max_after);
    assert!(rep.max_after_reopen.unwrap() <= 1e-8);
    let rep = blockage_check(&rec, &fixture("free-flow").config).unwrap();
    assert_eq!(rep.pass, None);
}

#[test]
fn bv_rejects_a_subcylinder_across_the_throat() {
    let mut sc = fixture("narrowing-channel");
    sc.config.grid.nx = 16;
    sc.config.grid.ny = 16;
    sc.config.tau = 1.0 / 64.0;
    sc.config.horizon = 0.25;
    let cfg = &sc.config;
    let grid = cfg.mac_grid().unwrap();
    let rec = run(cfg, 8).unwrap();
    let constants = embedding_constants(&grid, 1).unwrap();
    let sub = Subcylinder {
        mask: CellMask::rect(&grid, 6, 10, 0, 16).unwrap(),
        t1: 0.0,
        t1p: 0.25,
    };
    let err = bv_estimate(&[rec.clone()], cfg, &sub, 0.5, &constants, DualNormParams::default()).unwrap_err();
    assert!(err.to_string().contains("offending cells"), "{err}");
    let sub = Subcylinder {
        mask: CellMask::rect(&grid, 1, 4, 3, 13).unwrap(),
        t1: 0.0,
        t1p: 0.25,
    };
    let rep = bv_estimate(&[rec], cfg, &sub, 0.5, &constants, DualNormParams::default()).unwrap();
    assert!(rep.ok(), "{} > {}", rep.max_tv(), rep.m_kappa);
}

#[test]
fn perturbation_split_holds_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let grid = nsvi_core::MacGrid::unit(12).unwrap();
    for _ in 0..50 {
        let v = random_solenoidal(&grid, &mut rng, false);
        let w = random_solenoidal(&grid, &mut rng, true);
        let rep = perturbation_structure_check(&grid, &v, &w).unwrap();
        assert!(rep.ok(), "{rep:?}");
    }
}
