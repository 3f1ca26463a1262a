//! Small step problems spanning the inactive, partially active and
//! saturated obstacle regimes.

use std::f64::consts::PI;

use nsvi_core::grid::{cell_vectors, MacGrid};
use nsvi_core::vi_step::solve_step;
use nsvi_core::{SplitParams, StepProblem, VectorField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{max_diff, projected_gradient_step};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regime {
    Inactive,
    Partial,
    Saturated,
}

pub struct Instance {
    pub name: String,
    pub grid: MacGrid,
    pub prob: StepProblem,
    pub regime: Regime,
}

fn swirl(grid: &MacGrid, amp: f64, phase: f64) -> VectorField {
    let (lx, ly) = (grid.lx(), grid.ly());
    VectorField::from_stream(grid, |x, y| {
        amp * ((PI * x / lx).sin() * (PI * y / ly).sin()).powi(2) * (1.0 + 0.3 * (2.0 * PI * x / lx + phase).cos())
    })
}

fn forcing(grid: &MacGrid, amp: f64) -> VectorField {
    VectorField::from_fn(grid, |x, y| (amp * (PI * y).sin(), amp * (PI * x).cos()))
}

fn rotation(grid: &MacGrid, amp: f64) -> VectorField {
    let (cx, cy) = (grid.lx() / 2.0, grid.ly() / 2.0);
    VectorField::from_fn(grid, |x, y| (-amp * (y - cy), amp * (x - cx)))
}

/// Small step problems spanning the three obstacle regimes.
pub fn corpus() -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let grids = [
        MacGrid::unit(6).unwrap(),
        MacGrid::unit(8).unwrap(),
        MacGrid::unit(10).unwrap(),
        MacGrid::new(10, 8, 1.25, 1.0).unwrap(),
    ];
    let mut out = Vec::new();
    for (gi, grid) in grids.iter().enumerate() {
        let cells = grid.num_cells();
        for (regime, p_lo, p_hi) in [
            (Regime::Inactive, 50.0, 60.0),
            (Regime::Partial, 0.15, 0.6),
            (Regime::Saturated, 0.01, 0.012),
        ] {
            for rep in 0..2 {
                let amp = rng.gen_range(0.5..2.0);
                let prob = StepProblem {
                    u_prev: swirl(grid, amp, rng.gen_range(0.0..PI)),
                    p_slice: (0..cells).map(|_| rng.gen_range(p_lo..p_hi)).collect(),
                    g_slice: match regime {
                        Regime::Saturated => rotation(grid, rng.gen_range(20.0..40.0)),
                        _ => forcing(grid, rng.gen_range(0.0..2.0)),
                    },
                    nu: rng.gen_range(0.01..0.2),
                    tau: rng.gen_range(0.02..0.2),
                };
                out.push(Instance {
                    name: format!("grid{gi}-{regime:?}-{rep}"),
                    grid: *grid,
                    prob,
                    regime,
                });
            }
        }
    }
    out
}

/// `(max difference, active fraction)` of one instance.
pub fn compare(inst: &Instance) -> (f64, f64) {
    let params = SplitParams {
        feas_tol: 1e-11,
        kkt_tol: 1e-11,
        max_iter: 200_000,
        ..SplitParams::default()
    };
    let sol = solve_step(&inst.grid, &inst.prob, &params).expect("step converges");
    let oracle = projected_gradient_step(&inst.grid, &inst.prob, 1e-10, 100_000);
    assert!(oracle.increment <= 1e-10, "{}: oracle stalled at {:e}", inst.name, oracle.increment);
    let speeds = cell_vectors(&inst.grid, &oracle.u);
    let active = speeds
        .iter()
        .zip(&inst.prob.p_slice)
        .filter(|(c, p)| c[0].hypot(c[1]) >= **p * (1.0 - 1e-6))
        .count();
    (max_diff(&sol.u, &oracle.u), active as f64 / speeds.len() as f64)
}
