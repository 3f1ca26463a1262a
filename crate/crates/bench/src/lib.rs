//! Shared inputs for the benchmarks.

use std::f64::consts::PI;

use nsvi_core::grid::MacGrid;
use nsvi_core::{StepProblem, VectorField};

/// A wall-compatible vortex of peak speed about `amp / 4`.
pub fn vortex(grid: &MacGrid, amp: f64) -> VectorField {
    VectorField::from_stream(grid, |x, y| {
        amp * ((PI * x).sin() * (PI * y).sin()).powi(2) / 4.0
    })
}

/// One implicit step of the vortex under a uniform cap `p`.
pub fn step_problem(grid: &MacGrid, amp: f64, p: f64) -> StepProblem {
    StepProblem {
        u_prev: vortex(grid, amp),
        p_slice: vec![p; grid.num_cells()],
        g_slice: VectorField::zeros(grid),
        nu: 0.05,
        tau: 0.05,
    }
}
