//! Midpoint-rule norms on the MAC layout.
//!
//! Gradients are evaluated where the differences naturally live: normal
//! derivatives at cell centers, tangential derivatives at cell corners (with
//! mirrored ghosts at the walls). The per-cell squared gradient of a component
//! is the normal derivative squared plus the average of the four corner values,
//! so that `h² Σ_c |∇v|²_c` coincides with the stiffness energy `v · K v`.

use super::ops::{cell_vectors, cell_vectors_transpose, stiffness_apply};
use super::{MacGrid, VectorField};
use crate::error::Result;

/// `(a, b)` with `h²` weights.
pub fn inner(grid: &MacGrid, a: &VectorField, b: &VectorField) -> f64 {
    grid.h() * grid.h() * a.dot(b)
}

/// `⟨a, b⟩ = ∫ ∇a : ∇b`.
pub fn stiffness_inner(grid: &MacGrid, a: &VectorField, b: &VectorField) -> f64 {
    stiffness_apply(grid, a).dot(b)
}

pub fn norm_l2(grid: &MacGrid, v: &VectorField) -> Result<f64> {
    v.check(grid)?;
    Ok(inner(grid, v, v).sqrt())
}

pub fn seminorm_h1(grid: &MacGrid, v: &VectorField) -> Result<f64> {
    v.check(grid)?;
    let s: f64 = cell_gradients(grid, v).iter().map(|g| g.u + g.v).sum();
    Ok((grid.h() * grid.h() * s).sqrt())
}

/// `|v|₁,₄ = (Σ_k ∫ |∇v⁽ᵏ⁾|⁴)^{1/4}`.
pub fn norm_w14(grid: &MacGrid, v: &VectorField) -> Result<f64> {
    v.check(grid)?;
    let s: f64 = cell_gradients(grid, v).iter().map(|g| g.u * g.u + g.v * g.v).sum();
    Ok((grid.h() * grid.h() * s).powf(0.25))
}

/// `|v|₀,₄` from the cell-center reconstruction.
pub fn norm_l4(grid: &MacGrid, v: &VectorField) -> Result<f64> {
    v.check(grid)?;
    let s: f64 = cell_vectors(grid, v)
        .iter()
        .map(|[a, b]| {
            let m = a * a + b * b;
            m * m
        })
        .sum();
    Ok((grid.h() * grid.h() * s).powf(0.25))
}

/// Largest reconstructed speed over the cell centers.
pub fn norm_linf(grid: &MacGrid, v: &VectorField) -> Result<f64> {
    v.check(grid)?;
    Ok(cell_vectors(grid, v)
        .iter()
        .fold(0.0_f64, |m, [a, b]| m.max(a.hypot(*b))))
}

/// `|v|⁴₁,₄` and its gradient with respect to the face values.
pub fn w14_pow4_grad(grid: &MacGrid, v: &VectorField) -> (f64, VectorField) {
    let h2 = grid.h() * grid.h();
    let grads = cell_gradients(grid, v);
    let value = h2 * grads.iter().map(|g| g.u * g.u + g.v * g.v).sum::<f64>();
    let mut out = VectorField::zeros(grid);
    // d/dz (G²) = 2 G dG/dz; G is a weighted sum of squared differences.
    for (i, j) in grid.cells() {
        let g = grads[grid.cell(i, j)];
        let wu = 2.0 * h2 * g.u;
        let wv = 2.0 * h2 * g.v;
        for_each_difference(grid, v, i, j, |comp, weight, d, terms| {
            let w = if comp == 0 { wu } else { wv };
            for &(face, c) in terms {
                let slot = if comp == 0 {
                    &mut out.u[face]
                } else {
                    &mut out.v[face]
                };
                *slot += w * weight * 2.0 * d * c;
            }
        });
    }
    out.enforce_boundary();
    (value, out)
}

/// Gradient of `|v|⁴₀,₄`.
pub(crate) fn l4_pow4_grad(grid: &MacGrid, v: &VectorField) -> (f64, VectorField) {
    let h2 = grid.h() * grid.h();
    let cells = cell_vectors(grid, v);
    let mut value = 0.0;
    let g: Vec<[f64; 2]> = cells
        .iter()
        .map(|[a, b]| {
            let m = a * a + b * b;
            value += m * m;
            [4.0 * h2 * m * a, 4.0 * h2 * m * b]
        })
        .collect();
    (h2 * value, cell_vectors_transpose(grid, &g))
}

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct CellGrad {
    /// `|∇u|²` at the cell.
    pub u: f64,
    /// `|∇v|²` at the cell.
    pub v: f64,
}

pub(crate) fn cell_gradients(grid: &MacGrid, v: &VectorField) -> Vec<CellGrad> {
    let mut out = vec![CellGrad::default(); grid.num_cells()];
    for (i, j) in grid.cells() {
        let mut g = CellGrad::default();
        for_each_difference(grid, v, i, j, |comp, weight, d, _| {
            if comp == 0 {
                g.u += weight * d * d;
            } else {
                g.v += weight * d * d;
            }
        });
        out[grid.cell(i, j)] = g;
    }
    out
}

/// Enumerates the difference quotients entering `|∇v⁽ᵏ⁾|²` at cell `(i, j)`:
/// `visit(component, weight, value, [(face, d value / d face)])`.
fn for_each_difference(
    grid: &MacGrid,
    f: &VectorField,
    i: usize,
    j: usize,
    mut visit: impl FnMut(usize, f64, f64, &[(usize, f64)]),
) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let ih = 1.0 / grid.h();

    // u: normal derivative at the center.
    let (a, b) = (grid.u_idx(i + 1, j), grid.u_idx(i, j));
    visit(0, 1.0, (f.u[a] - f.u[b]) * ih, &[(a, ih), (b, -ih)]);
    // u: tangential derivative at the corners (column i or i + 1, row j or j + 1).
    for col in [i, i + 1] {
        if col == 0 || col == nx {
            continue;
        }
        for row in [j, j + 1] {
            if row == 0 {
                let k = grid.u_idx(col, 0);
                visit(0, 0.25, 2.0 * f.u[k] * ih, &[(k, 2.0 * ih)]);
            } else if row == ny {
                let k = grid.u_idx(col, ny - 1);
                visit(0, 0.25, -2.0 * f.u[k] * ih, &[(k, -2.0 * ih)]);
            } else {
                let (a, b) = (grid.u_idx(col, row), grid.u_idx(col, row - 1));
                visit(0, 0.25, (f.u[a] - f.u[b]) * ih, &[(a, ih), (b, -ih)]);
            }
        }
    }

    // v: normal derivative at the center.
    let (a, b) = (grid.v_idx(i, j + 1), grid.v_idx(i, j));
    visit(1, 1.0, (f.v[a] - f.v[b]) * ih, &[(a, ih), (b, -ih)]);
    for row in [j, j + 1] {
        if row == 0 || row == ny {
            continue;
        }
        for col in [i, i + 1] {
            if col == 0 {
                let k = grid.v_idx(0, row);
                visit(1, 0.25, 2.0 * f.v[k] * ih, &[(k, 2.0 * ih)]);
            } else if col == nx {
                let k = grid.v_idx(nx - 1, row);
                visit(1, 0.25, -2.0 * f.v[k] * ih, &[(k, -2.0 * ih)]);
            } else {
                let (a, b) = (grid.v_idx(col, row), grid.v_idx(col - 1, row));
                visit(1, 0.25, (f.v[a] - f.v[b]) * ih, &[(a, ih), (b, -ih)]);
            }
        }
    }
}
