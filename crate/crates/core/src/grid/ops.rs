//! Discrete differential operators on the MAC layout.

use super::{MacGrid, ScalarField, VectorField};
use crate::error::{Error, Result};

/// Cell-centered divergence.
pub fn divergence(grid: &MacGrid, v: &VectorField) -> Result<ScalarField> {
    v.check(grid)?;
    let h = grid.h();
    let mut out = ScalarField::zeros(grid);
    for (i, j) in grid.cells() {
        out.values[grid.cell(i, j)] = (v.u[grid.u_idx(i + 1, j)] - v.u[grid.u_idx(i, j)]
            + v.v[grid.v_idx(i, j + 1)]
            - v.v[grid.v_idx(i, j)])
            / h;
    }
    Ok(out)
}

/// Face gradient of a cell scalar; zero on boundary faces.
pub fn gradient(grid: &MacGrid, phi: &ScalarField) -> Result<VectorField> {
    if phi.values.len() != grid.num_cells() {
        return Err(Error::Shape {
            expected: format!("{} cells", grid.num_cells()),
            got: format!("{}", phi.values.len()),
        });
    }
    let h = grid.h();
    let mut out = VectorField::zeros(grid);
    for j in 0..grid.ny() {
        for i in 1..grid.nx() {
            out.u[grid.u_idx(i, j)] =
                (phi.values[grid.cell(i, j)] - phi.values[grid.cell(i - 1, j)]) / h;
        }
    }
    for j in 1..grid.ny() {
        for i in 0..grid.nx() {
            out.v[grid.v_idx(i, j)] =
                (phi.values[grid.cell(i, j)] - phi.values[grid.cell(i, j - 1)]) / h;
        }
    }
    Ok(out)
}

/// Velocity vectors reconstructed at cell centers by averaging opposite faces.
pub fn cell_vectors(grid: &MacGrid, v: &VectorField) -> Vec<[f64; 2]> {
    grid.cells()
        .map(|(i, j)| {
            [
                0.5 * (v.u[grid.u_idx(i, j)] + v.u[grid.u_idx(i + 1, j)]),
                0.5 * (v.v[grid.v_idx(i, j)] + v.v[grid.v_idx(i, j + 1)]),
            ]
        })
        .collect()
}

/// Adjoint of [`cell_vectors`] with respect to the Euclidean dot products.
pub fn cell_vectors_transpose(grid: &MacGrid, c: &[[f64; 2]]) -> VectorField {
    let mut out = VectorField::zeros(grid);
    for (i, j) in grid.cells() {
        let [cu, cv] = c[grid.cell(i, j)];
        out.u[grid.u_idx(i, j)] += 0.5 * cu;
        out.u[grid.u_idx(i + 1, j)] += 0.5 * cu;
        out.v[grid.v_idx(i, j)] += 0.5 * cv;
        out.v[grid.v_idx(i, j + 1)] += 0.5 * cv;
    }
    out.enforce_boundary();
    out
}

/// Stiffness operator `K v = -h² Δ_h v` on interior faces, with mirrored
/// ghosts for the tangential no-slip condition. `v · K v = |v|²₁,₂`.
pub fn stiffness_apply(grid: &MacGrid, v: &VectorField) -> VectorField {
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut out = VectorField::zeros(grid);
    for j in 0..ny {
        for i in 1..nx {
            let c = v.u[grid.u_idx(i, j)];
            let e = v.u[grid.u_idx(i + 1, j)];
            let w = v.u[grid.u_idx(i - 1, j)];
            let n = if j + 1 < ny { v.u[grid.u_idx(i, j + 1)] } else { -c };
            let s = if j > 0 { v.u[grid.u_idx(i, j - 1)] } else { -c };
            out.u[grid.u_idx(i, j)] = 4.0 * c - e - w - n - s;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let c = v.v[grid.v_idx(i, j)];
            let n = v.v[grid.v_idx(i, j + 1)];
            let s = v.v[grid.v_idx(i, j - 1)];
            let e = if i + 1 < nx { v.v[grid.v_idx(i + 1, j)] } else { -c };
            let w = if i > 0 { v.v[grid.v_idx(i - 1, j)] } else { -c };
            out.v[grid.v_idx(i, j)] = 4.0 * c - e - w - n - s;
        }
    }
    out
}

/// Stopping rule for the pressure Poisson solve.
#[derive(Clone, Copy, Debug)]
pub struct PoissonParams {
    /// Target for the max-norm of the divergence left after projection.
    pub abs_tol: f64,
    /// Relative residual target (against the max-norm of the input divergence).
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for PoissonParams {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-14,
            max_iter: 50_000,
        }
    }
}

/// Orthogonal projection onto discrete divergence-free fields: `v - ∇φ`
/// where `div ∇φ = div v`.
pub fn leray_project(grid: &MacGrid, v: &VectorField) -> Result<VectorField> {
    leray_project_with(grid, v, PoissonParams::default()).map(|(p, _, _)| p)
}

/// Like [`leray_project`], also returning the potential and the CG iteration count.
pub fn leray_project_with(
    grid: &MacGrid,
    v: &VectorField,
    params: PoissonParams,
) -> Result<(VectorField, ScalarField, usize)> {
    let div = divergence(grid, v)?;
    let (phi, iters) = solve_neumann_poisson(grid, &div, params)?;
    let grad = gradient(grid, &phi)?;
    let mut out = v.sub(&grad);
    out.enforce_boundary();
    Ok((out, phi, iters))
}

/// `-L φ` for the cell-centered Neumann Laplacian (times h², so entries are O(1)).
fn neg_laplacian_scaled(grid: &MacGrid, phi: &[f64], out: &mut [f64]) {
    let (nx, ny) = (grid.nx(), grid.ny());
    for j in 0..ny {
        for i in 0..nx {
            let c = phi[grid.cell(i, j)];
            let mut acc = 0.0;
            if i > 0 {
                acc += c - phi[grid.cell(i - 1, j)];
            }
            if i + 1 < nx {
                acc += c - phi[grid.cell(i + 1, j)];
            }
            if j > 0 {
                acc += c - phi[grid.cell(i, j - 1)];
            }
            if j + 1 < ny {
                acc += c - phi[grid.cell(i, j + 1)];
            }
            out[grid.cell(i, j)] = acc;
        }
    }
}

fn remove_mean(x: &mut [f64]) {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= m);
}

/// Conjugate gradients for `div ∇φ = f` with mean-zero data and solution.
fn solve_neumann_poisson(
    grid: &MacGrid,
    f: &ScalarField,
    params: PoissonParams,
) -> Result<(ScalarField, usize)> {
    let n = grid.num_cells();
    let h2 = grid.h() * grid.h();
    // -L φ = -f, scaled by h².
    let mut b: Vec<f64> = f.values.iter().map(|x| -x * h2).collect();
    remove_mean(&mut b);
    let bnorm = b.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let target = (params.abs_tol * h2).max(params.rel_tol * bnorm);

    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let mut iters = 0;
    let max_abs = |r: &[f64]| r.iter().fold(0.0_f64, |m, x| m.max(x.abs()));

    while max_abs(&r) > target {
        if iters >= params.max_iter {
            return Err(Error::NonConvergence {
                what: "pressure Poisson CG",
                iterations: iters,
                residual: max_abs(&r) / h2,
            });
        }
        neg_laplacian_scaled(grid, &p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        iters += 1;
        // Periodically recompute the true residual to avoid drift.
        if iters % 50 == 0 {
            remove_mean(&mut x);
            neg_laplacian_scaled(grid, &x, &mut ap);
            for k in 0..n {
                r[k] = b[k] - ap[k];
            }
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
    }
    remove_mean(&mut x);
    Ok((
        ScalarField {
            values: x,
            ..ScalarField::zeros(grid)
        },
        iters,
    ))
}

/// Face addressing used by the advection stencil: `u` faces first, then `v` faces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Face {
    U(usize),
    V(usize),
}

fn face_get(f: &VectorField, id: Face) -> f64 {
    match id {
        Face::U(k) => f.u[k],
        Face::V(k) => f.v[k],
    }
}

fn face_add(f: &mut VectorField, id: Face, x: f64) {
    match id {
        Face::U(k) => f.u[k] += x,
        Face::V(k) => f.v[k] += x,
    }
}

/// Visits every nonzero entry `(row, col, coeff)` of the centered advection
/// matrix `B(a)`, where `(B(a) v)_f ≈ (a·∇) v` at face `f`. Boundary faces are
/// skipped since their values are identically zero.
fn visit_advection(grid: &MacGrid, a: &VectorField, mut visit: impl FnMut(Face, Face, f64)) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let s = 0.5 / grid.h();
    for j in 0..ny {
        for i in 1..nx {
            let row = Face::U(grid.u_idx(i, j));
            let au = a.u[grid.u_idx(i, j)];
            let av = 0.25
                * (a.v[grid.v_idx(i - 1, j)]
                    + a.v[grid.v_idx(i, j)]
                    + a.v[grid.v_idx(i - 1, j + 1)]
                    + a.v[grid.v_idx(i, j + 1)]);
            if i + 1 < nx {
                visit(row, Face::U(grid.u_idx(i + 1, j)), au * s);
            }
            if i > 1 {
                visit(row, Face::U(grid.u_idx(i - 1, j)), -au * s);
            }
            // Mirrored ghosts at the bottom and top walls.
            if j + 1 < ny {
                visit(row, Face::U(grid.u_idx(i, j + 1)), av * s);
            } else {
                visit(row, row, -av * s);
            }
            if j > 0 {
                visit(row, Face::U(grid.u_idx(i, j - 1)), -av * s);
            } else {
                visit(row, row, av * s);
            }
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let row = Face::V(grid.v_idx(i, j));
            let av = a.v[grid.v_idx(i, j)];
            let au = 0.25
                * (a.u[grid.u_idx(i, j - 1)]
                    + a.u[grid.u_idx(i + 1, j - 1)]
                    + a.u[grid.u_idx(i, j)]
                    + a.u[grid.u_idx(i + 1, j)]);
            if i + 1 < nx {
                visit(row, Face::V(grid.v_idx(i + 1, j)), au * s);
            } else {
                visit(row, row, -au * s);
            }
            if i > 0 {
                visit(row, Face::V(grid.v_idx(i - 1, j)), -au * s);
            } else {
                visit(row, row, au * s);
            }
            if j + 1 < ny {
                visit(row, Face::V(grid.v_idx(i, j + 1)), av * s);
            }
            if j > 1 {
                visit(row, Face::V(grid.v_idx(i, j - 1)), -av * s);
            }
        }
    }
}

/// Centered advective form `b̃(a, v, w) = (w, (a·∇)v)` with `h²` quadrature.
pub fn convection_form_advective(
    grid: &MacGrid,
    a: &VectorField,
    v: &VectorField,
    w: &VectorField,
) -> Result<f64> {
    a.check(grid)?;
    v.check(grid)?;
    w.check(grid)?;
    let mut acc = 0.0;
    visit_advection(grid, a, |row, col, c| {
        acc += face_get(w, row) * c * face_get(v, col);
    });
    Ok(acc * grid.h() * grid.h())
}

/// Skew-symmetric trilinear form `b(a, v, w) = ½[b̃(a, v, w) − b̃(a, w, v)]`.
///
/// `b(a, v, v)` vanishes identically, which is what makes the discrete energy
/// balance exact.
pub fn convection_form(
    grid: &MacGrid,
    a: &VectorField,
    v: &VectorField,
    w: &VectorField,
) -> Result<f64> {
    a.check(grid)?;
    v.check(grid)?;
    w.check(grid)?;
    let mut acc = 0.0;
    // Entry-wise antisymmetrization keeps b(a, v, v) exactly zero in floating point.
    visit_advection(grid, a, |row, col, c| {
        acc += c * (face_get(w, row) * face_get(v, col) - face_get(v, row) * face_get(w, col));
    });
    Ok(0.5 * grid.h() * grid.h() * acc)
}

/// The face vector `C(a) v` with `w · C(a) v = b(a, v, w)` for every `w`.
pub fn convection_apply(grid: &MacGrid, a: &VectorField, v: &VectorField) -> Result<VectorField> {
    a.check(grid)?;
    v.check(grid)?;
    let mut out = VectorField::zeros(grid);
    let half_h2 = 0.5 * grid.h() * grid.h();
    visit_advection(grid, a, |row, col, c| {
        // ½h² (B v − Bᵀ v)
        face_add(&mut out, row, half_h2 * c * face_get(v, col));
        face_add(&mut out, col, -half_h2 * c * face_get(v, row));
    });
    Ok(out)
}
