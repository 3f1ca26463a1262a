//! Lower estimates of `|f|₋₁,₄⁄₃` restricted to solenoidal fields on a subdomain.

use super::norms::w14_pow4_grad;
use super::ops::stiffness_apply;
use super::{CellMask, MacGrid, NodeSpace, StreamOperator, VectorField};
use crate::error::Result;

#[derive(Clone, Copy, Debug)]
pub struct DualNormParams {
    pub max_iter: usize,
    /// Stop once the ratio improves by less than this (relative) per iteration.
    pub tol: f64,
}

impl Default for DualNormParams {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualNormEstimate {
    /// `⟨f, z⟩ / |z|₁,₄` at the final iterate; a lower bound of the dual norm.
    pub value: f64,
    /// Relative increase of the ratio in the last accepted step.
    pub rel_increment: f64,
    pub iterations: usize,
}

/// `sup ⟨f, z⟩ / |z|₁,₄` over solenoidal `z` supported in `mask`.
///
/// The ascent runs in stream-function coordinates, starting from the
/// orthogonal projection of `f` onto the feasible set.
pub fn dual_norm_w_star(
    grid: &MacGrid,
    f: &VectorField,
    mask: &CellMask,
    params: DualNormParams,
) -> Result<DualNormEstimate> {
    f.check(grid)?;
    let space = NodeSpace::from_mask(grid, mask)?;
    let h2 = grid.h() * grid.h();
    let lin: Vec<f64> = space
        .curl_transpose(grid, f)
        .into_iter()
        .map(|x| h2 * x)
        .collect();
    if lin.iter().all(|&x| x == 0.0) {
        return Ok(DualNormEstimate {
            value: 0.0,
            rel_increment: 0.0,
            iterations: 0,
        });
    }
    let mass = StreamOperator::assemble(grid, &space, |z| z.clone())?;
    let x0 = mass.solve(&lin);
    let stiff = StreamOperator::assemble(grid, &space, |z| stiffness_apply(grid, z))?;
    Ok(linear_over_w14(grid, &space, &stiff, &lin, x0, params))
}

/// Maximizes `lin·ψ / |Curl ψ|₁,₄` from `x0` (which must have `lin·x0 > 0`),
/// preconditioned by the factored stiffness of `space`.
pub(crate) fn linear_over_w14(
    grid: &MacGrid,
    space: &NodeSpace,
    stiff: &StreamOperator,
    lin: &[f64],
    x0: Vec<f64>,
    params: DualNormParams,
) -> DualNormEstimate {
    let objective = |x: &[f64]| {
        let l = dot(lin, x);
        let (w4, wg) = w14_pow4_grad(grid, &space.curl(grid, x));
        if !(l > 0.0 && w4 > 0.0) {
            return (f64::NEG_INFINITY, vec![0.0; x.len()]);
        }
        let wg = space.curl_transpose(grid, &wg);
        let g = lin
            .iter()
            .zip(&wg)
            .map(|(a, b)| a / l - 0.25 * b / w4)
            .collect();
        (l.ln() - 0.25 * w4.ln(), g)
    };
    let out = ascend(x0, objective, |g| stiff.solve(g), params.max_iter, params.tol);
    let z = space.curl(grid, &out.x);
    let (w4, _) = w14_pow4_grad(grid, &z);
    DualNormEstimate {
        value: dot(lin, &out.x) / w4.powf(0.25),
        rel_increment: out.rel_increment,
        iterations: out.iterations,
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) struct Ascent {
    pub x: Vec<f64>,
    pub value: f64,
    pub rel_increment: f64,
    pub iterations: usize,
}

/// Monotone preconditioned gradient ascent with Barzilai–Borwein trial steps
/// and Armijo backtracking, for scale-invariant objectives (log of a
/// 0-homogeneous ratio). `precond` maps a gradient to an ascent direction.
pub(crate) fn ascend(
    x0: Vec<f64>,
    f: impl Fn(&[f64]) -> (f64, Vec<f64>),
    precond: impl Fn(&[f64]) -> Vec<f64>,
    max_iter: usize,
    tol: f64,
) -> Ascent {
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut d = precond(&g);
    let mut gd = dot(&g, &d);
    let mut step = 0.1 * dot(&x, &x).sqrt() / dot(&d, &d).sqrt().max(f64::MIN_POSITIVE);
    let mut rel_increment = f64::INFINITY;
    let mut small = 0;
    let mut iterations = 0;
    while iterations < max_iter && gd > 0.0 && fx.is_finite() {
        iterations += 1;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let (ft, gt) = f(&trial);
            if ft.is_finite() && ft >= fx + 1e-4 * step * gd {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            rel_increment = 0.0;
            break;
        };
        // BB step in the preconditioned metric: s = step·d, P⁻¹s = step·g.
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = step * dot(&d, &y);
        let sps = step * step * gd;
        step = if sy < 0.0 {
            (sps / -sy).min(1e3 * step)
        } else {
            2.0 * step
        };
        rel_increment = (fnew - fx).exp_m1();
        x = xn;
        fx = fnew;
        g = gnew;
        d = precond(&g);
        gd = dot(&g, &d);
        if rel_increment < tol {
            small += 1;
            if small >= 3 {
                break;
            }
        } else {
            small = 0;
        }
    }
    Ascent {
        x,
        value: fx,
        rel_increment: if rel_increment.is_finite() {
            rel_increment
        } else {
            0.0
        },
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::norm_w14;

    fn smooth(grid: &MacGrid) -> VectorField {
        VectorField::from_fn(grid, |x, y| ((3.0 * x).sin() + y, (x * y).cos()))
    }

    #[test]
    fn zero_and_homogeneity() {
        let g = MacGrid::unit(8).unwrap();
        let m = CellMask::rect(&g, 1, 7, 1, 7).unwrap();
        let z = dual_norm_w_star(&g, &VectorField::zeros(&g), &m, Default::default()).unwrap();
        assert_eq!(z.value, 0.0);
        let f = smooth(&g);
        let a = dual_norm_w_star(&g, &f, &m, Default::default()).unwrap();
        let b = dual_norm_w_star(&g, &f.scaled(3.0), &m, Default::default()).unwrap();
        assert!(a.value > 0.0);
        assert!((b.value - 3.0 * a.value).abs() < 1e-8 * b.value, "{} {}", a.value, b.value);
    }

    #[test]
    fn pairing_bound_on_feasible_fields() {
        let g = MacGrid::unit(8).unwrap();
        let m = CellMask::rect(&g, 1, 6, 2, 7).unwrap();
        let f = smooth(&g);
        let d = dual_norm_w_star(&g, &f, &m, Default::default()).unwrap();
        let s = NodeSpace::from_mask(&g, &m).unwrap();
        for k in 0..20 {
            let psi: Vec<f64> = (0..s.len()).map(|i| ((i * 7 + k * 13) as f64).sin()).collect();
            let z = s.curl(&g, &psi);
            let pairing = crate::grid::inner(&g, &f, &z);
            assert!(pairing <= d.value * norm_w14(&g, &z).unwrap() * (1.0 + 1e-6));
        }
    }

    #[test]
    fn degenerate_subdomain_is_rejected() {
        let g = MacGrid::unit(8).unwrap();
        let m = CellMask::rect(&g, 0, 1, 0, 8).unwrap();
        assert!(dual_norm_w_star(&g, &smooth(&g), &m, Default::default()).is_err());
    }
}
