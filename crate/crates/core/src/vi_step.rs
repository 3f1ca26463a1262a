//! One implicit step of the obstacle-constrained flow.
//!
//! With convection frozen at `u_prev`, the step is the monotone linear VI
//!
//! ```text
//! find u ∈ K:  (A u − f, u − z) ≤ 0  for all z ∈ K,
//! A = (h²/τ) I + ν K + C(u_prev),   f = (h²/τ) u_prev + h² g,
//! K = { div z = 0, |R z|_c ≤ p_c at every cell }.
//! ```
//!
//! The divergence constraint is removed by the stream-function change of
//! variables. The pointwise constraint is handled by an over-relaxed ADMM
//! splitting with the consensus variable `y = R u` (cell-center vectors):
//! a banded solve with `A + ρh² RᵀR`, a cellwise ball projection and a scaled
//! dual update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    cell_vectors, cell_vectors_transpose, convection_apply, divergence, leray_project_with,
    seminorm_h1, stiffness_apply, MacGrid, NodeSpace, PoissonParams, ScalarField, StreamOperator,
    VectorField,
};
use crate::obstacle::Extended;

/// Euclidean projection onto the closed ball of radius `radius`.
pub fn ball_project(v: [f64; 2], radius: f64) -> Result<[f64; 2]> {
    if !(radius >= 0.0) {
        return Err(Error::domain(format!("ball radius must be >= 0, got {radius}")));
    }
    let norm = v[0].hypot(v[1]);
    if norm <= radius {
        return Ok(v);
    }
    Ok([v[0] * radius / norm, v[1] * radius / norm])
}

/// Data of one implicit step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepProblem {
    pub u_prev: VectorField,
    /// `p_n(·, t_{k+1})` at the cell centers.
    pub p_slice: Vec<f64>,
    /// `g(·, t_{k+1})`.
    pub g_slice: VectorField,
    pub nu: f64,
    pub tau: f64,
}

impl StepProblem {
    fn validate(&self, grid: &MacGrid) -> Result<()> {
        self.u_prev.check(grid)?;
        self.g_slice.check(grid)?;
        if self.p_slice.len() != grid.num_cells() {
            return Err(Error::Shape {
                expected: format!("{} obstacle values", grid.num_cells()),
                got: self.p_slice.len().to_string(),
            });
        }
        if let Some(p) = self.p_slice.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
            return Err(Error::domain(format!(
                "step obstacle values must be finite and > 0, found {p}"
            )));
        }
        if !(self.nu > 0.0 && self.tau > 0.0) {
            return Err(Error::domain("step needs nu > 0 and tau > 0"));
        }
        Ok(())
    }

    /// `A z = (h²/τ) z + ν K z + C(u_prev) z`.
    pub fn apply_operator(&self, grid: &MacGrid, z: &VectorField) -> VectorField {
        let h2 = grid.h() * grid.h();
        let mut out = stiffness_apply(grid, z);
        out.scale(self.nu);
        out.axpy(h2 / self.tau, z);
        out.axpy(1.0, &convection_apply(grid, &self.u_prev, z).expect("shapes checked"));
        out
    }

    /// `f = (h²/τ) u_prev + h² g`.
    pub fn rhs(&self, grid: &MacGrid) -> VectorField {
        let h2 = grid.h() * grid.h();
        let mut f = self.u_prev.scaled(h2 / self.tau);
        f.axpy(h2, &self.g_slice);
        f
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSolution {
    pub u: VectorField,
    /// Multiplier of the divergence constraint.
    pub pressure: ScalarField,
    /// `λ_c ≥ 0` with `λ_c (p_c − |u_c|) ≈ 0`.
    pub radial_multiplier: Vec<f64>,
    /// Splitting iterations; 0 when the unconstrained solution is admissible.
    pub iterations: usize,
    /// `max_c |R u − y|` at exit, before the final radial polish.
    pub primal_residual: f64,
    /// `max_c |y_k − y_{k−1}|` at exit.
    pub dual_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitParams {
    /// Penalty; `None` means `1/τ`.
    pub rho: Option<f64>,
    pub max_iter: usize,
    pub feas_tol: f64,
    pub kkt_tol: f64,
    /// Over-relaxation factor in `(0, 2)`.
    pub relaxation: f64,
}

impl Default for SplitParams {
    fn default() -> Self {
        Self {
            rho: None,
            max_iter: 20_000,
            feas_tol: 1e-8,
            kkt_tol: 1e-7,
            relaxation: 1.8,
        }
    }
}

impl SplitParams {
    fn validate(&self) -> Result<()> {
        if let Some(r) = self.rho {
            if !(r > 0.0) {
                return Err(Error::config(format!("rho must be > 0, got {r}")));
            }
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(Error::config(format!(
                "relaxation must lie in (0, 2), got {}",
                self.relaxation
            )));
        }
        if !(self.feas_tol > 0.0 && self.kkt_tol > 0.0) || self.max_iter == 0 {
            return Err(Error::config("tolerances must be > 0 and max_iter >= 1"));
        }
        Ok(())
    }
}

const BALANCE_EVERY: usize = 25;

fn speeds(c: &[[f64; 2]]) -> impl Iterator<Item = f64> + '_ {
    c.iter().map(|v| v[0].hypot(v[1]))
}

pub fn solve_step(grid: &MacGrid, prob: &StepProblem, params: &SplitParams) -> Result<StepSolution> {
    prob.validate(grid)?;
    params.validate()?;
    let space = NodeSpace::full(grid);
    let h2 = grid.h() * grid.h();
    let f = prob.rhs(grid);
    let cf = space.curl_transpose(grid, &f);

    let plain = StreamOperator::assemble(grid, &space, |z| prob.apply_operator(grid, z))?;
    let u0 = space.curl(grid, &plain.solve(&cf));
    let c0 = cell_vectors(grid, &u0);
    if speeds(&c0).zip(&prob.p_slice).all(|(s, &p)| s <= p) {
        let pressure = pressure_of(grid, prob, &u0, &f, None)?;
        return Ok(StepSolution {
            u: u0,
            pressure,
            radial_multiplier: vec![0.0; grid.num_cells()],
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
        });
    }

    let mut rho = params.rho.unwrap_or(1.0 / prob.tau);
    let penalized = |rho: f64| {
        StreamOperator::assemble(grid, &space, |z| {
            let mut out = prob.apply_operator(grid, z);
            let rz = cell_vectors(grid, z);
            out.axpy(rho * h2, &cell_vectors_transpose(grid, &rz));
            out
        })
    };
    let mut op = penalized(rho)?;

    let project = |c: &[[f64; 2]], out: &mut Vec<[f64; 2]>| {
        out.clear();
        out.extend(
            c.iter()
                .zip(&prob.p_slice)
                .map(|(v, &p)| ball_project(*v, p).expect("radii checked")),
        );
    };
    let mut y = Vec::with_capacity(c0.len());
    project(&c0, &mut y);
    let mut w = vec![[0.0; 2]; c0.len()];
    let mut y_old = y.clone();
    let mut u = u0;
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let alpha = params.relaxation;
    let mut target = vec![[0.0; 2]; c0.len()];

    for it in 1..=params.max_iter {
        for ((t, yc), wc) in target.iter_mut().zip(&y).zip(&w) {
            *t = [rho * h2 * (yc[0] - wc[0]), rho * h2 * (yc[1] - wc[1])];
        }
        let mut rhs = f.clone();
        rhs.axpy(1.0, &cell_vectors_transpose(grid, &target));
        u = space.curl(grid, &op.solve(&space.curl_transpose(grid, &rhs)));
        let ru = cell_vectors(grid, &u);

        std::mem::swap(&mut y_old, &mut y);
        let relaxed: Vec<[f64; 2]> = ru
            .iter()
            .zip(&y_old)
            .map(|(r, yo)| [alpha * r[0] + (1.0 - alpha) * yo[0], alpha * r[1] + (1.0 - alpha) * yo[1]])
            .collect();
        let shifted: Vec<[f64; 2]> = relaxed
            .iter()
            .zip(&w)
            .map(|(a, b)| [a[0] + b[0], a[1] + b[1]])
            .collect();
        project(&shifted, &mut y);
        for ((wc, rc), yc) in w.iter_mut().zip(&relaxed).zip(&y) {
            wc[0] += rc[0] - yc[0];
            wc[1] += rc[1] - yc[1];
        }

        primal = ru
            .iter()
            .zip(&y)
            .fold(0.0_f64, |m, (a, b)| m.max((a[0] - b[0]).hypot(a[1] - b[1])));
        dual = y
            .iter()
            .zip(&y_old)
            .fold(0.0_f64, |m, (a, b)| m.max((a[0] - b[0]).hypot(a[1] - b[1])));
        if primal <= params.feas_tol && dual <= params.feas_tol {
            return finish(grid, prob, &f, u, &w, rho, it, primal, dual);
        }
        if it % BALANCE_EVERY == 0 {
            let factor = if primal > 10.0 * dual {
                2.0
            } else if dual > 10.0 * primal {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                rho *= factor;
                w.iter_mut().for_each(|c| {
                    c[0] /= factor;
                    c[1] /= factor;
                });
                op = penalized(rho)?;
            }
        }
    }
    let _ = u;
    Err(Error::NonConvergence {
        what: "step splitting",
        iterations: params.max_iter,
        residual: primal.max(dual),
    })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    grid: &MacGrid,
    prob: &StepProblem,
    f: &VectorField,
    mut u: VectorField,
    w: &[[f64; 2]],
    rho: f64,
    iterations: usize,
    primal: f64,
    dual: f64,
) -> Result<StepSolution> {
    // Radial polish: a uniform scaling keeps div u = 0 and makes |R u| ≤ p exact.
    let c = cell_vectors(grid, &u);
    let s = speeds(&c)
        .zip(&prob.p_slice)
        .filter(|(sp, _)| *sp > 0.0)
        .fold(1.0_f64, |m, (sp, &p)| m.min(p / sp));
    if s < 1.0 {
        u.scale(s);
    }
    let radial: Vec<f64> = w.iter().map(|c| rho * c[0].hypot(c[1])).collect();
    let h2 = grid.h() * grid.h();
    let obstacle_force: Vec<[f64; 2]> = w.iter().map(|c| [rho * h2 * c[0], rho * h2 * c[1]]).collect();
    let pressure = pressure_of(grid, prob, &u, f, Some(&obstacle_force))?;
    Ok(StepSolution {
        u,
        pressure,
        radial_multiplier: radial,
        iterations,
        primal_residual: primal,
        dual_residual: dual,
    })
}

/// Pressure from the face residual `f − A u − Rᵀμ`, which is a discrete gradient
/// (scaled by `h²`) at the solution.
fn pressure_of(
    grid: &MacGrid,
    prob: &StepProblem,
    u: &VectorField,
    f: &VectorField,
    obstacle: Option<&[[f64; 2]]>,
) -> Result<ScalarField> {
    let h2 = grid.h() * grid.h();
    let mut r = f.sub(&prob.apply_operator(grid, u));
    if let Some(mu) = obstacle {
        r.axpy(-1.0, &cell_vectors_transpose(grid, mu));
    }
    r.scale(1.0 / h2);
    r.enforce_boundary();
    let params = PoissonParams {
        abs_tol: 1e-9,
        rel_tol: 1e-10,
        ..PoissonParams::default()
    };
    Ok(leray_project_with(grid, &r, params)?.1)
}

/// Largest `(A u − f, u − z)` over the probes, i.e. the left-minus-right of the
/// discrete step inequality.
pub fn step_vi_residual(
    grid: &MacGrid,
    sol: &StepSolution,
    prob: &StepProblem,
    probes: &[VectorField],
    feas_tol: f64,
) -> Result<f64> {
    prob.validate(grid)?;
    let res = prob.rhs(grid).sub(&prob.apply_operator(grid, &sol.u));
    let mut worst = f64::NEG_INFINITY;
    for z in probes {
        z.check(grid)?;
        let div = divergence(grid, z)?.max_abs() * grid.h();
        let scale = 1.0_f64.max(z.max_abs());
        if div > feas_tol * scale {
            return Err(Error::domain(format!(
                "probe is not solenoidal: h·|div z|∞ = {div:e}"
            )));
        }
        if let Some((c, (s, p))) = speeds(&cell_vectors(grid, z))
            .zip(&prob.p_slice)
            .enumerate()
            .find(|(_, (s, p))| *s > **p + feas_tol)
        {
            return Err(Error::domain(format!(
                "probe violates the obstacle at cell {c}: |z| = {s} > p = {p}"
            )));
        }
        worst = worst.max(-res.dot(&sol.u.sub(z)));
    }
    Ok(worst)
}

/// Shift of an admissible field between two obstacle slices:
/// `z̃ = (1 − sup|p_s − p_t| / μ) z`.
pub fn shift_constraint_set(
    grid: &MacGrid,
    z: &VectorField,
    p_s: &[f64],
    p_t: &[f64],
    mu: f64,
) -> Result<VectorField> {
    z.check(grid)?;
    if p_s.len() != grid.num_cells() || p_t.len() != grid.num_cells() {
        return Err(Error::Shape {
            expected: format!("{} obstacle values", grid.num_cells()),
            got: format!("{} and {}", p_s.len(), p_t.len()),
        });
    }
    if !(mu > 0.0) {
        return Err(Error::domain(format!("mu must be > 0, got {mu}")));
    }
    let d = p_s
        .iter()
        .zip(p_t)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    if d >= mu {
        return Err(Error::domain(format!(
            "sup |p_s - p_t| = {d} is not below mu = {mu}; chain through intermediate times"
        )));
    }
    let tol = 1e-12;
    if let Some((s, p)) = speeds(&cell_vectors(grid, z))
        .zip(p_s)
        .find(|(s, p)| *s > **p * (1.0 + tol) + tol)
    {
        return Err(Error::domain(format!("z is not admissible for p_s: |z| = {s} > {p}")));
    }
    Ok(z.scaled(1.0 - d / mu))
}

/// `δ_n = max |p ∧ M − p_n ∧ M| / δ` over the given `(p, p_n)` pairs.
pub fn shrink_margin(delta: f64, m: f64, pairs: impl IntoIterator<Item = (Extended, f64)>) -> f64 {
    pairs
        .into_iter()
        .fold(0.0_f64, |acc, (p, pn)| acc.max((p.min_with(m) - pn.min(m)).abs()))
        / delta
}

/// `(δ_n, (1 − δ_n)⁺ v)` for a field `v` with `|v| ≤ p` and support in `{p ≥ δ}`.
///
/// `p` holds the exact obstacle and `p_n` the ladder member at the cell centers.
pub fn shrink_test_function(
    grid: &MacGrid,
    v: &VectorField,
    delta: f64,
    p: &[Extended],
    p_n: &[f64],
    m: f64,
) -> Result<(f64, VectorField)> {
    v.check(grid)?;
    if p.len() != grid.num_cells() || p_n.len() != grid.num_cells() {
        return Err(Error::Shape {
            expected: format!("{} obstacle values", grid.num_cells()),
            got: format!("{} and {}", p.len(), p_n.len()),
        });
    }
    if !(delta > 0.0) || !(m >= delta) {
        return Err(Error::domain(format!(
            "need delta > 0 and M >= delta, got delta = {delta}, M = {m}"
        )));
    }
    let cells = cell_vectors(grid, v);
    let mut pairs = Vec::new();
    for (c, s) in speeds(&cells).enumerate() {
        if s == 0.0 {
            continue;
        }
        let pc = p[c];
        if !pc.is_infinite() && pc.le(delta - f64::EPSILON * delta) {
            return Err(Error::domain(format!(
                "cell {c} is in the support but p = {pc} < delta = {delta}"
            )));
        }
        if pc.le(s * (1.0 - 1e-12)) {
            return Err(Error::domain(format!(
                "cell {c}: |v| = {s} exceeds p = {pc}"
            )));
        }
        pairs.push((pc, p_n[c]));
    }
    let dn = shrink_margin(delta, m, pairs);
    let out = v.scaled((1.0 - dn).max(0.0));
    if let Some((c, (s, pn))) = speeds(&cell_vectors(grid, &out))
        .zip(p_n)
        .enumerate()
        .find(|(_, (s, pn))| *s > **pn * (1.0 + 1e-12))
    {
        return Err(Error::Invariant(format!(
            "shrunk field exceeds p_n at cell {c}: {s} > {pn}"
        )));
    }
    Ok((dn, out))
}

/// `½(|u|² − |u_prev|²)/τ + ν|u|₁,₂² − (g, u)`, the left-minus-right of the
/// energy step inequality.
pub fn energy_step_defect(grid: &MacGrid, prob: &StepProblem, u: &VectorField) -> Result<f64> {
    let h2 = grid.h() * grid.h();
    let h1 = seminorm_h1(grid, u)?;
    Ok(0.5 * h2 * (u.dot(u) - prob.u_prev.dot(&prob.u_prev)) / prob.tau + prob.nu * h1 * h1
        - h2 * prob.g_slice.dot(u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vortex(grid: &MacGrid, amp: f64) -> VectorField {
        VectorField::from_stream(grid, |x, y| {
            amp * (std::f64::consts::PI * x).sin().powi(2) * (std::f64::consts::PI * y).sin().powi(2) / 4.0
        })
    }

    fn problem(grid: &MacGrid, amp: f64, p: f64) -> StepProblem {
        StepProblem {
            u_prev: vortex(grid, amp),
            p_slice: vec![p; grid.num_cells()],
            g_slice: VectorField::zeros(grid),
            nu: 0.05,
            tau: 0.05,
        }
    }

    #[test]
    fn ball_projection_examples() {
        assert_eq!(ball_project([3.0, 4.0], 5.0).unwrap(), [3.0, 4.0]);
        let p = ball_project([3.0, 4.0], 1.0).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert_eq!(ball_project([3.0, 4.0], 0.0).unwrap(), [0.0, 0.0]);
        assert!(ball_project([1.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn zero_data_gives_zero() {
        let g = MacGrid::unit(8).unwrap();
        let prob = StepProblem {
            u_prev: VectorField::zeros(&g),
            p_slice: vec![1e9; 64],
            g_slice: VectorField::zeros(&g),
            nu: 0.1,
            tau: 0.1,
        };
        let sol = solve_step(&g, &prob, &SplitParams::default()).unwrap();
        assert!(sol.u.is_zero());
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn tiny_obstacle_dominates() {
        let g = MacGrid::unit(8).unwrap();
        let eps = 1e-9;
        let prob = problem(&g, 2.0, eps);
        let sol = solve_step(&g, &prob, &SplitParams::default()).unwrap();
        assert!(speeds(&cell_vectors(&g, &sol.u)).all(|s| s <= eps));
    }

    #[test]
    fn active_step_satisfies_invariants() {
        let g = MacGrid::unit(12).unwrap();
        let prob = problem(&g, 4.0, 0.3);
        let params = SplitParams::default();
        let sol = solve_step(&g, &prob, &params).unwrap();
        assert!(sol.iterations > 0);
        let c = cell_vectors(&g, &sol.u);
        for ((s, p), lam) in speeds(&c).zip(&prob.p_slice).zip(&sol.radial_multiplier) {
            assert!(s <= p + params.feas_tol);
            assert!(*lam >= 0.0);
            assert!(lam * (p - s) <= 1e-6 * (1.0 + lam), "{lam} {p} {s}");
        }
        assert!(divergence(&g, &sol.u).unwrap().max_abs() <= 1e-10);
        // z = u and z = 0 probes.
        let r = step_vi_residual(&g, &sol, &prob, &[sol.u.clone(), VectorField::zeros(&g)], 1e-8).unwrap();
        assert!(r <= params.kkt_tol, "{r}");
        assert!(energy_step_defect(&g, &prob, &sol.u).unwrap() <= params.kkt_tol);
        // Random admissible probes.
        let space = NodeSpace::full(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut probes = Vec::new();
        for _ in 0..20 {
            let psi: Vec<f64> = (0..space.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let z = space.curl(&g, &psi);
            let m = speeds(&cell_vectors(&g, &z)).fold(0.0_f64, f64::max);
            probes.push(z.scaled(0.3 / m * rng.gen_range(0.1..1.0)));
        }
        let r = step_vi_residual(&g, &sol, &prob, &probes, 1e-8).unwrap();
        assert!(r <= params.kkt_tol, "{r}");
    }

    #[test]
    fn inadmissible_probe_is_rejected() {
        let g = MacGrid::unit(8).unwrap();
        let prob = problem(&g, 0.1, 10.0);
        let sol = solve_step(&g, &prob, &SplitParams::default()).unwrap();
        let mut bad = VectorField::zeros(&g);
        bad.u[g.u_idx(3, 3)] = 1.0;
        assert!(step_vi_residual(&g, &sol, &prob, &[bad], 1e-8).is_err());
        let big = vortex(&g, 1e3);
        assert!(step_vi_residual(&g, &sol, &prob, &[big], 1e-8).is_err());
    }

    #[test]
    fn shift_examples() {
        let g = MacGrid::unit(8).unwrap();
        let z = vortex(&g, 0.5);
        let p = vec![1.0; 64];
        assert_eq!(shift_constraint_set(&g, &z, &p, &p, 1.0).unwrap(), z);
        let q = vec![1.5; 64];
        let zt = shift_constraint_set(&g, &z, &p, &q, 1.0).unwrap();
        assert_eq!(zt, z.scaled(0.5));
        assert!(shift_constraint_set(&g, &z, &p, &vec![2.0; 64], 1.0).is_err());
    }

    #[test]
    fn shrink_examples() {
        let g = MacGrid::unit(8).unwrap();
        let v = vortex(&g, 0.5);
        let p = vec![Extended::Finite(1.0); 64];
        let pn = vec![1.0; 64];
        let (dn, out) = shrink_test_function(&g, &v, 0.5, &p, &pn, 2.0).unwrap();
        assert_eq!(dn, 0.0);
        assert_eq!(out, v);
        let far = vec![1e-3; 64];
        let (dn, out) = shrink_test_function(&g, &v, 0.5, &p, &far, 2.0).unwrap();
        assert!(dn >= 1.0);
        assert!(out.is_zero());
        let low = vec![Extended::Finite(0.1); 64];
        assert!(shrink_test_function(&g, &v, 0.5, &low, &pn, 2.0).is_err());
    }
}
