//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use nsvi_core::grid::{cell_vectors, divergence, MacGrid, NodeSpace};
use nsvi_core::scenario::{parse_scenario, Scenario};
use nsvi_core::stepper::run;
use nsvi_core::{StepProblem, VectorField};

pub mod corpus;
pub mod random;

pub fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn fixture(name: &str) -> Scenario {
    parse_scenario(&scenario_dir().join(format!("{name}.toml"))).expect("shipped fixture parses")
}

pub const FIXTURES: [&str; 5] = [
    "free-flow",
    "narrowing-channel",
    "growing-disk",
    "total-blockage",
    "lid-free-check",
];

pub fn flatten(f: &VectorField) -> DVector<f64> {
    DVector::from_iterator(f.u.len() + f.v.len(), f.u.iter().chain(&f.v).copied())
}

pub fn unflatten(grid: &MacGrid, x: &DVector<f64>) -> VectorField {
    let mut f = VectorField::zeros(grid);
    let nu = f.u.len();
    for k in 0..nu {
        f.u[k] = x[k];
    }
    for k in 0..f.v.len() {
        f.v[k] = x[nu + k];
    }
    f
}

fn unit(grid: &MacGrid, k: usize) -> VectorField {
    let mut e = DVector::zeros(grid.num_u() + grid.num_v());
    e[k] = 1.0;
    unflatten(grid, &e)
}

/// Columns of a linear map on face fields, probed on unit vectors.
pub fn face_matrix(grid: &MacGrid, rows: usize, map: impl Fn(&VectorField) -> DVector<f64>) -> DMatrix<f64> {
    let n = grid.num_u() + grid.num_v();
    let mut m = DMatrix::zeros(rows, n);
    for k in 0..n {
        m.set_column(k, &map(&unit(grid, k)));
    }
    m
}

/// Face-to-cell reconstruction as a `2·cells × faces` matrix.
pub fn reconstruction(grid: &MacGrid) -> DMatrix<f64> {
    face_matrix(grid, 2 * grid.num_cells(), |e| {
        DVector::from_iterator(
            2 * grid.num_cells(),
            cell_vectors(grid, e).into_iter().flat_map(|c| [c[0], c[1]]),
        )
    })
}

/// Curl from interior stream nodes, `faces × nodes`.
pub fn curl_matrix(grid: &MacGrid) -> DMatrix<f64> {
    let space = NodeSpace::full(grid);
    let n = space.len();
    let mut m = DMatrix::zeros(grid.num_u() + grid.num_v(), n);
    for k in 0..n {
        let mut psi = vec![0.0; n];
        psi[k] = 1.0;
        m.set_column(k, &flatten(&space.curl(grid, &psi)));
    }
    m
}

/// Result of the dense step oracle.
pub struct OracleSolution {
    pub u: VectorField,
    pub iterations: usize,
    pub increment: f64,
}

/// Dense data of one step in stream coordinates scaled by `P = sym(CᵀAC)`:
/// `u = C P^{-1/2} ξ`, `M̂ = P^{-1/2} CᵀAC P^{-1/2} = I + S` with `S` skew,
/// `b̂ = P^{-1/2} Cᵀ f`, `Ĝ = R C P^{-1/2}`.
struct Scaled {
    lift: DMatrix<f64>,
    m: DMatrix<f64>,
    b: DVector<f64>,
    g: DMatrix<f64>,
    p: Vec<f64>,
}

impl Scaled {
    fn new(grid: &MacGrid, prob: &StepProblem) -> Self {
        let faces = grid.num_u() + grid.num_v();
        let c = curl_matrix(grid);
        let a = face_matrix(grid, faces, |e| flatten(&prob.apply_operator(grid, e)));
        let f = flatten(&prob.rhs(grid));
        let r = reconstruction(grid);
        let m = c.transpose() * &a * &c;
        let sym = (&m + m.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        assert!(eig.eigenvalues.min() > 0.0, "operator must be strongly monotone");
        let inv_sqrt = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
            * eig.eigenvectors.transpose();
        Self {
            m: &inv_sqrt * &m * &inv_sqrt,
            b: &inv_sqrt * (c.transpose() * f),
            g: &r * &c * &inv_sqrt,
            lift: c * inv_sqrt,
            p: prob.p_slice.clone(),
        }
    }

    fn slacks(&self, gx: &DVector<f64>) -> Option<Vec<f64>> {
        let s: Vec<f64> = self
            .p
            .iter()
            .enumerate()
            .map(|(c, pc)| pc * pc - gx[2 * c].powi(2) - gx[2 * c + 1].powi(2))
            .collect();
        s.iter().all(|&x| x > 0.0).then_some(s)
    }

    fn barrier_value(&self, w: &DVector<f64>, xi: &DVector<f64>, t: f64) -> Option<f64> {
        let s = self.slacks(&(&self.g * xi))?;
        Some(0.5 * (xi - w).norm_squared() - t * s.iter().map(|x| x.ln()).sum::<f64>())
    }

    /// Euclidean projection of `w` onto `{ξ : |(Ĝξ)_c| ≤ p_c}` by a log-barrier
    /// path followed with damped Newton steps from the interior point `ξ = 0`.
    fn project(&self, w: &DVector<f64>, t_final: f64) -> DVector<f64> {
        if self.slacks(&(&self.g * w)).is_some() {
            return w.clone();
        }
        let n = w.len();
        let mut xi = DVector::zeros(n);
        let mut t = 1.0;
        loop {
            for _ in 0..100 {
                let gx = &self.g * &xi;
                let s = self.slacks(&gx).expect("iterate stays interior");
                let mut dq = DVector::zeros(gx.len());
                let mut dg = self.g.clone();
                for (c, sc) in s.iter().enumerate() {
                    let q = [gx[2 * c], gx[2 * c + 1]];
                    dq[2 * c] = 2.0 * t * q[0] / sc;
                    dq[2 * c + 1] = 2.0 * t * q[1] / sc;
                    let blk = |a: usize, b: usize| {
                        4.0 * t * q[a] * q[b] / (sc * sc) + if a == b { 2.0 * t / sc } else { 0.0 }
                    };
                    for k in 0..n {
                        let (r0, r1) = (self.g[(2 * c, k)], self.g[(2 * c + 1, k)]);
                        dg[(2 * c, k)] = blk(0, 0) * r0 + blk(0, 1) * r1;
                        dg[(2 * c + 1, k)] = blk(1, 0) * r0 + blk(1, 1) * r1;
                    }
                }
                let grad = &xi - w + self.g.tr_mul(&dq);
                let hess = DMatrix::identity(n, n) + self.g.tr_mul(&dg);
                let step = hess.cholesky().expect("barrier Hessian is positive").solve(&(-&grad));
                let decrement = -grad.dot(&step);
                let centred = if t <= t_final { 1e-24 } else { 1e-3 * t };
                if decrement <= centred {
                    break;
                }
                let f0 = self.barrier_value(w, &xi, t).unwrap();
                let mut alpha = 1.0;
                loop {
                    let trial = &xi + &step * alpha;
                    if let Some(f) = self.barrier_value(w, &trial, t) {
                        if f <= f0 - 0.25 * alpha * decrement {
                            xi = trial;
                            break;
                        }
                    }
                    alpha *= 0.5;
                    if alpha < 1e-12 {
                        break;
                    }
                }
                if alpha < 1e-12 {
                    break;
                }
            }
            if t <= t_final {
                return xi;
            }
            t = (t * 0.1).max(t_final);
        }
    }
}

/// Solves the step inequality `(Au − f, z − u) ≥ 0` over solenoidal `z` with
/// `|(Rz)_c| ≤ p_c` by the projected-gradient iteration
/// `ξ ← Proj_K(ξ − γ(M̂ξ − b̂))`, `γ = 1/(1 + ‖S‖²)`, a contraction since
/// `M̂ = I + S` with `S` skew.
pub fn projected_gradient_step(grid: &MacGrid, prob: &StepProblem, tol: f64, max_iter: usize) -> OracleSolution {
    let sc = Scaled::new(grid, prob);
    let n = sc.m.nrows();
    let skew = &sc.m - DMatrix::identity(n, n);
    let s2 = skew.svd(false, false).singular_values.max().powi(2);
    let gamma = 1.0 / (1.0 + s2);
    let mut xi = DVector::zeros(n);
    let mut increment = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let w = &xi - (&sc.m * &xi - &sc.b) * gamma;
        let next = sc.project(&w, 1e-12);
        increment = (&next - &xi).norm();
        xi = next;
        if increment <= tol {
            break;
        }
    }
    OracleSolution {
        u: unflatten(grid, &(&sc.lift * xi)),
        iterations,
        increment,
    }
}

/// One unconstrained implicit step by a dense saddle-point solve of
/// `Au + Dᵀp = f`, `Du = 0`, `Σp = 0`, on the interior faces.
pub struct SaddleStepper {
    grid: MacGrid,
    interior: Vec<usize>,
    div: DMatrix<f64>,
}

impl SaddleStepper {
    pub fn new(grid: &MacGrid) -> Self {
        let faces = grid.num_u() + grid.num_v();
        let div = face_matrix(grid, grid.num_cells(), |e| {
            DVector::from_vec(divergence(grid, e).unwrap().values)
        });
        let mut probe = VectorField::zeros(grid);
        probe.u.iter_mut().for_each(|x| *x = 1.0);
        probe.v.iter_mut().for_each(|x| *x = 1.0);
        probe.enforce_boundary();
        let interior = (0..faces).filter(|&k| flatten(&probe)[k] != 0.0).collect();
        Self {
            grid: *grid,
            interior,
            div,
        }
    }

    pub fn step(&self, prob: &StepProblem) -> VectorField {
        let g = &self.grid;
        let faces = g.num_u() + g.num_v();
        let a = face_matrix(g, faces, |e| flatten(&prob.apply_operator(g, e)));
        let f = flatten(&prob.rhs(g));
        let (ni, nc) = (self.interior.len(), g.num_cells());
        let n = ni + nc + 1;
        let mut k = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        for (r, &fr) in self.interior.iter().enumerate() {
            rhs[r] = f[fr];
            for (s, &fs) in self.interior.iter().enumerate() {
                k[(r, s)] = a[(fr, fs)];
            }
            for cell in 0..nc {
                k[(r, ni + cell)] = self.div[(cell, fr)];
                k[(ni + cell, r)] = self.div[(cell, fr)];
            }
        }
        for cell in 0..nc {
            k[(ni + nc, ni + cell)] = 1.0;
            k[(ni + cell, ni + nc)] = 1.0;
        }
        let x = k.lu().solve(&rhs).expect("saddle system is nonsingular");
        let mut u = DVector::zeros(faces);
        for (r, &fr) in self.interior.iter().enumerate() {
            u[fr] = x[r];
        }
        unflatten(g, &u)
    }
}

pub fn max_diff(a: &VectorField, b: &VectorField) -> f64 {
    a.sub(b).max_abs()
}

/// `(worst per-step difference, peak speed, cap)` against the dense
/// unconstrained projection stepper.
pub fn free_flow_gap(name: &str) -> (f64, f64, f64) {
    let sc = fixture(name);
    let cfg = &sc.config;
    let n = *cfg.ladder.last().unwrap();
    let rec = run(cfg, n).unwrap();
    let grid = cfg.mac_grid().unwrap();
    let oracle = SaddleStepper::new(&grid);
    let mut u = cfg.initial.sample(&grid).unwrap();
    let mut worst = max_diff(&rec.snapshots[0], &u);
    let mut peak = 0.0_f64;
    for k in 0..cfg.steps() {
        let prob = StepProblem {
            u_prev: u,
            p_slice: vec![f64::MAX; grid.num_cells()],
            g_slice: cfg.forcing_at(&grid, cfg.time(k + 1)),
            nu: cfg.nu,
            tau: cfg.tau,
        };
        u = oracle.step(&prob);
        assert_eq!(rec.snapshot_steps[k + 1], k + 1);
        worst = worst.max(max_diff(&rec.snapshots[k + 1], &u));
        peak = cell_vectors(&grid, &u)
            .iter()
            .fold(peak, |m, c| m.max(c[0].hypot(c[1])));
    }
    (worst, peak, n as f64)
}
