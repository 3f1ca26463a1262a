//! Checks of the a-priori estimates and structural properties on computed
//! trajectories.
//!
//! All reports are pure functions of immutable trajectories. Each report has
//! a CSV form and a [`CheckSummary`] for the JSON run summary.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    cell_vectors, convection_form, divergence, dual_norm_w_star, inner, norm_l2, seminorm_h1,
    stiffness_inner, CellMask, ConstantsReport, DualNormParams, MacGrid, VectorField,
};
use crate::obstacle::{
    mollifier_radius, region_classify, Extended, LadderMember, ObstacleField, ObstaclePreset,
    SamplingLattice,
};
use crate::stepper::{SimulationConfig, TrajectoryRecord};
use crate::vi_step::shrink_margin;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

/// One line of the JSON run summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub check: String,
    pub status: CheckStatus,
    /// Worst observed value of the checked quantity (`None` when not applicable).
    pub worst: Option<f64>,
    pub threshold: Option<f64>,
}

impl CheckSummary {
    pub fn new(check: &str, pass: bool, worst: f64, threshold: f64) -> Self {
        Self {
            check: check.into(),
            status: if pass { CheckStatus::Pass } else { CheckStatus::Fail },
            worst: Some(worst),
            threshold: Some(threshold),
        }
    }

    pub fn not_applicable(check: &str) -> Self {
        Self {
            check: check.into(),
            status: CheckStatus::NotApplicable,
            worst: None,
            threshold: None,
        }
    }
}

/// Right-endpoint weights `t_k − t_{k−1}` on the kept states (0 for the first).
fn kept_weights(rec: &TrajectoryRecord) -> Vec<f64> {
    let mut w = vec![0.0; rec.snapshot_steps.len()];
    for i in 1..w.len() {
        w[i] = rec.times[rec.snapshot_steps[i]] - rec.times[rec.snapshot_steps[i - 1]];
    }
    w
}

// ---------------------------------------------------------------- energy

/// The energy estimate along one trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub times: Vec<f64>,
    /// `ν Σ_{j≤k} τ_j |u_j|²₁,₂`.
    pub dissipation: Vec<f64>,
    /// `|u_k|²₀,₂ + dissipation_k`.
    pub lhs: Vec<f64>,
    /// `|u₀|²₀,₂ + (L_P²/ν) Σ τ_j |g_j|²₀,₂`.
    pub m0: f64,
    /// `m0 − lhs`.
    pub margin: Vec<f64>,
    /// `K · kkt_tol`.
    pub tolerance: f64,
    /// Times with `margin < −tolerance`.
    pub flagged: Vec<f64>,
    /// `½|u_k|² + ν Σ τ_j |u_j|²₁,₂ − Σ τ_j (g_j, u_j) − ½|u(0)|²` on the kept
    /// states when every step is kept; the `v = 0` case of the global inequality.
    pub work_form: Option<Vec<f64>>,
}

impl EnergyLedger {
    pub fn ok(&self) -> bool {
        self.flagged.is_empty()
    }

    pub fn min_margin(&self) -> f64 {
        self.margin.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn summary(&self) -> CheckSummary {
        CheckSummary::new("energy", self.ok(), 0.0 - self.min_margin(), self.tolerance)
    }

    /// CSV with columns `t,lhs,dissipation,M0,margin`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,lhs,dissipation,M0,margin\n");
        for k in 0..self.times.len() {
            s.push_str(&format!(
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                self.times[k], self.lhs[k], self.dissipation[k], self.m0, self.margin[k]
            ));
        }
        s
    }
}

pub fn energy_check(traj: &TrajectoryRecord, config: &SimulationConfig, l_p: f64) -> Result<EnergyLedger> {
    let grid = config.mac_grid()?;
    let nu = config.nu;
    let k = traj.times.len();
    let mut dissipation = vec![0.0; k];
    let mut gsum = 0.0;
    for j in 1..k {
        let dt = traj.times[j] - traj.times[j - 1];
        dissipation[j] = dissipation[j - 1] + nu * dt * traj.h1_seminorm[j].powi(2);
        gsum += dt * traj.forcing_l2[j].powi(2);
    }
    let m0 = traj.u0_l2.powi(2) + l_p * l_p / nu * gsum;
    let lhs: Vec<f64> = (0..k).map(|j| traj.l2_norm[j].powi(2) + dissipation[j]).collect();
    let margin: Vec<f64> = lhs.iter().map(|l| m0 - l).collect();
    let tolerance = traj.steps().max(1) as f64 * config.tolerances.kkt_tol;
    let flagged = traj
        .times
        .iter()
        .zip(&margin)
        .filter(|(_, m)| **m < -tolerance)
        .map(|(t, _)| *t)
        .collect();

    let work_form = if traj.snapshot_steps.len() == k {
        let u_first = &traj.snapshots[0];
        let half0 = 0.5 * inner(&grid, u_first, u_first);
        let mut acc = 0.0;
        let mut out = vec![0.0; k];
        for j in 1..k {
            let dt = traj.times[j] - traj.times[j - 1];
            let u = &traj.snapshots[j];
            let g = config.forcing_at(&grid, traj.times[j]);
            acc += dt * (nu * stiffness_inner(&grid, u, u) - inner(&grid, &g, u));
            out[j] = 0.5 * inner(&grid, u, u) + acc - half0;
        }
        Some(out)
    } else {
        None
    };
    Ok(EnergyLedger {
        times: traj.times.clone(),
        dissipation,
        lhs,
        m0,
        margin,
        tolerance,
        flagged,
        work_form,
    })
}

// -------------------------------------------------------- test functions

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TestShape {
    Zero,
    /// `θ(t) curl ψ` with `ψ = A r cos²(π|x − c| / 2r)` inside the disk of radius
    /// `r` and `θ(t) = 1 + ½ sin(2π f t)`.
    Bump {
        center: (f64, f64),
        radius: f64,
        amplitude: f64,
        frequency: f64,
    },
    /// Given states at given times; the derivative is the backward difference.
    Sampled {
        times: Vec<f64>,
        states: Vec<VectorField>,
    },
}

/// A member of the discrete test class: smooth in time, `|v| ≤ p`, and
/// supported where `p ≥ margin > 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub name: String,
    pub margin: f64,
    pub shape: TestShape,
}

fn bump_stream(grid: &MacGrid, center: (f64, f64), radius: f64, amplitude: f64) -> VectorField {
    VectorField::from_stream(grid, |x, y| {
        let r = (x - center.0).hypot(y - center.1);
        if r >= radius {
            0.0
        } else {
            amplitude * radius * (0.5 * PI * r / radius).cos().powi(2)
        }
    })
}

impl TestFunction {
    fn sampled_index(times: &[f64], t: f64) -> Result<usize> {
        times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * (1.0 + t.abs()))
            .ok_or_else(|| Error::domain(format!("sampled test function has no state at t = {t}")))
    }

    pub fn value(&self, grid: &MacGrid, t: f64) -> Result<VectorField> {
        Ok(match &self.shape {
            TestShape::Zero => VectorField::zeros(grid),
            TestShape::Bump {
                center,
                radius,
                amplitude,
                frequency,
            } => {
                let theta = 1.0 + 0.5 * (2.0 * PI * frequency * t).sin();
                bump_stream(grid, *center, *radius, amplitude * theta)
            }
            TestShape::Sampled { times, states } => states[Self::sampled_index(times, t)?].clone(),
        })
    }

    pub fn derivative(&self, grid: &MacGrid, t: f64) -> Result<VectorField> {
        Ok(match &self.shape {
            TestShape::Zero => VectorField::zeros(grid),
            TestShape::Bump {
                center,
                radius,
                amplitude,
                frequency,
            } => {
                let dtheta = PI * frequency * (2.0 * PI * frequency * t).cos();
                bump_stream(grid, *center, *radius, amplitude * dtheta)
            }
            TestShape::Sampled { times, states } => {
                let i = Self::sampled_index(times, t)?;
                if i == 0 {
                    VectorField::zeros(grid)
                } else {
                    states[i].sub(&states[i - 1]).scaled(1.0 / (times[i] - times[i - 1]))
                }
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionFamily {
    pub members: Vec<TestFunction>,
}

fn speeds(grid: &MacGrid, v: &VectorField) -> Vec<f64> {
    cell_vectors(grid, v).iter().map(|c| c[0].hypot(c[1])).collect()
}

/// Checks `|v| ≤ p` and `p ≥ margin` on the support of `v` at every lattice time.
fn check_member(f: &TestFunction, field: &ObstacleField, lattice: &SamplingLattice) -> Result<()> {
    let grid = &lattice.grid;
    if !(f.margin > 0.0) {
        return Err(Error::domain(format!("test function {} needs a positive margin", f.name)));
    }
    for k in 0..=lattice.steps {
        let t = lattice.time(k);
        let v = match f.value(grid, t) {
            Ok(v) => v,
            // Sampled members only need to cover the times they are used at.
            Err(_) if matches!(f.shape, TestShape::Sampled { .. }) => continue,
            Err(e) => return Err(e),
        };
        for ((i, j), s) in grid.cells().zip(speeds(grid, &v)) {
            if s == 0.0 {
                continue;
            }
            let (x, y) = grid.cell_center(i, j);
            let p = field.evaluate(x, y, t);
            if p.le(s * (1.0 - 1e-12)) || p.le(f.margin * (1.0 - 1e-12)) {
                return Err(Error::domain(format!(
                    "test function {} is not admissible at cell ({i}, {j}), t = {t}: |v| = {s}, p = {p}, margin = {}",
                    f.name, f.margin
                )));
            }
        }
    }
    Ok(())
}

impl TestFunctionFamily {
    /// Verifies every member on the lattice.
    pub fn new(members: Vec<TestFunction>, field: &ObstacleField, lattice: &SamplingLattice) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::domain("test function family is empty"));
        }
        for m in &members {
            check_member(m, field, lattice)?;
        }
        Ok(Self { members })
    }

    /// The zero field plus up to `count` random bumps, each scaled to half the
    /// obstacle on its support. Bumps are placed where finite values of `p`
    /// vary by at most a factor 2 over the support, which keeps them away
    /// from `{p = 0}`. Fewer bumps are returned when no room is found.
    pub fn bumps(field: &ObstacleField, lattice: &SamplingLattice, count: usize, seed: u64) -> Result<Self> {
        let grid = &lattice.grid;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut members = vec![TestFunction {
            name: "zero".into(),
            margin: 1.0,
            shape: TestShape::Zero,
        }];
        let lmin = grid.lx().min(grid.ly());
        let frequency = 1.0 / lattice.horizon();
        let mut attempts = 0;
        while members.len() < count + 1 {
            attempts += 1;
            if attempts > 200 * (count + 1) {
                break;
            }
            let radius = rng.gen_range(0.1..0.2) * lmin;
            let center = (
                rng.gen_range(radius..grid.lx() - radius),
                rng.gen_range(radius..grid.ly() - radius),
            );
            let base = speeds(grid, &bump_stream(grid, center, radius, 1.0));
            // Smallest p/(θ|v₁|) and smallest p over the support, across time.
            let mut scale = f64::INFINITY;
            let mut pmin = f64::INFINITY;
            let mut pmax = 0.0_f64;
            let mut blocked = false;
            for k in 0..=lattice.steps {
                let t = lattice.time(k);
                let theta = 1.0 + 0.5 * (2.0 * PI * frequency * t).sin();
                for ((i, j), &s) in grid.cells().zip(&base) {
                    if s == 0.0 {
                        continue;
                    }
                    let (x, y) = grid.cell_center(i, j);
                    match field.evaluate(x, y, t) {
                        Extended::Infinite => {}
                        Extended::Finite(p) => {
                            if p <= 0.0 {
                                blocked = true;
                            }
                            scale = scale.min(p / (theta * s));
                            pmin = pmin.min(p);
                            pmax = pmax.max(p);
                        }
                    }
                }
            }
            // Near steep parts of p the ladder error dwarfs the margin.
            if blocked || pmin < 0.5 * pmax {
                continue;
            }
            let amplitude = (0.5 * scale).min(1.0);
            let sup = 1.5 * amplitude * base.iter().copied().fold(0.0, f64::max);
            members.push(TestFunction {
                name: format!("bump{}", members.len()),
                margin: if pmin.is_finite() { pmin } else { sup.max(1.0) },
                shape: TestShape::Bump {
                    center,
                    radius,
                    amplitude,
                    frequency,
                },
            });
        }
        Self::new(members, field, lattice)
    }
}

// ------------------------------------------------------- global residual

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViMemberResidual {
    pub name: String,
    /// Shrink factor `δ_n` applied to the member.
    pub delta_n: f64,
    /// Left-minus-right at each kept time after `t = 0`.
    pub residual: Vec<f64>,
    pub worst: f64,
    pub worst_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViResidualReport {
    pub times: Vec<f64>,
    pub members: Vec<ViMemberResidual>,
    pub worst: f64,
    pub threshold: f64,
}

impl ViResidualReport {
    pub fn ok(&self) -> bool {
        self.worst <= self.threshold
    }

    pub fn summary(&self) -> CheckSummary {
        CheckSummary::new("vi-residual", self.ok(), self.worst, self.threshold)
    }

    /// CSV with columns `member,delta_n,t,residual`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("member,delta_n,t,residual\n");
        for m in &self.members {
            for (t, r) in self.times.iter().zip(&m.residual) {
                s.push_str(&format!("{},{:.12e},{:.12e},{:.12e}\n", m.name, m.delta_n, t, r));
            }
        }
        s
    }
}

/// Default slack of the global residual.
pub const VI_RESIDUAL_SLACK: f64 = 1e-3;

/// Left-minus-right of the global inequality for every member and kept time,
/// with each member shrunk into the ladder member `p_n` by one space-time
/// factor `(1 − δ_n)⁺`. Convection is evaluated fully nonlinearly and `v′`
/// exactly, so the result measures the time-discretization defect.
pub fn global_vi_residual(
    traj: &TrajectoryRecord,
    family: &TestFunctionFamily,
    config: &SimulationConfig,
    member: &LadderMember,
    slack: f64,
) -> Result<ViResidualReport> {
    if family.members.is_empty() {
        return Err(Error::domain("test function family is empty"));
    }
    let grid = config.mac_grid()?;
    let field = config.obstacle_field()?;
    let cells = grid.num_cells();
    let kept = &traj.snapshot_steps;
    let weights = kept_weights(traj);
    let nu = config.nu;
    let times: Vec<f64> = kept[1..].iter().map(|&k| traj.times[k]).collect();

    let mut members = Vec::new();
    for f in &family.members {
        let values: Vec<VectorField> = kept
            .iter()
            .map(|&k| f.value(&grid, traj.times[k]))
            .collect::<Result<_>>()?;
        // δ_n over the space-time support.
        let m = f.margin
            + values
                .iter()
                .map(|v| speeds(&grid, v).into_iter().fold(0.0, f64::max))
                .fold(0.0, f64::max);
        let mut pairs = Vec::new();
        for (v, &k) in values.iter().zip(kept) {
            let t = traj.times[k];
            let pn = member.slice(k, cells);
            for ((c, (i, j)), s) in grid.cells().enumerate().zip(speeds(&grid, v)) {
                if s == 0.0 {
                    continue;
                }
                let (x, y) = grid.cell_center(i, j);
                let p = field.evaluate(x, y, t);
                if p.le(s * (1.0 - 1e-12)) || p.le(f.margin * (1.0 - 1e-12)) {
                    return Err(Error::domain(format!(
                        "test function {} is not admissible at cell ({i}, {j}), t = {t}",
                        f.name
                    )));
                }
                pairs.push((p, pn[c]));
            }
        }
        let delta_n = shrink_margin(f.margin, m, pairs);
        let shrink = (1.0 - delta_n).max(0.0);
        for (v, &k) in values.iter().zip(kept) {
            let pn = member.slice(k, cells);
            if let Some((c, s)) = speeds(&grid, v)
                .into_iter()
                .enumerate()
                .find(|(c, s)| shrink * s > pn[*c] * (1.0 + 1e-12))
            {
                return Err(Error::Invariant(format!(
                    "shrunk test function {} exceeds p_n at cell {c}: {} > {}",
                    f.name,
                    shrink * s,
                    pn[c]
                )));
            }
        }
        let z: Vec<VectorField> = values.iter().map(|v| v.scaled(shrink)).collect();

        let u_first = &traj.snapshots[0];
        let d0 = u_first.sub(&z[0]);
        let rhs0 = 0.5 * inner(&grid, &d0, &d0);
        let mut acc = 0.0;
        let mut residual = Vec::with_capacity(kept.len() - 1);
        for w in 1..kept.len() {
            let t = traj.times[kept[w]];
            let u = &traj.snapshots[w];
            let d = u.sub(&z[w]);
            let dz = f.derivative(&grid, t)?.scaled(shrink);
            let g = config.forcing_at(&grid, t);
            acc += weights[w]
                * (inner(&grid, &dz, &d) + nu * stiffness_inner(&grid, u, &d)
                    + convection_form(&grid, u, u, &d)?
                    - inner(&grid, &g, &d));
            residual.push(acc + 0.5 * inner(&grid, &d, &d) - rhs0);
        }
        let (wi, worst) = residual
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, r)| if r > b.1 { (i, r) } else { b });
        members.push(ViMemberResidual {
            name: f.name.clone(),
            delta_n,
            worst_time: times.get(wi).copied().unwrap_or(0.0),
            worst,
            residual,
        });
    }
    let worst = members.iter().map(|m| m.worst).fold(f64::NEG_INFINITY, f64::max);
    Ok(ViResidualReport {
        times,
        members,
        worst,
        threshold: slack,
    })
}

// -------------------------------------------------------------------- BV

/// `Ω′ × [T₁, T₁′]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subcylinder {
    pub mask: CellMask,
    pub t1: f64,
    pub t1p: f64,
}

/// Errors unless `closure(Ω′) × [T₁, T₁′] ⊂ {p > κ}` on the lattice.
pub fn check_subcylinder(
    field: &ObstacleField,
    lattice: &SamplingLattice,
    sub: &Subcylinder,
    kappa: f64,
) -> Result<()> {
    if !(sub.t1 < sub.t1p) || sub.t1 < 0.0 || sub.t1p > lattice.horizon() * (1.0 + 1e-12) {
        return Err(Error::domain(format!(
            "subcylinder times [{}, {}] must be increasing inside [0, {}]",
            sub.t1,
            sub.t1p,
            lattice.horizon()
        )));
    }
    if sub.mask.count() == 0 {
        return Err(Error::domain("subcylinder has no cells"));
    }
    let regions = region_classify(field, lattice, kappa)?;
    let closure = sub.mask.closure();
    let grid = &lattice.grid;
    let mut bad = Vec::new();
    for k in 0..=lattice.steps {
        let t = lattice.time(k);
        if t < sub.t1 - 1e-12 || t > sub.t1p + 1e-12 {
            continue;
        }
        let above = regions.super_level(k);
        for (i, j) in grid.cells() {
            if closure.contains(i, j) && !above.contains(i, j) && !bad.contains(&(i, j)) {
                bad.push((i, j));
            }
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        bad.truncate(8);
        Err(Error::domain(format!(
            "subcylinder leaves {{p > {kappa}}}; offending cells include {bad:?}"
        )))
    }
}

/// `Σ |u(t_{k+1}) − u(t_k)|_{W*(Ω′)}` over consecutive kept states in `[T₁, T₁′]`.
pub fn total_variation(
    grid: &MacGrid,
    traj: &TrajectoryRecord,
    mask: &CellMask,
    t1: f64,
    t1p: f64,
    params: DualNormParams,
) -> Result<f64> {
    let inside: Vec<usize> = (0..traj.snapshot_steps.len())
        .filter(|&w| {
            let t = traj.times[traj.snapshot_steps[w]];
            t >= t1 - 1e-12 && t <= t1p + 1e-12
        })
        .collect();
    let mut tv = 0.0;
    for pair in inside.windows(2) {
        let inc = traj.snapshots[pair[1]].sub(&traj.snapshots[pair[0]]);
        tv += dual_norm_w_star(grid, &inc, mask, params)?.value;
    }
    Ok(tv)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BvReport {
    pub kappa: f64,
    pub t1: f64,
    pub t1p: f64,
    pub cells: usize,
    /// `(n, TV_n)`.
    pub tv: Vec<(u64, f64)>,
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    /// `2 L₀ M₀ / κ + M₃ T^{1/2}`, from discrete constant surrogates.
    pub m_kappa: f64,
    pub l0: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    /// `max TV_n / min TV_n` (1 when all vanish).
    pub spread: f64,
}

impl BvReport {
    pub fn max_tv(&self) -> f64 {
        self.tv.iter().map(|x| x.1).fold(0.0, f64::max)
    }

    pub fn ok(&self) -> bool {
        self.max_tv() <= self.m_kappa
    }

    pub fn summary(&self) -> CheckSummary {
        CheckSummary::new("bv", self.ok(), self.max_tv(), self.m_kappa)
    }

    /// CSV with columns `n,tv,m_kappa`. The total variation is taken over the
    /// recorded partition; it matches the distributional bound only as τ → 0.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,tv,m_kappa\n");
        for (n, tv) in &self.tv {
            s.push_str(&format!("{n},{tv:.12e},{:.12e}\n", self.m_kappa));
        }
        s
    }
}

/// Total variation in `W*_σ(Ω′)` per ladder member, compared against `M_κ`.
pub fn bv_estimate(
    trajs: &[TrajectoryRecord],
    config: &SimulationConfig,
    sub: &Subcylinder,
    kappa: f64,
    constants: &ConstantsReport,
    params: DualNormParams,
) -> Result<BvReport> {
    let first = trajs
        .first()
        .ok_or_else(|| Error::domain("bv_estimate needs at least one trajectory"))?;
    let grid = config.mac_grid()?;
    let field = config.obstacle_field()?;
    check_subcylinder(&field, &config.lattice()?, sub, kappa)?;
    let nu = config.nu;
    let mut g2 = 0.0;
    for j in 1..first.times.len() {
        g2 += (first.times[j] - first.times[j - 1]) * first.forcing_l2[j].powi(2);
    }
    let (l_p, l0, l1, l2, l3) = (
        constants.l_p.value,
        constants.l0.value,
        constants.l1.value,
        constants.l2.value,
        constants.l3.value,
    );
    let m0 = first.u0_l2.powi(2) + l_p * l_p / nu * g2;
    let m1 = (nu * m0).sqrt() + l1 * g2.sqrt();
    let m2 = 9.0 * l3 * m0 / nu.sqrt();
    let m3 = m1 * l2.sqrt() + m2;
    let m_kappa = 2.0 * l0 * m0 / kappa + m3 * config.horizon.sqrt();
    let tv = trajs
        .iter()
        .map(|r| Ok((r.n, total_variation(&grid, r, &sub.mask, sub.t1, sub.t1p, params)?)))
        .collect::<Result<Vec<_>>>()?;
    let hi = tv.iter().map(|x| x.1).fold(0.0, f64::max);
    let lo = tv.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let spread = if hi == 0.0 { 1.0 } else { hi / lo };
    Ok(BvReport {
        kappa,
        t1: sub.t1,
        t1p: sub.t1p,
        cells: sub.mask.count(),
        tv,
        m0,
        m1,
        m2,
        m3,
        m_kappa,
        l0,
        l1,
        l2,
        l3,
        spread,
    })
}

// ---------------------------------------------------------- perturbation

/// `(G(v) − G(w), v − w) = b(d, v, d) + b(w, d, d)` with `d = v − w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub total: f64,
    pub first_sum: f64,
    pub second_sum: f64,
    /// `|total − first − second|`.
    pub split_error: f64,
    /// `9 max|v| |d|₁,₂ |d|₀,₂`.
    pub bound: f64,
    pub max_v: f64,
}

impl PerturbationReport {
    pub fn ok(&self) -> bool {
        let scale = 1.0 + self.total.abs();
        self.second_sum.abs() <= 1e-12 * scale
            && self.split_error <= 1e-12 * scale
            && self.total.abs() <= self.bound * (1.0 + 1e-12) + 1e-300
    }

    pub fn summary(&self) -> CheckSummary {
        CheckSummary::new("perturbation", self.ok(), self.second_sum.abs(), 1e-12)
    }
}

pub fn perturbation_structure_check(grid: &MacGrid, v: &VectorField, w: &VectorField) -> Result<PerturbationReport> {
    for (name, f) in [("v", v), ("w", w)] {
        let div = divergence(grid, f)?.max_abs() * grid.h();
        if div > 1e-10 * f.max_abs().max(1.0) {
            return Err(Error::domain(format!(
                "{name} is not solenoidal: h·|div|∞ = {div:e}"
            )));
        }
    }
    let d = v.sub(w);
    let total = convection_form(grid, v, v, &d)? - convection_form(grid, w, w, &d)?;
    let first_sum = convection_form(grid, &d, v, &d)?;
    let second_sum = convection_form(grid, w, &d, &d)?;
    let max_v = v.max_abs();
    let bound = 9.0 * max_v * seminorm_h1(grid, &d)? * norm_l2(grid, &d)?;
    Ok(PerturbationReport {
        total,
        first_sum,
        second_sum,
        split_error: (total - first_sum - second_sum).abs(),
        bound,
        max_v,
    })
}

// -------------------------------------------------------------- blockage

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockageReport {
    pub applicable: bool,
    /// Time from which the regularized member sits at its floor `1/n`.
    pub t0: f64,
    pub threshold: f64,
    /// `(t, |u(t)|₀,₂)` for every step.
    pub decay: Vec<(f64, f64)>,
    /// Largest `|u|₀,₂` at `t ≥ t0 + τ`.
    pub max_after: f64,
    /// Largest `|u|₀,₂` after the obstacle starts to reopen.
    pub max_after_reopen: Option<f64>,
    /// `|u(t_k)|₀,₂` nonincreasing over the whole run.
    pub monotone: bool,
    pub pass: Option<bool>,
}

impl BlockageReport {
    pub fn summary(&self) -> CheckSummary {
        match self.pass {
            None => CheckSummary::not_applicable("blockage"),
            Some(p) => CheckSummary::new("blockage", p, self.max_after, self.threshold),
        }
    }

    /// CSV with columns `t,l2_norm`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,l2_norm\n");
        for (t, v) in &self.decay {
            s.push_str(&format!("{t:.12e},{v:.12e}\n"));
        }
        s
    }
}

pub const BLOCKAGE_THRESHOLD: f64 = 1e-8;

/// Requires the total-blockage obstacle and zero forcing; otherwise reports
/// not applicable. `t0` is the closing time plus the mollifier radius of the
/// member, when `p_n` reaches its floor `1/n`.
pub fn blockage_check(traj: &TrajectoryRecord, config: &SimulationConfig) -> Result<BlockageReport> {
    let decay: Vec<(f64, f64)> = traj.times.iter().copied().zip(traj.l2_norm.iter().copied()).collect();
    let monotone = traj.l2_norm.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15);
    let (close_end, reopen_start) = match config.obstacle {
        ObstaclePreset::TotalBlockage {
            close_end,
            reopen_start,
            ..
        } if config.forcing.is_zero() => (close_end, reopen_start),
        _ => {
            return Ok(BlockageReport {
                applicable: false,
                t0: f64::NAN,
                threshold: BLOCKAGE_THRESHOLD,
                decay,
                max_after: f64::NAN,
                max_after_reopen: None,
                monotone,
                pass: None,
            })
        }
    };
    let h = config.mac_grid()?.h();
    let t0 = close_end + mollifier_radius(h, traj.n);
    let after = |from: f64| {
        decay
            .iter()
            .filter(|(t, _)| *t >= from - 1e-12)
            .map(|x| x.1)
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
    };
    let max_after = after(t0 + traj.tau).unwrap_or(0.0);
    let max_after_reopen = after(reopen_start);
    Ok(BlockageReport {
        applicable: true,
        t0,
        threshold: BLOCKAGE_THRESHOLD,
        decay,
        max_after,
        max_after_reopen,
        monotone,
        pass: Some(max_after <= BLOCKAGE_THRESHOLD),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ConstantEstimate;

    fn est(v: f64) -> ConstantEstimate {
        ConstantEstimate {
            name: "x".into(),
            value: v,
            method: "fixed".into(),
            iters: 0,
        }
    }

    #[test]
    fn m0_by_substitution() {
        // |u0|² = 1, ν = 0.1, L_P = 0.2251, τΣ|g|² = 2.
        let traj = TrajectoryRecord {
            n: 1,
            tau: 1.0,
            times: vec![0.0, 1.0, 2.0],
            l2_norm: vec![1.0, 0.5, 0.5],
            h1_seminorm: vec![0.0, 1.0, 1.0],
            forcing_l2: vec![0.0, 1.0, 1.0],
            constraint_violation: vec![0.0; 3],
            step_iters: vec![0; 3],
            step_residual: vec![0.0; 3],
            u0_l2: 1.0,
            snapshot_steps: vec![0, 2],
            snapshots: vec![],
        };
        let cfg = crate::scenario::test_config();
        let cfg = SimulationConfig { nu: 0.1, ..cfg };
        let l = energy_check(&traj, &cfg, 0.2251).unwrap();
        assert!((l.m0 - (1.0 + 0.2251f64.powi(2) * 2.0 / 0.1)).abs() < 1e-14);
        assert!((l.m0 - 2.01340).abs() < 1e-5);
        assert_eq!(l.dissipation, vec![0.0, 0.1, 0.2]);
        assert!(l.work_form.is_none());
    }

    #[test]
    fn identical_pair_has_no_perturbation() {
        let g = MacGrid::unit(8).unwrap();
        let v = VectorField::from_stream(&g, |x, y| (x * y).sin());
        let r = perturbation_structure_check(&g, &v, &v).unwrap();
        assert_eq!((r.total, r.first_sum, r.second_sum, r.bound), (0.0, 0.0, 0.0, 0.0));
        assert!(r.ok());
        let mut bad = v.clone();
        bad.u[g.u_idx(2, 2)] += 1.0;
        assert!(perturbation_structure_check(&g, &bad, &v).is_err());
    }

    #[test]
    fn m_kappa_formula() {
        let c = ConstantsReport {
            l_p: est(0.2),
            l0: est(0.3),
            l1: est(0.2),
            l2: est(1.2),
            l3: est(0.16),
            lower_estimates: true,
        };
        let cfg = crate::scenario::test_config();
        let traj = TrajectoryRecord {
            n: 8,
            tau: 0.5,
            times: vec![0.0, 0.5, 1.0],
            l2_norm: vec![0.0; 3],
            h1_seminorm: vec![0.0; 3],
            forcing_l2: vec![0.0, 2.0, 2.0],
            u0_l2: 0.0,
            snapshot_steps: vec![0, 1, 2],
            snapshots: vec![VectorField::zeros(&cfg.mac_grid().unwrap()); 3],
            ..Default::default()
        };
        let grid = cfg.mac_grid().unwrap();
        let sub = Subcylinder {
            mask: CellMask::rect(&grid, 1, 3, 1, 3).unwrap(),
            t1: 0.0,
            t1p: cfg.horizon,
        };
        let r = bv_estimate(&[traj], &cfg, &sub, 0.5, &c, DualNormParams::default()).unwrap();
        let nu = cfg.nu;
        // L_P = 0.2 enters M0; τΣ|g|² = 4.
        let m0 = 0.04 / nu * 4.0;
        let m1 = (nu * m0).sqrt() + 0.2 * 2.0;
        let m2 = 9.0 * 0.16 * m0 / nu.sqrt();
        let m3 = m1 * 1.2f64.sqrt() + m2;
        assert!((r.m_kappa - (2.0 * 0.3 * m0 / 0.5 + m3 * cfg.horizon.sqrt())).abs() < 1e-12 * r.m_kappa);
        assert_eq!(r.max_tv(), 0.0);
    }
}
