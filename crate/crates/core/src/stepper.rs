//! Implicit Euler time marching of the regularized problems and ladder runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{cell_vectors, norm_l2, seminorm_h1, MacGrid, VectorField};
use crate::obstacle::{
    build_ladder, Extended, LadderMember, ObstacleField, ObstaclePreset, SamplingLattice,
};
use crate::scenario::{ForcingPreset, InitialPreset};
use crate::vi_step::{
    shrink_test_function, solve_step, step_vi_residual, SplitParams, StepProblem, StepSolution,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<MacGrid> {
        MacGrid::new(self.nx, self.ny, self.lx, self.ly)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Keep every `cadence`-th state (the final state is always kept).
    pub cadence: usize,
    /// Run directory, relative to the output root.
    pub directory: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            cadence: 1,
            directory: "out".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub grid: GridSpec,
    pub tau: f64,
    /// Final time `T`.
    pub horizon: f64,
    pub nu: f64,
    pub obstacle: ObstaclePreset,
    pub ladder: Vec<u64>,
    pub forcing: ForcingPreset,
    pub initial: InitialPreset,
    pub output: OutputSpec,
    pub tolerances: SplitParams,
}

impl SimulationConfig {
    pub fn mac_grid(&self) -> Result<MacGrid> {
        self.grid.build()
    }

    /// Number of time steps `K = T/τ`.
    pub fn steps(&self) -> usize {
        (self.horizon / self.tau).round().max(1.0) as usize
    }

    /// Every violated rule, not only the first.
    pub fn problems(&self) -> Vec<String> {
        let mut e = Vec::new();
        if let Err(err) = self.grid.build() {
            e.push(format!("grid: {err}"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            e.push(format!("time.tau must be > 0, got {}", self.tau));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            e.push(format!("time.horizon must be > 0, got {}", self.horizon));
        }
        if self.tau > 0.0 && self.horizon > 0.0 {
            let k = (self.horizon / self.tau).round();
            if k < 1.0 || (k * self.tau - self.horizon).abs() > 1e-9 * self.horizon {
                e.push(format!(
                    "time.tau = {} must divide time.horizon = {}",
                    self.tau, self.horizon
                ));
            }
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            e.push(format!("physics.nu must be > 0, got {}", self.nu));
        }
        if self.ladder.is_empty() {
            e.push("ladder.indices must not be empty".into());
        } else if self.ladder[0] == 0 || self.ladder.windows(2).any(|w| w[0] >= w[1]) {
            e.push(format!(
                "ladder.indices must be positive and strictly increasing, got {:?}",
                self.ladder
            ));
        }
        if let Some(n) = self.ladder.iter().find(|&&n| i64::try_from(n).is_err()) {
            e.push(format!("ladder.indices must be <= {}, got {n}", i64::MAX));
        }
        if self.output.cadence == 0 {
            e.push("output.cadence must be >= 1".into());
        }
        if let Err(err) =
            ObstacleField::new(self.grid.lx, self.grid.ly, self.horizon.max(1e-300), self.obstacle.clone())
        {
            e.push(err.to_string());
        }
        e.extend(self.forcing.validate());
        e.extend(self.initial.validate());
        let t = &self.tolerances;
        if t.rho.is_some_and(|r| !(r > 0.0)) {
            e.push("tolerances.rho must be > 0".into());
        }
        if !(t.relaxation > 0.0 && t.relaxation < 2.0) {
            e.push(format!("tolerances.relaxation must lie in (0, 2), got {}", t.relaxation));
        }
        if !(t.feas_tol > 0.0) {
            e.push(format!("tolerances.feas_tol must be > 0, got {}", t.feas_tol));
        }
        if !(t.kkt_tol > 0.0) {
            e.push(format!("tolerances.kkt_tol must be > 0, got {}", t.kkt_tol));
        }
        if t.max_iter == 0 {
            e.push("tolerances.max_iter must be >= 1".into());
        }
        e
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.problems();
        if e.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(e))
        }
    }

    pub fn obstacle_field(&self) -> Result<ObstacleField> {
        ObstacleField::new(self.grid.lx, self.grid.ly, self.horizon, self.obstacle.clone())
    }

    pub fn lattice(&self) -> Result<SamplingLattice> {
        SamplingLattice::new(self.mac_grid()?, self.tau, self.steps())
    }

    /// `t_k = kτ`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.tau
    }

    pub fn forcing_at(&self, grid: &MacGrid, t: f64) -> VectorField {
        self.forcing.sample(grid, t)
    }
}

/// Per-step scalars and strided states of one trajectory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    /// Ladder index of the obstacle member.
    pub n: u64,
    pub tau: f64,
    /// `t_k` for `k = 0..=K` (rows below share this indexing).
    pub times: Vec<f64>,
    pub l2_norm: Vec<f64>,
    pub h1_seminorm: Vec<f64>,
    /// `|g(t_k)|₀,₂`.
    pub forcing_l2: Vec<f64>,
    /// `max_c (|u_c| − p_n)⁺`.
    pub constraint_violation: Vec<f64>,
    pub step_iters: Vec<usize>,
    /// Step inequality residual over the probes `0` and the admissible rescaling of `u_prev`.
    pub step_residual: Vec<f64>,
    /// `|u₀|₀,₂` before the initial shrink.
    pub u0_l2: f64,
    /// Step indices of the kept states.
    pub snapshot_steps: Vec<usize>,
    pub snapshots: Vec<VectorField>,
}

impl TrajectoryRecord {
    pub fn steps(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        self.snapshot_steps.iter().map(|&k| self.times[k]).collect()
    }

    pub fn final_state(&self) -> Option<&VectorField> {
        self.snapshots.last()
    }

    pub fn max_violation(&self) -> f64 {
        self.constraint_violation.iter().copied().fold(0.0, f64::max)
    }
}

/// `(δ̂, M̂)` for the initial shrink: `δ̂` is the least obstacle value on the
/// support of `u₀` (capped at `max|u₀|` where the obstacle is infinite), and
/// `M̂ = δ̂ + max|u₀|`.
pub fn initial_margin(grid: &MacGrid, u0: &VectorField, p0: &[Extended]) -> Result<Option<(f64, f64)>> {
    let speeds: Vec<f64> = cell_vectors(grid, u0).iter().map(|c| c[0].hypot(c[1])).collect();
    let sup = speeds.iter().copied().fold(0.0, f64::max);
    if sup == 0.0 {
        return Ok(None);
    }
    let mut delta = f64::INFINITY;
    for (c, (&s, &p)) in speeds.iter().zip(p0).enumerate() {
        if s == 0.0 {
            continue;
        }
        if p.le(0.0) {
            return Err(Error::config(format!(
                "initial data has no positive support margin: u0 is nonzero at cell {c} where p(.,0) = 0"
            )));
        }
        if p.le(s * (1.0 - 1e-12)) {
            return Err(Error::config(format!(
                "initial data exceeds the obstacle at cell {c}: |u0| = {s} > p(.,0) = {p}"
            )));
        }
        delta = delta.min(p.min_with(sup));
    }
    Ok(Some((delta, delta + sup)))
}

/// `u₀ₙ = (1 − δ̂ₙ)⁺ u₀`, admissible for `p_n(·, 0)`.
pub fn build_initial_data(
    grid: &MacGrid,
    u0: &VectorField,
    p: &ObstacleField,
    member: &LadderMember,
) -> Result<VectorField> {
    u0.check(grid)?;
    let p0: Vec<Extended> = grid
        .cells()
        .map(|(i, j)| {
            let (x, y) = grid.cell_center(i, j);
            p.evaluate(x, y, 0.0)
        })
        .collect();
    let Some((delta, m)) = initial_margin(grid, u0, &p0)? else {
        return Ok(u0.clone());
    };
    let slice = member.slice(0, grid.num_cells());
    shrink_test_function(grid, u0, delta, &p0, slice, m).map(|(_, v)| v)
}

fn violation(grid: &MacGrid, u: &VectorField, p: &[f64]) -> f64 {
    cell_vectors(grid, u)
        .iter()
        .zip(p)
        .fold(0.0, |m, (c, &pc)| m.max(c[0].hypot(c[1]) - pc))
}

/// `u_prev` scaled into `{|z| ≤ p}`.
fn admissible_rescale(grid: &MacGrid, u: &VectorField, p: &[f64]) -> VectorField {
    let s = cell_vectors(grid, u)
        .iter()
        .zip(p)
        .map(|(c, &pc)| (c[0].hypot(c[1]), pc))
        .filter(|(sp, _)| *sp > 0.0)
        .fold(1.0_f64, |m, (sp, pc)| m.min(pc / sp));
    u.scaled(s)
}

/// Runs `P(p_n; g, u₀ₙ)` with the member `n` of the configured obstacle.
pub fn run(config: &SimulationConfig, n: u64) -> Result<TrajectoryRecord> {
    config.validate()?;
    let grid = config.mac_grid()?;
    let field = config.obstacle_field()?;
    let lattice = config.lattice()?;
    let ladder = build_ladder(&field, &[n], &lattice)?;
    let member = &ladder.members[0];
    let u0 = config.initial.sample(&grid)?;
    let start = build_initial_data(&grid, &u0, &field, member)?;
    march(config, &grid, member, &u0, start)
}

fn march(
    config: &SimulationConfig,
    grid: &MacGrid,
    member: &LadderMember,
    u0: &VectorField,
    start: VectorField,
) -> Result<TrajectoryRecord> {
    let k_max = config.steps();
    let cells = grid.num_cells();
    let cadence = config.output.cadence;
    let mut rec = TrajectoryRecord {
        n: member.n,
        tau: config.tau,
        u0_l2: norm_l2(grid, u0)?,
        ..Default::default()
    };
    let push = |rec: &mut TrajectoryRecord, k: usize, u: &VectorField, g: f64, it: usize, res: f64| -> Result<()> {
        rec.times.push(config.time(k));
        rec.l2_norm.push(norm_l2(grid, u)?);
        rec.h1_seminorm.push(seminorm_h1(grid, u)?);
        rec.forcing_l2.push(g);
        rec.constraint_violation.push(violation(grid, u, member.slice(k, cells)).max(0.0));
        rec.step_iters.push(it);
        rec.step_residual.push(res);
        if k % cadence == 0 || k == k_max {
            rec.snapshot_steps.push(k);
            rec.snapshots.push(u.clone());
        }
        Ok(())
    };
    let g0 = norm_l2(grid, &config.forcing_at(grid, 0.0))?;
    push(&mut rec, 0, &start, g0, 0, 0.0)?;
    let mut u = start;
    for k in 0..k_max {
        let g = config.forcing_at(grid, config.time(k + 1));
        let prob = StepProblem {
            u_prev: u,
            p_slice: member.slice(k + 1, cells).to_vec(),
            g_slice: g,
            nu: config.nu,
            tau: config.tau,
        };
        let outcome = solve_step(grid, &prob, &config.tolerances).and_then(|sol: StepSolution| {
            let probes = [
                VectorField::zeros(grid),
                admissible_rescale(grid, &prob.u_prev, &prob.p_slice),
            ];
            let res = step_vi_residual(grid, &sol, &prob, &probes, config.tolerances.feas_tol)?;
            Ok((sol, res))
        });
        let (sol, res) = match outcome {
            Ok(x) => x,
            Err(source) => {
                return Err(Error::StepFailed {
                    step: k + 1,
                    partial: Box::new(rec),
                    source: Box::new(source),
                })
            }
        };
        let gl2 = norm_l2(grid, &prob.g_slice)?;
        push(&mut rec, k + 1, &sol.u, gl2, sol.iterations, res)?;
        u = sol.u;
    }
    Ok(rec)
}

/// `D(n, m)` for one consecutive ladder pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauchyProbe {
    pub n: u64,
    pub m: u64,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderRun {
    pub indices: Vec<u64>,
    pub records: Vec<TrajectoryRecord>,
    /// `D[a][b] = ‖u_{n_a} − u_{n_b}‖` in the discrete `L²(Q)`.
    pub distance: Vec<Vec<f64>>,
    pub cauchy: Vec<CauchyProbe>,
}

impl LadderRun {
    /// Is `D(n_i, n_{i+1})` nonincreasing along the ladder?
    pub fn cauchy_nonincreasing(&self) -> bool {
        self.cauchy
            .windows(2)
            .all(|w| w[1].distance <= w[0].distance * (1.0 + 1e-12) + 1e-14)
    }

    /// CSV of the distance matrix, first column and header carry the indices.
    pub fn distance_csv(&self) -> String {
        let mut s = String::from("n");
        for n in &self.indices {
            s.push_str(&format!(",{n}"));
        }
        s.push('\n');
        for (n, row) in self.indices.iter().zip(&self.distance) {
            s.push_str(&n.to_string());
            for d in row {
                s.push_str(&format!(",{d:.12e}"));
            }
            s.push('\n');
        }
        s
    }
}

/// `‖a − b‖_{L²(Q)}` with the right-endpoint rule on the kept states.
pub fn l2q_distance(grid: &MacGrid, a: &TrajectoryRecord, b: &TrajectoryRecord) -> Result<f64> {
    if a.snapshot_steps != b.snapshot_steps || a.times != b.times {
        return Err(Error::Shape {
            expected: format!("{} kept states", a.snapshot_steps.len()),
            got: format!("{} kept states on a different partition", b.snapshot_steps.len()),
        });
    }
    let mut acc = 0.0;
    for w in 1..a.snapshot_steps.len() {
        let dt = a.times[a.snapshot_steps[w]] - a.times[a.snapshot_steps[w - 1]];
        let d = norm_l2(grid, &a.snapshots[w].sub(&b.snapshots[w]))?;
        acc += dt * d * d;
    }
    Ok(acc.sqrt())
}

/// Runs every ladder member on the shared grid and time step.
pub fn run_ladder(config: &SimulationConfig) -> Result<LadderRun> {
    config.validate()?;
    if config.ladder.len() < 2 {
        return Err(Error::config("ladder needs >= 2 indices"));
    }
    let grid = config.mac_grid()?;
    let field = config.obstacle_field()?;
    let lattice = config.lattice()?;
    let ladder = build_ladder(&field, &config.ladder, &lattice)?;
    let u0 = config.initial.sample(&grid)?;
    let records = ladder
        .members
        .par_iter()
        .map(|m| {
            let start = build_initial_data(&grid, &u0, &field, m)?;
            march(config, &grid, m, &u0, start)
        })
        .collect::<Result<Vec<_>>>()?;
    let k = records.len();
    let mut distance = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in a + 1..k {
            let d = l2q_distance(&grid, &records[a], &records[b])?;
            distance[a][b] = d;
            distance[b][a] = d;
        }
    }
    let cauchy = (1..k)
        .map(|a| CauchyProbe {
            n: config.ladder[a - 1],
            m: config.ladder[a],
            distance: distance[a - 1][a],
        })
        .collect();
    Ok(LadderRun {
        indices: config.ladder.clone(),
        records,
        distance,
        cauchy,
    })
}
