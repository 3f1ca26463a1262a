//! Velocity obstacles `p(x, t) ∈ [0, ∞]` and their regularized ladders.
//!
//! A ladder member `p_n` is the cutoff `clamp(p, 1/n, n)` averaged over a
//! space-time box of radius `r_n = max(2h, 1/(4n))`, sampled at cell centers
//! and time nodes `t_k = kτ`. Members are finite, strictly positive and
//! Lipschitz on the lattice.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellMask, MacGrid};

/// A value in `[0, ∞]`.
///
/// The infinite value only enters arithmetic through [`alpha_transform`] and
/// [`cutoff`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub fn is_infinite(self) -> bool {
        matches!(self, Extended::Infinite)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(x) => Some(x),
            Extended::Infinite => None,
        }
    }

    /// `min(self, m)` for finite `m`.
    pub fn min_with(self, m: f64) -> f64 {
        match self {
            Extended::Finite(x) => x.min(m),
            Extended::Infinite => m,
        }
    }

    /// `self ≤ x`, with `∞ ≤ x` false for every finite `x`.
    pub fn le(self, x: f64) -> bool {
        self.finite().is_some_and(|v| v <= x)
    }

    fn check(self) -> Result<f64> {
        match self {
            Extended::Finite(x) if x >= 0.0 && x.is_finite() => Ok(x),
            Extended::Finite(x) => Err(Error::domain(format!(
                "obstacle value must lie in [0, ∞], got {x}"
            ))),
            Extended::Infinite => Ok(f64::INFINITY),
        }
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(x) => write!(f, "{x}"),
            Extended::Infinite => write!(f, "inf"),
        }
    }
}

/// `α = p / (1 + p)`, with `α(∞) = 1`.
pub fn alpha_transform(p: Extended) -> Result<f64> {
    let x = p.check()?;
    Ok(if x.is_infinite() { 1.0 } else { x / (1.0 + x) })
}

/// `clamp(p, 1/n, n)`.
pub fn cutoff(p: Extended, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("ladder index must be at least 1"));
    }
    let x = p.check()?;
    let n = n as f64;
    Ok(x.clamp(1.0 / n, n))
}

/// Analytic obstacle families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum ObstaclePreset {
    /// `p ≡ ∞`.
    FreeFlow,
    /// `p ≡ value`.
    Constant { value: f64 },
    /// A finite cap well above every attained speed.
    LidFreeCheck { cap: f64 },
    /// A column of walls at `x = throat_x` with a gap around `y = gap_center`
    /// whose half-width shrinks linearly from `gap_start` to `gap_end`.
    ///
    /// `p = p_max · (1 − φ(x) (1 − γ_t(y)))` with `cos²` profiles `φ` (half-width
    /// `throat_half_width`) and `γ_t` (edge width `edge`).
    NarrowingChannel {
        p_max: f64,
        throat_x: f64,
        throat_half_width: f64,
        gap_center: f64,
        gap_start: f64,
        gap_end: f64,
        edge: f64,
    },
    /// `p = 0` in a disk of radius `R(t) = r0 + (r1 − r0) t/T`, `p = ∞` beyond
    /// a transition annulus of width `width`, with `α` linear across the annulus.
    GrowingDisk {
        center_x: f64,
        center_y: f64,
        r0: f64,
        r1: f64,
        width: f64,
    },
    /// `p = p_open · s(t)`: `s` ramps from 1 to 0 on `[close_start, close_end]`,
    /// stays 0, then ramps back to 1 on `[reopen_start, reopen_end]`.
    TotalBlockage {
        p_open: f64,
        close_start: f64,
        close_end: f64,
        reopen_start: f64,
        reopen_end: f64,
    },
}

impl ObstaclePreset {
    pub const NAMES: [&'static str; 6] = [
        "free-flow",
        "constant",
        "lid-free-check",
        "narrowing-channel",
        "growing-disk",
        "total-blockage",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ObstaclePreset::FreeFlow => "free-flow",
            ObstaclePreset::Constant { .. } => "constant",
            ObstaclePreset::LidFreeCheck { .. } => "lid-free-check",
            ObstaclePreset::NarrowingChannel { .. } => "narrowing-channel",
            ObstaclePreset::GrowingDisk { .. } => "growing-disk",
            ObstaclePreset::TotalBlockage { .. } => "total-blockage",
        }
    }

    /// Default parameters on `[0, lx] × [0, ly] × [0, horizon]`.
    pub fn default_for(name: &str, lx: f64, ly: f64, horizon: f64) -> Option<Self> {
        Some(match name {
            "free-flow" => ObstaclePreset::FreeFlow,
            "constant" => ObstaclePreset::Constant { value: 1.0 },
            "lid-free-check" => ObstaclePreset::LidFreeCheck { cap: 1e3 },
            "narrowing-channel" => ObstaclePreset::NarrowingChannel {
                p_max: 2.0,
                throat_x: 0.5 * lx,
                throat_half_width: 0.15 * lx,
                gap_center: 0.5 * ly,
                gap_start: 0.3 * ly,
                gap_end: 0.1 * ly,
                edge: 0.1 * ly,
            },
            "growing-disk" => ObstaclePreset::GrowingDisk {
                center_x: 0.5 * lx,
                center_y: 0.5 * ly,
                r0: 0.1 * lx.min(ly),
                r1: 0.25 * lx.min(ly),
                width: 0.1 * lx.min(ly),
            },
            "total-blockage" => ObstaclePreset::TotalBlockage {
                p_open: 2.0,
                close_start: 0.1 * horizon,
                close_end: 0.3 * horizon,
                reopen_start: 0.6 * horizon,
                reopen_end: 0.8 * horizon,
            },
            _ => return None,
        })
    }

    fn validate(&self) -> Result<()> {
        let pos = |name: &str, x: f64| -> Result<()> {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "obstacle.{name} must be > 0, got {x}"
                )))
            }
        };
        match *self {
            ObstaclePreset::FreeFlow => Ok(()),
            ObstaclePreset::Constant { value } => {
                if value >= 0.0 && value.is_finite() {
                    Ok(())
                } else {
                    Err(Error::config(format!(
                        "obstacle.value must be finite and >= 0, got {value}"
                    )))
                }
            }
            ObstaclePreset::LidFreeCheck { cap } => pos("cap", cap),
            ObstaclePreset::NarrowingChannel {
                p_max,
                throat_half_width,
                gap_start,
                gap_end,
                edge,
                ..
            } => {
                pos("p_max", p_max)?;
                pos("throat_half_width", throat_half_width)?;
                pos("edge", edge)?;
                if !(gap_start >= 0.0 && gap_end >= 0.0) {
                    return Err(Error::config("obstacle gap half-widths must be >= 0"));
                }
                Ok(())
            }
            ObstaclePreset::GrowingDisk { r0, r1, width, .. } => {
                pos("width", width)?;
                if !(r0 >= 0.0 && r1 >= 0.0) {
                    return Err(Error::config("obstacle radii must be >= 0"));
                }
                Ok(())
            }
            ObstaclePreset::TotalBlockage {
                p_open,
                close_start,
                close_end,
                reopen_start,
                reopen_end,
            } => {
                pos("p_open", p_open)?;
                if !(0.0 <= close_start
                    && close_start < close_end
                    && close_end <= reopen_start
                    && reopen_start < reopen_end)
                {
                    return Err(Error::config(
                        "obstacle times must satisfy 0 <= close_start < close_end <= reopen_start < reopen_end",
                    ));
                }
                Ok(())
            }
        }
    }
}

/// `p` on `[0, lx] × [0, ly] × [0, horizon]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleField {
    pub lx: f64,
    pub ly: f64,
    pub horizon: f64,
    pub preset: ObstaclePreset,
}

fn cos2_bump(d: f64, half_width: f64) -> f64 {
    if d.abs() >= half_width {
        0.0
    } else {
        let c = (std::f64::consts::FRAC_PI_2 * d / half_width).cos();
        c * c
    }
}

impl ObstacleField {
    pub fn new(lx: f64, ly: f64, horizon: f64, preset: ObstaclePreset) -> Result<Self> {
        if !(lx > 0.0 && ly > 0.0 && horizon > 0.0) {
            return Err(Error::config("obstacle domain and horizon must be positive"));
        }
        preset.validate()?;
        Ok(Self {
            lx,
            ly,
            horizon,
            preset,
        })
    }

    pub fn for_grid(grid: &MacGrid, horizon: f64, preset: ObstaclePreset) -> Result<Self> {
        Self::new(grid.lx(), grid.ly(), horizon, preset)
    }

    pub fn evaluate(&self, x: f64, y: f64, t: f64) -> Extended {
        use Extended::*;
        match self.preset {
            ObstaclePreset::FreeFlow => Infinite,
            ObstaclePreset::Constant { value } => Finite(value),
            ObstaclePreset::LidFreeCheck { cap } => Finite(cap),
            ObstaclePreset::NarrowingChannel {
                p_max,
                throat_x,
                throat_half_width,
                gap_center,
                gap_start,
                gap_end,
                edge,
            } => {
                let phi = cos2_bump(x - throat_x, throat_half_width);
                let gap = gap_start + (gap_end - gap_start) * (t / self.horizon);
                let d = (y - gap_center).abs();
                let open = if d <= gap {
                    1.0
                } else {
                    cos2_bump(d - gap, edge)
                };
                Finite(p_max * (1.0 - phi * (1.0 - open)))
            }
            ObstaclePreset::GrowingDisk {
                center_x,
                center_y,
                r0,
                r1,
                width,
            } => {
                let r = r0 + (r1 - r0) * (t / self.horizon);
                let s = (x - center_x).hypot(y - center_y) - r;
                let a = (s / width).clamp(0.0, 1.0);
                if a >= 1.0 {
                    Infinite
                } else {
                    Finite(a / (1.0 - a))
                }
            }
            ObstaclePreset::TotalBlockage { p_open, .. } => Finite(p_open * self.blockage_profile(t)),
        }
    }

    fn blockage_profile(&self, t: f64) -> f64 {
        let ObstaclePreset::TotalBlockage {
            close_start,
            close_end,
            reopen_start,
            reopen_end,
            ..
        } = self.preset
        else {
            return 1.0;
        };
        if t <= close_start {
            1.0
        } else if t < close_end {
            (close_end - t) / (close_end - close_start)
        } else if t <= reopen_start {
            0.0
        } else if t < reopen_end {
            (t - reopen_start) / (reopen_end - reopen_start)
        } else {
            1.0
        }
    }

    pub fn alpha(&self, x: f64, y: f64, t: f64) -> f64 {
        alpha_transform(self.evaluate(x, y, t)).expect("presets are nonnegative")
    }

    /// Declared modulus of continuity `ω(d)` of `α` for space-time distance `d`.
    pub fn modulus(&self, d: f64) -> f64 {
        use std::f64::consts::FRAC_PI_2;
        match self.preset {
            ObstaclePreset::FreeFlow
            | ObstaclePreset::Constant { .. }
            | ObstaclePreset::LidFreeCheck { .. } => 0.0,
            // dα/dp ≤ 1, so Lipschitz bounds on p carry over to α.
            ObstaclePreset::NarrowingChannel {
                p_max,
                throat_half_width,
                gap_start,
                gap_end,
                edge,
                ..
            } => {
                let speed = (gap_end - gap_start).abs() / self.horizon;
                p_max * (FRAC_PI_2 / throat_half_width + FRAC_PI_2 / edge * (1.0 + speed)) * d
            }
            ObstaclePreset::GrowingDisk { r0, r1, width, .. } => {
                (1.0 + (r1 - r0).abs() / self.horizon) / width * d
            }
            ObstaclePreset::TotalBlockage {
                p_open,
                close_start,
                close_end,
                reopen_start,
                reopen_end,
            } => p_open * d / (close_end - close_start).min(reopen_end - reopen_start),
        }
    }

    /// Samples on the lattice: index `k * cells + c`.
    pub fn sample(&self, lattice: &SamplingLattice) -> Vec<Extended> {
        let g = &lattice.grid;
        let mut out = Vec::with_capacity(lattice.len());
        for k in 0..=lattice.steps {
            let t = lattice.time(k);
            for (i, j) in g.cells() {
                let (x, y) = g.cell_center(i, j);
                out.push(self.evaluate(x, y, t));
            }
        }
        out
    }

    /// Largest `|Δα| − ω(d)` over lattice neighbours (≤ 0 when continuity holds).
    pub fn alpha_continuity_excess(&self, lattice: &SamplingLattice) -> f64 {
        let a: Vec<f64> = self
            .sample(lattice)
            .into_iter()
            .map(|p| alpha_transform(p).expect("presets are nonnegative"))
            .collect();
        let g = &lattice.grid;
        let (h, tau) = (g.h(), lattice.tau);
        let nc = g.num_cells();
        let mut worst = f64::NEG_INFINITY;
        for k in 0..=lattice.steps {
            for (i, j) in g.cells() {
                let c = k * nc + g.cell(i, j);
                if i + 1 < g.nx() {
                    worst = worst.max((a[c + 1] - a[c]).abs() - self.modulus(h));
                }
                if j + 1 < g.ny() {
                    worst = worst.max((a[c + g.nx()] - a[c]).abs() - self.modulus(h));
                }
                if k < lattice.steps {
                    worst = worst.max((a[c + nc] - a[c]).abs() - self.modulus(tau));
                }
            }
        }
        worst
    }
}

/// Cell centers × time nodes `t_k = kτ`, `k = 0..=steps`.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingLattice {
    pub grid: MacGrid,
    pub tau: f64,
    pub steps: usize,
}

impl SamplingLattice {
    pub fn new(grid: MacGrid, tau: f64, steps: usize) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) || steps == 0 {
            return Err(Error::config("lattice needs tau > 0 and at least one step"));
        }
        Ok(Self { grid, tau, steps })
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.tau
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.steps)
    }

    /// Number of lattice points.
    pub fn len(&self) -> usize {
        (self.steps + 1) * self.grid.num_cells()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// One regularized member `p_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct LadderMember {
    pub n: u64,
    /// Mollifier radius `r_n` (length and time units alike).
    pub radius: f64,
    /// Lattice samples, index `k * cells + c`.
    pub values: Vec<f64>,
    /// Lattice estimate of the Lipschitz constant.
    pub lipschitz: f64,
    /// `μ_n`, the lattice minimum.
    pub min_value: f64,
    pub max_value: f64,
    /// Oscillation of the cutoff over each averaging box; bounds `|p_n − cutoff(p)|`.
    pub local_floor: Vec<f64>,
}

impl LadderMember {
    /// `p_n(·, t_k)` at the cell centers.
    pub fn slice(&self, k: usize, cells: usize) -> &[f64] {
        &self.values[k * cells..(k + 1) * cells]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObstacleLadder {
    pub base: ObstacleField,
    pub lattice: SamplingLattice,
    pub members: Vec<LadderMember>,
}

impl ObstacleLadder {
    pub fn member(&self, n: u64) -> Option<&LadderMember> {
        self.members.iter().find(|m| m.n == n)
    }

    pub fn indices(&self) -> Vec<u64> {
        self.members.iter().map(|m| m.n).collect()
    }

    /// `p_n(·, t_k)`.
    pub fn slice(&self, n: u64, k: usize) -> Option<&[f64]> {
        self.member(n).map(|m| m.slice(k, self.lattice.grid.num_cells()))
    }
}

/// Mollifier radius `r_n = max(2h, 1/(4n))`.
pub fn mollifier_radius(h: f64, n: u64) -> f64 {
    (2.0 * h).max(0.25 / n as f64)
}

pub fn build_ladder(
    p: &ObstacleField,
    indices: &[u64],
    lattice: &SamplingLattice,
) -> Result<ObstacleLadder> {
    if indices.is_empty() {
        return Err(Error::config("ladder needs at least one index"));
    }
    if indices[0] == 0 || indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config(format!(
            "ladder indices must be positive and strictly increasing, got {indices:?}"
        )));
    }
    let samples = p.sample(lattice);
    let members = indices
        .iter()
        .map(|&n| build_member(&samples, n, lattice))
        .collect::<Result<Vec<_>>>()?;
    Ok(ObstacleLadder {
        base: p.clone(),
        lattice: lattice.clone(),
        members,
    })
}

fn build_member(samples: &[Extended], n: u64, lattice: &SamplingLattice) -> Result<LadderMember> {
    let g = &lattice.grid;
    let h = g.h();
    let r = mollifier_radius(h, n);
    if lattice.tau > r {
        return Err(Error::config(format!(
            "time step {} does not resolve the mollifier radius {r} of member n = {n}",
            lattice.tau
        )));
    }
    let cut: Vec<f64> = samples
        .iter()
        .map(|&v| cutoff(v, n))
        .collect::<Result<_>>()?;
    let dims = [g.nx(), g.ny(), lattice.steps + 1];
    let reach = [
        (r / h + 1e-9).floor() as usize,
        (r / h + 1e-9).floor() as usize,
        (r / lattice.tau + 1e-9).floor() as usize,
    ];
    let values = box_filter(&cut, dims, reach, Reduce::Mean);
    let hi = box_filter(&cut, dims, reach, Reduce::Max);
    let lo = box_filter(&cut, dims, reach, Reduce::Min);
    let local_floor: Vec<f64> = hi.iter().zip(&lo).map(|(a, b)| a - b).collect();

    let (nx, ny, nt) = (dims[0], dims[1], dims[2]);
    let mut slope = [0.0_f64; 3];
    for k in 0..nt {
        for j in 0..ny {
            for i in 0..nx {
                let c = i + nx * (j + ny * k);
                if i + 1 < nx {
                    slope[0] = slope[0].max((values[c + 1] - values[c]).abs() / h);
                }
                if j + 1 < ny {
                    slope[1] = slope[1].max((values[c + nx] - values[c]).abs() / h);
                }
                if k + 1 < nt {
                    slope[2] = slope[2].max((values[c + nx * ny] - values[c]).abs() / lattice.tau);
                }
            }
        }
    }
    let lipschitz = slope.iter().map(|s| s * s).sum::<f64>().sqrt();
    let min_value = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max_value = values.iter().copied().fold(0.0, f64::max);
    if !(min_value > 0.0 && max_value.is_finite()) {
        return Err(Error::Invariant(format!(
            "ladder member {n} left (0, ∞): min {min_value}, max {max_value}"
        )));
    }
    Ok(LadderMember {
        n,
        radius: r,
        values,
        lipschitz,
        min_value,
        max_value,
        local_floor,
    })
}

#[derive(Clone, Copy)]
enum Reduce {
    Mean,
    Max,
    Min,
}

/// Separable box filter on a `dims[0] × dims[1] × dims[2]` array (first index
/// fastest), truncated at the edges.
fn box_filter(data: &[f64], dims: [usize; 3], reach: [usize; 3], op: Reduce) -> Vec<f64> {
    let mut cur = data.to_vec();
    let strides = [1, dims[0], dims[0] * dims[1]];
    for axis in 0..3 {
        let (len, stride, r) = (dims[axis], strides[axis], reach[axis]);
        if r == 0 {
            continue;
        }
        let mut next = vec![0.0; cur.len()];
        let mut line = vec![0.0; len];
        for start in 0..cur.len() {
            // Visit each line once, from its first element.
            if (start / stride) % len != 0 {
                continue;
            }
            for (a, slot) in line.iter_mut().enumerate() {
                *slot = cur[start + a * stride];
            }
            for a in 0..len {
                let lo = a.saturating_sub(r);
                let hi = (a + r + 1).min(len);
                let w = &line[lo..hi];
                next[start + a * stride] = match op {
                    Reduce::Mean => w.iter().sum::<f64>() / w.len() as f64,
                    Reduce::Max => w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    Reduce::Min => w.iter().copied().fold(f64::INFINITY, f64::min),
                };
            }
        }
        cur = next;
    }
    cur
}

/// One `(n, κ)` row of the ladder validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub n: u64,
    pub kappa: f64,
    /// `max |p_n − p|` over the sampled `Q̄(p ≤ κ)`; 0 when that set is empty.
    pub sup_distance: f64,
    /// Mollification floor: largest box oscillation over the same set.
    pub floor: f64,
    /// `2 L_n r_n`.
    pub lipschitz_floor: f64,
    /// `M − floor ≤ p_n ≤ p + floor` on `Q̄(p > M)` for every listed `M ≤ n`.
    pub sandwich_ok: bool,
}

/// Sandwich check for one `M` across the ladder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichRow {
    pub m: f64,
    /// Per member: does `M ≤ p_n ≤ p` hold on `Q̄(p > M)` up to the floor.
    pub holds: Vec<(u64, bool)>,
    /// Smallest index from which the check holds for every larger member.
    pub n_m: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderValidation {
    pub rows: Vec<ValidationRow>,
    pub sandwich: Vec<SandwichRow>,
    /// Per `κ`: sup-distances nonincreasing in `n`, except where already below the floor.
    pub monotone: Vec<(f64, bool)>,
}

impl LadderValidation {
    pub fn ok(&self) -> bool {
        self.monotone.iter().all(|m| m.1) && self.sandwich.iter().all(|s| s.n_m.is_some())
    }

    /// CSV with columns `n,kappa,sup_distance,sandwich_ok,floor`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,kappa,sup_distance,sandwich_ok,floor\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.12e},{:.12e},{},{:.12e}\n",
                r.n, r.kappa, r.sup_distance, r.sandwich_ok, r.floor
            ));
        }
        s
    }
}

/// Checks the uniform convergence on `Q̄(p ≤ κ)` and the sandwich `M ≤ p_n ≤ p`
/// on `Q̄(p > M)`. Violations are reported, never raised.
pub fn validate_ladder(
    p: &ObstacleField,
    ladder: &ObstacleLadder,
    kappas: &[f64],
    ms: &[f64],
) -> Result<LadderValidation> {
    if ladder.members.is_empty() {
        return Err(Error::domain("cannot validate an empty ladder"));
    }
    let samples = p.sample(&ladder.lattice);
    let sandwich_at = |m: f64, mem: &LadderMember| -> bool {
        samples.iter().enumerate().all(|(c, &pv)| {
            if pv.le(m) {
                return true;
            }
            let (v, fl) = (mem.values[c], mem.local_floor[c]);
            let upper = match pv {
                Extended::Finite(x) => v <= x + fl + 1e-12,
                Extended::Infinite => true,
            };
            v >= m - fl - 1e-12 && upper
        })
    };
    let sandwich: Vec<SandwichRow> = ms
        .iter()
        .map(|&m| {
            let holds: Vec<(u64, bool)> = ladder
                .members
                .iter()
                .map(|mem| (mem.n, sandwich_at(m, mem)))
                .collect();
            let mut n_m = None;
            for &(n, ok) in holds.iter().rev() {
                if ok {
                    n_m = Some(n);
                } else {
                    break;
                }
            }
            SandwichRow { m, holds, n_m }
        })
        .collect();

    let mut rows = Vec::new();
    let mut monotone = Vec::new();
    for &kappa in kappas {
        let mut prev: Option<(f64, f64)> = None;
        let mut mono = true;
        for (idx, mem) in ladder.members.iter().enumerate() {
            let mut sup: f64 = 0.0;
            let mut floor: f64 = 0.0;
            for (c, &pv) in samples.iter().enumerate() {
                if let Extended::Finite(x) = pv {
                    if x <= kappa {
                        sup = sup.max((mem.values[c] - x).abs());
                        floor = floor.max(mem.local_floor[c]);
                    }
                }
            }
            if let Some((ps, _)) = prev {
                if sup > ps + 1e-12 && sup > floor {
                    mono = false;
                }
            }
            prev = Some((sup, floor));
            let sandwich_ok = sandwich
                .iter()
                .filter(|s| s.m <= mem.n as f64)
                .all(|s| s.holds[idx].1);
            rows.push(ValidationRow {
                n: mem.n,
                kappa,
                sup_distance: sup,
                floor,
                lipschitz_floor: 2.0 * mem.lipschitz * mem.radius,
                sandwich_ok,
            });
        }
        monotone.push((kappa, mono));
    }
    Ok(LadderValidation {
        rows,
        sandwich,
        monotone,
    })
}

/// Pointwise class of a lattice sample relative to `κ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// `p = 0`
    Zero,
    /// `0 < p ≤ κ`
    Band,
    /// `κ < p < ∞`
    Above,
    /// `p = ∞`
    Infinite,
}

/// Partition of the sampling lattice by obstacle value.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionMask {
    pub grid: MacGrid,
    pub steps: usize,
    pub kappa: f64,
    /// Index `k * cells + c`.
    pub classes: Vec<Region>,
}

impl RegionMask {
    fn mask_where(&self, k: usize, f: impl Fn(Region) -> bool) -> CellMask {
        let nc = self.grid.num_cells();
        let cells = self.classes[k * nc..(k + 1) * nc].iter().map(|&r| f(r)).collect();
        CellMask::from_vec(&self.grid, cells).expect("shape matches the grid")
    }

    pub fn zero_set(&self, k: usize) -> CellMask {
        self.mask_where(k, |r| r == Region::Zero)
    }

    /// `0 < p ≤ κ`.
    pub fn finite_band(&self, k: usize) -> CellMask {
        self.mask_where(k, |r| r == Region::Band)
    }

    /// `p > κ`, including `p = ∞`.
    pub fn super_level(&self, k: usize) -> CellMask {
        self.mask_where(k, |r| matches!(r, Region::Above | Region::Infinite))
    }

    pub fn infinite_set(&self, k: usize) -> CellMask {
        self.mask_where(k, |r| r == Region::Infinite)
    }
}

pub fn region_classify(p: &ObstacleField, lattice: &SamplingLattice, kappa: f64) -> Result<RegionMask> {
    if !(kappa > 0.0) {
        return Err(Error::domain(format!("kappa must be > 0, got {kappa}")));
    }
    let classes = p
        .sample(lattice)
        .into_iter()
        .map(|v| match v {
            Extended::Infinite => Region::Infinite,
            Extended::Finite(x) if x == 0.0 => Region::Zero,
            Extended::Finite(x) if x <= kappa => Region::Band,
            Extended::Finite(_) => Region::Above,
        })
        .collect();
    Ok(RegionMask {
        grid: lattice.grid,
        steps: lattice.steps,
        kappa,
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(n: usize, tau: f64, steps: usize) -> SamplingLattice {
        SamplingLattice::new(MacGrid::unit(n).unwrap(), tau, steps).unwrap()
    }

    #[test]
    fn alpha_values() {
        assert_eq!(alpha_transform(Extended::Infinite).unwrap(), 1.0);
        assert_eq!(alpha_transform(Extended::Finite(0.0)).unwrap(), 0.0);
        assert_eq!(alpha_transform(Extended::Finite(3.0)).unwrap(), 0.75);
        assert!(alpha_transform(Extended::Finite(-1.0)).is_err());
    }

    #[test]
    fn cutoff_values() {
        assert_eq!(cutoff(Extended::Finite(10.0), 4).unwrap(), 4.0);
        assert_eq!(cutoff(Extended::Finite(0.0), 4).unwrap(), 0.25);
        assert_eq!(cutoff(Extended::Finite(2.0), 4).unwrap(), 2.0);
        assert_eq!(cutoff(Extended::Infinite, 4).unwrap(), 4.0);
        assert!(cutoff(Extended::Finite(-0.5), 4).is_err());
        assert!(cutoff(Extended::Finite(1.0), 0).is_err());
    }

    #[test]
    fn constant_obstacle_is_fixed_by_the_ladder() {
        let lat = lattice(8, 1.0 / 16.0, 8);
        let p = ObstacleField::for_grid(&lat.grid, 0.5, ObstaclePreset::Constant { value: 1.0 }).unwrap();
        let ladder = build_ladder(&p, &[1, 2, 4], &lat).unwrap();
        for m in &ladder.members {
            assert!(m.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
            assert_eq!(m.lipschitz, 0.0);
        }
        let report = validate_ladder(&p, &ladder, &[0.5, 1.0, 2.0], &[]).unwrap();
        assert!(report.rows.iter().all(|r| r.sup_distance < 1e-15));
        assert!(report.ok());
    }

    #[test]
    fn indices_must_increase() {
        let lat = lattice(8, 1.0 / 16.0, 8);
        let p = ObstacleField::for_grid(&lat.grid, 0.5, ObstaclePreset::FreeFlow).unwrap();
        assert!(build_ladder(&p, &[4, 4], &lat).is_err());
        assert!(build_ladder(&p, &[0, 4], &lat).is_err());
        assert!(build_ladder(&p, &[], &lat).is_err());
    }

    #[test]
    fn coarse_time_step_is_rejected() {
        let lat = lattice(32, 0.25, 4);
        let p = ObstacleField::for_grid(&lat.grid, 1.0, ObstaclePreset::FreeFlow).unwrap();
        assert!(matches!(build_ladder(&p, &[8], &lat), Err(Error::Config(_))));
    }

    #[test]
    fn region_partition() {
        let lat = lattice(8, 0.125, 4);
        let inf = ObstacleField::for_grid(&lat.grid, 0.5, ObstaclePreset::FreeFlow).unwrap();
        let r = region_classify(&inf, &lat, 1.0).unwrap();
        assert_eq!(r.infinite_set(2).count(), 64);
        let zero = ObstacleField::for_grid(&lat.grid, 0.5, ObstaclePreset::Constant { value: 0.0 }).unwrap();
        let r = region_classify(&zero, &lat, 1.0).unwrap();
        assert_eq!(r.zero_set(0).count(), 64);
        assert!(region_classify(&zero, &lat, 0.0).is_err());
    }

    #[test]
    fn box_filter_truncates_at_edges() {
        let data: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let out = box_filter(&data, [5, 1, 1], [1, 0, 0], Reduce::Mean);
        assert_eq!(out, vec![0.5, 1.0, 2.0, 3.0, 3.5]);
        let mx = box_filter(&data, [5, 1, 1], [2, 0, 0], Reduce::Max);
        assert_eq!(mx, vec![2.0, 3.0, 4.0, 4.0, 4.0]);
    }
}
