//! Random instances for the skew form and the two admissibility constructions.

use std::f64::consts::PI;

use nsvi_core::grid::{
    cell_vectors, convection_apply, convection_form, convection_form_advective, norm_l2, seminorm_h1,
    MacGrid,
};
use nsvi_core::vi_step::{shift_constraint_set, shrink_test_function};
use nsvi_core::{Extended, VectorField};
use rand::Rng;

pub fn random_grid(rng: &mut impl Rng) -> MacGrid {
    let nx = rng.gen_range(4..=12);
    let ny = rng.gen_range(4..=12);
    let h = rng.gen_range(0.05..0.2);
    MacGrid::new(nx, ny, nx as f64 * h, ny as f64 * h).unwrap()
}

/// Independent face values in `[-1, 1]`, zero on the normal boundary faces.
pub fn random_faces(grid: &MacGrid, rng: &mut impl Rng) -> VectorField {
    let mut f = VectorField::zeros(grid);
    f.u.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    f.v.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    f.enforce_boundary();
    f
}

/// Solenoidal field from a few random sine modes, optionally cut off outside a disk.
pub fn random_solenoidal(grid: &MacGrid, rng: &mut impl Rng, compact: bool) -> VectorField {
    let (lx, ly) = (grid.lx(), grid.ly());
    let modes: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(1..=3) as f64,
                rng.gen_range(1..=3) as f64,
            )
        })
        .collect();
    let (cx, cy, r) = (
        rng.gen_range(0.3..0.7) * lx,
        rng.gen_range(0.3..0.7) * ly,
        rng.gen_range(0.2..0.4) * lx.min(ly),
    );
    VectorField::from_stream(grid, |x, y| {
        let s: f64 = modes
            .iter()
            .map(|(a, k, l)| a * (k * PI * x / lx).sin() * (l * PI * y / ly).sin())
            .sum();
        if compact {
            let d = (x - cx).powi(2) + (y - cy).powi(2);
            s * (r * r - d).max(0.0).powi(2) / r.powi(4)
        } else {
            s
        }
    })
}

pub fn speeds(grid: &MacGrid, v: &VectorField) -> Vec<f64> {
    cell_vectors(grid, v).iter().map(|c| c[0].hypot(c[1])).collect()
}

/// Largest `|b(a, v, v)|`, antisymmetry defect and form/operator mismatch.
#[derive(Debug, Default)]
pub struct SkewReport {
    pub diagonal: f64,
    pub antisymmetry: f64,
    pub consistency: f64,
}

pub fn skew_triples(rng: &mut impl Rng, count: usize) -> SkewReport {
    let mut rep = SkewReport::default();
    for _ in 0..count {
        let g = random_grid(rng);
        let (a, v, w) = (random_faces(&g, rng), random_faces(&g, rng), random_faces(&g, rng));
        rep.diagonal = rep.diagonal.max(convection_form(&g, &a, &v, &v).unwrap().abs());
        let bvw = convection_form(&g, &a, &v, &w).unwrap();
        let bwv = convection_form(&g, &a, &w, &v).unwrap();
        rep.antisymmetry = rep.antisymmetry.max((bvw + bwv).abs());
        let halves = 0.5
            * (convection_form_advective(&g, &a, &v, &w).unwrap()
                - convection_form_advective(&g, &a, &w, &v).unwrap());
        let applied = w.dot(&convection_apply(&g, &a, &v).unwrap());
        rep.consistency = rep.consistency.max((bvw - halves).abs()).max((bvw - applied).abs());
    }
    rep
}

/// Worst defects over random shift instances; all must be `≤ 0` up to rounding.
#[derive(Debug, Default)]
pub struct ConstructionReport {
    pub instances: usize,
    /// `max (|z̃_c| − p_t,c)`.
    pub admissibility: f64,
    /// `max (|z̃ − z|₀,₂ − C·sup|p_t − p_s|)`.
    pub distance: f64,
    /// `max (|z̃|₁,₂ − |z|₁,₂)`.
    pub seminorm: f64,
    /// Mismatch with the scale factor computed here.
    pub factor: f64,
    pub zero_outputs: usize,
}

impl ConstructionReport {
    pub fn ok(&self) -> bool {
        self.admissibility <= 1e-12 && self.distance <= 1e-12 && self.seminorm <= 1e-12 && self.factor <= 1e-12
    }
}

pub fn shift_instances(rng: &mut impl Rng, count: usize) -> ConstructionReport {
    let mut rep = ConstructionReport {
        admissibility: f64::NEG_INFINITY,
        distance: f64::NEG_INFINITY,
        seminorm: f64::NEG_INFINITY,
        ..Default::default()
    };
    while rep.instances < count {
        let g = random_grid(rng);
        let cells = g.num_cells();
        let (lo, hi) = (rng.gen_range(0.1..1.0), rng.gen_range(1.0..5.0));
        let p_s: Vec<f64> = (0..cells).map(|_| rng.gen_range(lo..hi)).collect();
        let mu = p_s.iter().copied().fold(f64::INFINITY, f64::min) * rng.gen_range(0.5..1.0);
        let wiggle = rng.gen_range(0.0..0.999) * mu;
        let p_t: Vec<f64> = p_s
            .iter()
            .map(|p| (p + rng.gen_range(-1.0..1.0) * wiggle).max(1e-3))
            .collect();
        let sup = p_s.iter().zip(&p_t).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        let raw = random_solenoidal(&g, rng, false);
        let scale = speeds(&g, &raw)
            .iter()
            .zip(&p_s)
            .filter(|(s, _)| **s > 0.0)
            .fold(f64::INFINITY, |m, (s, p)| m.min(p / s));
        if !scale.is_finite() {
            continue;
        }
        let z = raw.scaled(scale * rng.gen_range(0.5..1.0));
        let zt = shift_constraint_set(&g, &z, &p_s, &p_t, mu).unwrap();
        rep.instances += 1;
        let factor = 1.0 - sup / mu;
        rep.factor = rep.factor.max(zt.max_abs_diff(&z.scaled(factor)));
        for (s, p) in speeds(&g, &zt).iter().zip(&p_t) {
            rep.admissibility = rep.admissibility.max(s - p);
        }
        let pmax = p_s.iter().chain(&p_t).copied().fold(0.0, f64::max);
        let c = pmax / mu * g.area().sqrt();
        let dist = norm_l2(&g, &zt.sub(&z)).unwrap();
        rep.distance = rep.distance.max(dist - c * sup);
        rep.seminorm = rep
            .seminorm
            .max(seminorm_h1(&g, &zt).unwrap() - seminorm_h1(&g, &z).unwrap());
        if zt.is_zero() {
            rep.zero_outputs += 1;
        }
    }
    rep
}

/// Worst defects over random shrink instances. Only `admissibility` and
/// `factor` apply; the other fields stay at their minimum.
pub fn shrink_instances(rng: &mut impl Rng, count: usize) -> ConstructionReport {
    let mut rep = ConstructionReport {
        admissibility: f64::NEG_INFINITY,
        distance: f64::NEG_INFINITY,
        seminorm: f64::NEG_INFINITY,
        ..Default::default()
    };
    while rep.instances < count {
        let g = random_grid(rng);
        let compact = rng.gen_bool(0.7);
        let raw = random_solenoidal(&g, rng, compact);
        let sp = speeds(&g, &raw);
        let peak = sp.iter().copied().fold(0.0, f64::max);
        if peak == 0.0 {
            continue;
        }
        let v = raw.scaled(rng.gen_range(0.1..3.0) / peak);
        let sp = speeds(&g, &v);
        let sup = sp.iter().copied().fold(0.0, f64::max);
        let delta = rng.gen_range(0.05..1.0);
        let p: Vec<Extended> = sp
            .iter()
            .map(|&s| {
                if s == 0.0 {
                    Extended::Finite(rng.gen_range(0.0..delta))
                } else if rng.gen_bool(0.2) {
                    Extended::Infinite
                } else {
                    Extended::Finite(s.max(delta) * rng.gen_range(1.0..2.0))
                }
            })
            .collect();
        let m = delta + sup;
        let noise = if rng.gen_bool(0.1) { 2.0 * m } else { rng.gen_range(0.0..0.5) * delta };
        let p_n: Vec<f64> = p
            .iter()
            .map(|pc| (pc.min_with(m) + rng.gen_range(-1.0..1.0) * noise).max(1e-6))
            .collect();
        let (dn, out) = shrink_test_function(&g, &v, delta, &p, &p_n, m).unwrap();
        rep.instances += 1;
        let expected = sp
            .iter()
            .zip(p.iter().zip(&p_n))
            .filter(|(s, _)| **s > 0.0)
            .fold(0.0_f64, |acc, (_, (pc, pn))| acc.max((pc.min_with(m) - pn.min(m)).abs()))
            / delta;
        rep.factor = rep
            .factor
            .max((dn - expected).abs())
            .max(out.max_abs_diff(&v.scaled((1.0 - expected).max(0.0))));
        for (s, pn) in speeds(&g, &out).iter().zip(&p_n) {
            rep.admissibility = rep.admissibility.max(s - pn);
        }
        if out.is_zero() {
            rep.zero_outputs += 1;
        }
    }
    rep
}
