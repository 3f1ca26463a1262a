//! Stream-function parametrization of discrete solenoidal fields.
//!
//! On the MAC grid every face field with zero divergence and zero normal trace
//! is the discrete curl of a node function vanishing on the boundary, and the
//! curl is injective on interior nodes. Working with `ψ` turns the divergence
//! constraint into a change of variables.

use super::{CellMask, MacGrid, VectorField};
use crate::banded::{BandLu, BandMatrix};
use crate::error::{Error, Result};

/// Largest node offset (per axis) coupled by `Curlᵀ L Curl` for the operators
/// used in this crate.
const REACH: usize = 2;
const PERIOD: usize = 2 * REACH + 1;

/// Ordered set of nodes carrying stream-function degrees of freedom.
#[derive(Clone, Debug)]
pub struct NodeSpace {
    nx: usize,
    ny: usize,
    nodes: Vec<(usize, usize)>,
    /// `(nx + 1) × (ny + 1)` lookup; `usize::MAX` marks nodes outside the space.
    index: Vec<usize>,
}

impl NodeSpace {
    /// All interior nodes: parametrizes every solenoidal field on the grid.
    pub fn full(grid: &MacGrid) -> Self {
        Self::build(grid, |i, j| i > 0 && j > 0 && i < grid.nx() && j < grid.ny())
    }

    /// Nodes whose four neighbouring cells all lie in `mask`: parametrizes the
    /// solenoidal fields supported in the mask.
    pub fn from_mask(grid: &MacGrid, mask: &CellMask) -> Result<Self> {
        if mask.nx() != grid.nx() || mask.ny() != grid.ny() {
            return Err(Error::Shape {
                expected: format!("{}×{} mask", grid.nx(), grid.ny()),
                got: format!("{}×{}", mask.nx(), mask.ny()),
            });
        }
        let s = Self::build(grid, |i, j| mask.node_is_interior(i, j));
        if s.is_empty() {
            return Err(Error::domain(
                "subdomain has no interior node, so no solenoidal field is supported in it",
            ));
        }
        Ok(s)
    }

    fn build(grid: &MacGrid, keep: impl Fn(usize, usize) -> bool) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        let mut nodes = Vec::new();
        let mut index = vec![usize::MAX; (nx + 1) * (ny + 1)];
        for j in 0..=ny {
            for i in 0..=nx {
                if keep(i, j) {
                    index[i + (nx + 1) * j] = nodes.len();
                    nodes.push((i, j));
                }
            }
        }
        Self {
            nx,
            ny,
            nodes,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[(usize, usize)] {
        &self.nodes
    }

    pub fn index_of(&self, i: usize, j: usize) -> Option<usize> {
        if i > self.nx || j > self.ny {
            return None;
        }
        match self.index[i + (self.nx + 1) * j] {
            usize::MAX => None,
            k => Some(k),
        }
    }

    /// `Curl ψ`: `u = ∂ψ/∂y`, `v = −∂ψ/∂x`.
    pub fn curl(&self, grid: &MacGrid, psi: &[f64]) -> VectorField {
        debug_assert_eq!(psi.len(), self.len());
        let ih = 1.0 / grid.h();
        let mut out = VectorField::zeros(grid);
        for (&(i, j), &p) in self.nodes.iter().zip(psi) {
            let x = p * ih;
            // Faces whose endpoints include node (i, j).
            out.u[grid.u_idx(i, j)] -= x;
            out.u[grid.u_idx(i, j - 1)] += x;
            out.v[grid.v_idx(i, j)] += x;
            out.v[grid.v_idx(i - 1, j)] -= x;
        }
        out
    }

    /// Euclidean adjoint of [`NodeSpace::curl`].
    pub fn curl_transpose(&self, grid: &MacGrid, f: &VectorField) -> Vec<f64> {
        let ih = 1.0 / grid.h();
        self.nodes
            .iter()
            .map(|&(i, j)| {
                ih * (-f.u[grid.u_idx(i, j)] + f.u[grid.u_idx(i, j - 1)] + f.v[grid.v_idx(i, j)]
                    - f.v[grid.v_idx(i - 1, j)])
            })
            .collect()
    }

    /// Half-bandwidth of `Curlᵀ L Curl` in this ordering.
    fn bandwidth(&self) -> usize {
        let mut bw = 0;
        for (k, &(i, j)) in self.nodes.iter().enumerate() {
            for dj in 0..=REACH {
                for di in 0..=2 * REACH {
                    let (a, b) = ((i + di).wrapping_sub(REACH), j + dj);
                    if let Some(q) = self.index_of(a, b) {
                        bw = bw.max(q.abs_diff(k));
                    }
                }
            }
        }
        bw
    }
}

/// Factored `Curlᵀ L Curl` for a face operator `L` whose symmetric part is
/// positive definite on solenoidal fields.
#[derive(Clone, Debug)]
pub struct StreamOperator {
    lu: BandLu,
}

impl StreamOperator {
    /// Assembles by probing with `PERIOD²` colored node sets, then factors.
    pub fn assemble(
        grid: &MacGrid,
        space: &NodeSpace,
        op: impl Fn(&VectorField) -> VectorField,
    ) -> Result<Self> {
        let m = assemble_band(grid, space, op);
        Ok(Self { lu: m.factor()? })
    }

    pub fn dim(&self) -> usize {
        self.lu.n()
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.lu.solve(rhs)
    }
}

pub(crate) fn assemble_band(
    grid: &MacGrid,
    space: &NodeSpace,
    op: impl Fn(&VectorField) -> VectorField,
) -> BandMatrix {
    let n = space.len();
    let mut m = BandMatrix::zeros(n, space.bandwidth());
    let mut probe = vec![0.0; n];
    for ci in 0..PERIOD {
        for cj in 0..PERIOD {
            let mut any = false;
            for (k, &(i, j)) in space.nodes.iter().enumerate() {
                let on = i % PERIOD == ci && j % PERIOD == cj;
                probe[k] = if on { 1.0 } else { 0.0 };
                any |= on;
            }
            if !any {
                continue;
            }
            let col = space.curl_transpose(grid, &op(&space.curl(grid, &probe)));
            for (r, &(i, j)) in space.nodes.iter().enumerate() {
                // The unique probe node of this color within REACH of (i, j).
                let qi = nearest_of_class(i, ci);
                let qj = nearest_of_class(j, cj);
                if let (Some(qi), Some(qj)) = (qi, qj) {
                    if let Some(q) = space.index_of(qi, qj) {
                        m.set(r, q, col[r]);
                    }
                }
            }
        }
    }
    m
}

fn nearest_of_class(i: usize, class: usize) -> Option<usize> {
    let off = (class + PERIOD - i % PERIOD) % PERIOD;
    let q = if off <= REACH {
        i + off
    } else {
        i.checked_sub(PERIOD - off)?
    };
    Some(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{convection_apply, divergence, stiffness_apply};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn curl_is_solenoidal_and_adjoint() {
        let g = MacGrid::new(7, 5, 1.4, 1.0).unwrap();
        let s = NodeSpace::full(&g);
        assert_eq!(s.len(), 6 * 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi: Vec<f64> = (0..s.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = s.curl(&g, &psi);
        assert!(divergence(&g, &f).unwrap().max_abs() < 1e-12);
        let mut bf = f.clone();
        bf.enforce_boundary();
        assert_eq!(bf, f);
        let mut w = VectorField::zeros(&g);
        w.u.iter_mut().chain(w.v.iter_mut()).for_each(|x| *x = rng.gen_range(-1.0..1.0));
        let lhs = f.dot(&w);
        let rhs: f64 = psi.iter().zip(s.curl_transpose(&g, &w)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn probed_assembly_matches_dense_columns() {
        let g = MacGrid::new(9, 8, 9.0 / 8.0, 1.0).unwrap();
        let s = NodeSpace::full(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut a = VectorField::zeros(&g);
        a.u.iter_mut().chain(a.v.iter_mut()).for_each(|x| *x = rng.gen_range(-1.0..1.0));
        a.enforce_boundary();
        let op = |z: &VectorField| {
            let mut out = stiffness_apply(&g, z);
            out.axpy(1.0, &convection_apply(&g, &a, z).unwrap());
            let cells = crate::grid::cell_vectors(&g, z);
            out.axpy(0.7, &crate::grid::cell_vectors_transpose(&g, &cells));
            out
        };
        let m = assemble_band(&g, &s, op);
        let n = s.len();
        for q in 0..n {
            let mut e = vec![0.0; n];
            e[q] = 1.0;
            let col = s.curl_transpose(&g, &op(&s.curl(&g, &e)));
            for r in 0..n {
                assert!((m.get(r, q) - col[r]).abs() < 1e-12, "entry ({r},{q})");
            }
        }
    }

    #[test]
    fn masked_space_solve() {
        let g = MacGrid::unit(8).unwrap();
        let mask = CellMask::rect(&g, 2, 6, 1, 5).unwrap();
        let s = NodeSpace::from_mask(&g, &mask).unwrap();
        assert_eq!(s.len(), 9);
        let op = StreamOperator::assemble(&g, &s, |z| stiffness_apply(&g, z)).unwrap();
        let rhs: Vec<f64> = (0..9).map(|k| k as f64 - 4.0).collect();
        let x = op.solve(&rhs);
        let back = s.curl_transpose(&g, &stiffness_apply(&g, &s.curl(&g, &x)));
        for (a, b) in rhs.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
        let thin = CellMask::rect(&g, 2, 3, 0, 8).unwrap();
        assert!(NodeSpace::from_mask(&g, &thin).is_err());
    }
}
