use serde::{Deserialize, Serialize};

use super::MacGrid;
use crate::error::{Error, Result};

/// Face-centered velocity. Boundary normal faces are stored and kept at zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub(crate) nx: usize,
    pub(crate) ny: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: &MacGrid) -> Self {
        Self {
            nx: grid.nx(),
            ny: grid.ny(),
            u: vec![0.0; grid.num_u()],
            v: vec![0.0; grid.num_v()],
        }
    }

    /// Samples `f(x, y) -> (u, v)` at interior faces.
    pub fn from_fn(grid: &MacGrid, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let mut out = Self::zeros(grid);
        for j in 0..grid.ny() {
            for i in 1..grid.nx() {
                let (x, y) = grid.u_pos(i, j);
                out.u[grid.u_idx(i, j)] = f(x, y).0;
            }
        }
        for j in 1..grid.ny() {
            for i in 0..grid.nx() {
                let (x, y) = grid.v_pos(i, j);
                out.v[grid.v_idx(i, j)] = f(x, y).1;
            }
        }
        out
    }

    /// Discrete curl of a stream function sampled at the nodes.
    ///
    /// The boundary node values are forced to zero, so the result is exactly
    /// divergence free with zero normal trace.
    pub fn from_stream(grid: &MacGrid, psi: impl Fn(f64, f64) -> f64) -> Self {
        let (nx, ny, h) = (grid.nx(), grid.ny(), grid.h());
        let node = |i: usize, j: usize| -> f64 {
            if i == 0 || j == 0 || i == nx || j == ny {
                0.0
            } else {
                let (x, y) = grid.node_pos(i, j);
                psi(x, y)
            }
        };
        let mut out = Self::zeros(grid);
        for j in 0..ny {
            for i in 1..nx {
                out.u[grid.u_idx(i, j)] = (node(i, j + 1) - node(i, j)) / h;
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                out.v[grid.v_idx(i, j)] = -(node(i + 1, j) - node(i, j)) / h;
            }
        }
        out
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn check(&self, grid: &MacGrid) -> Result<()> {
        if self.nx != grid.nx()
            || self.ny != grid.ny()
            || self.u.len() != grid.num_u()
            || self.v.len() != grid.num_v()
        {
            return Err(Error::Shape {
                expected: format!("{}×{} vector field", grid.nx(), grid.ny()),
                got: format!("{}×{} (u {}, v {})", self.nx, self.ny, self.u.len(), self.v.len()),
            });
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.nx != other.nx || self.ny != other.ny {
            return Err(Error::Shape {
                expected: format!("{}×{} vector field", self.nx, self.ny),
                got: format!("{}×{}", other.nx, other.ny),
            });
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.u.iter().chain(&self.v).all(|&x| x == 0.0)
    }

    /// Zeroes the normal component on ∂Ω.
    pub fn enforce_boundary(&mut self) {
        let (nx, ny) = (self.nx, self.ny);
        for j in 0..ny {
            self.u[(nx + 1) * j] = 0.0;
            self.u[nx + (nx + 1) * j] = 0.0;
        }
        for i in 0..nx {
            self.v[i] = 0.0;
            self.v[i + nx * ny] = 0.0;
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.scale(c);
        out
    }

    pub fn scale(&mut self, c: f64) {
        self.u.iter_mut().chain(self.v.iter_mut()).for_each(|x| *x *= c);
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &Self) {
        for (x, y) in self.u.iter_mut().zip(&other.u) {
            *x += a * y;
        }
        for (x, y) in self.v.iter_mut().zip(&other.v) {
            *x += a * y;
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    /// Unweighted Euclidean dot product over all face values.
    pub fn dot(&self, other: &Self) -> f64 {
        self.u.iter().zip(&other.u).map(|(a, b)| a * b).sum::<f64>()
            + self.v.iter().zip(&other.v).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().chain(&self.v).fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.u
            .iter()
            .zip(&other.u)
            .chain(self.v.iter().zip(&other.v))
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Cell-centered scalar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub(crate) nx: usize,
    pub(crate) ny: usize,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &MacGrid) -> Self {
        Self {
            nx: grid.nx(),
            ny: grid.ny(),
            values: vec![0.0; grid.num_cells()],
        }
    }

    pub fn from_fn(grid: &MacGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = grid
            .cells()
            .map(|(i, j)| {
                let (x, y) = grid.cell_center(i, j);
                f(x, y)
            })
            .collect();
        Self {
            nx: grid.nx(),
            ny: grid.ny(),
            values,
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Selection of cells, used for subdomains `Ω′ ⊂ Ω`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellMask {
    pub(crate) nx: usize,
    pub(crate) ny: usize,
    cells: Vec<bool>,
}

impl CellMask {
    pub fn empty(grid: &MacGrid) -> Self {
        Self {
            nx: grid.nx(),
            ny: grid.ny(),
            cells: vec![false; grid.num_cells()],
        }
    }

    pub fn full(grid: &MacGrid) -> Self {
        Self {
            nx: grid.nx(),
            ny: grid.ny(),
            cells: vec![true; grid.num_cells()],
        }
    }

    /// Cells `i0..i1 × j0..j1`.
    pub fn rect(grid: &MacGrid, i0: usize, i1: usize, j0: usize, j1: usize) -> Result<Self> {
        if i0 >= i1 || j0 >= j1 || i1 > grid.nx() || j1 > grid.ny() {
            return Err(Error::domain(format!(
                "cell rectangle {i0}..{i1} × {j0}..{j1} is empty or outside the {}×{} grid",
                grid.nx(),
                grid.ny()
            )));
        }
        let mut m = Self::empty(grid);
        for j in j0..j1 {
            for i in i0..i1 {
                m.cells[grid.cell(i, j)] = true;
            }
        }
        Ok(m)
    }

    pub fn from_vec(grid: &MacGrid, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != grid.num_cells() {
            return Err(Error::Shape {
                expected: format!("{} cells", grid.num_cells()),
                got: format!("{}", cells.len()),
            });
        }
        Ok(Self {
            nx: grid.nx(),
            ny: grid.ny(),
            cells,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.cells[i + self.nx * j]
    }

    pub fn get(&self, c: usize) -> bool {
        self.cells[c]
    }

    pub fn set(&mut self, c: usize, on: bool) {
        self.cells[c] = on;
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.cells
    }

    /// The mask grown by one cell in every direction (the discrete closure).
    pub fn closure(&self) -> Self {
        let mut out = self.clone();
        for j in 0..self.ny {
            for i in 0..self.nx {
                if !self.contains(i, j) {
                    continue;
                }
                for dj in -1i64..=1 {
                    for di in -1i64..=1 {
                        let (a, b) = (i as i64 + di, j as i64 + dj);
                        if a >= 0 && b >= 0 && (a as usize) < self.nx && (b as usize) < self.ny {
                            out.cells[a as usize + self.nx * b as usize] = true;
                        }
                    }
                }
            }
        }
        out
    }

    /// True when the node `(i, j)` has all four adjacent cells in the mask.
    pub fn node_is_interior(&self, i: usize, j: usize) -> bool {
        i > 0
            && j > 0
            && i < self.nx
            && j < self.ny
            && self.contains(i - 1, j - 1)
            && self.contains(i, j - 1)
            && self.contains(i - 1, j)
            && self.contains(i, j)
    }
}
