//! Staggered (MAC) discretization of solenoidal velocity fields on a rectangle.
//!
//! Layout on an `nx × ny` grid of square cells with width `h`:
//!
//! * `u` lives on vertical faces `(i h, (j + ½) h)`, `i = 0..=nx`, `j = 0..ny`;
//! * `v` lives on horizontal faces `((i + ½) h, j h)`, `i = 0..nx`, `j = 0..=ny`;
//! * scalars live at cell centers, stream functions at cell corners (nodes).
//!
//! Boundary faces carry the zero normal trace; tangential no-slip enters the
//! stencils through mirrored ghost values. All inner products are scaled by the
//! cell area `h²`, so `(a, b)` approximates `∫ a·b dx`.

mod constants;
mod dual;
mod field;
mod norms;
mod ops;
mod stream;

pub use constants::{
    embedding_constants, poincare_constant, poincare_estimate, ConstantEstimate, ConstantsReport,
};
pub use dual::{dual_norm_w_star, DualNormEstimate, DualNormParams};
pub use field::{CellMask, ScalarField, VectorField};
pub use norms::{
    inner, norm_l2, norm_l4, norm_linf, norm_w14, seminorm_h1, stiffness_inner, w14_pow4_grad,
};
pub use ops::{
    cell_vectors, cell_vectors_transpose, convection_apply, convection_form, convection_form_advective,
    divergence, gradient, leray_project, leray_project_with, stiffness_apply, PoissonParams,
};
pub use stream::{NodeSpace, StreamOperator};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform MAC grid on `[0, nx·h] × [0, ny·h]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacGrid {
    nx: usize,
    ny: usize,
    h: f64,
}

impl MacGrid {
    /// Builds a grid over `[0, lx] × [0, ly]`; the cells must be square.
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::config(format!(
                "grid needs at least 4×4 cells, got {nx}×{ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::config("grid extents must be positive and finite"));
        }
        let hx = lx / nx as f64;
        let hy = ly / ny as f64;
        if (hx - hy).abs() > 1e-12 * hx.max(hy) {
            return Err(Error::config(format!(
                "cells must be square: lx/nx = {hx}, ly/ny = {hy}"
            )));
        }
        Ok(Self { nx, ny, h: hx })
    }

    /// Unit square with `n × n` cells.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn lx(&self) -> f64 {
        self.nx as f64 * self.h
    }

    pub fn ly(&self) -> f64 {
        self.ny as f64 * self.h
    }

    pub fn area(&self) -> f64 {
        self.lx() * self.ly()
    }

    pub fn num_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn num_u(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    pub fn num_v(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    #[inline]
    pub fn u_idx(&self, i: usize, j: usize) -> usize {
        i + (self.nx + 1) * j
    }

    #[inline]
    pub fn v_idx(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h)
    }

    pub fn u_pos(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.h, (j as f64 + 0.5) * self.h)
    }

    pub fn v_pos(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.h, j as f64 * self.h)
    }

    pub fn node_pos(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.h, j as f64 * self.h)
    }

    /// Iterator over `(i, j)` of all cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> {
        let nx = self.nx;
        (0..self.ny).flat_map(move |j| (0..nx).map(move |i| (i, j)))
    }
}
