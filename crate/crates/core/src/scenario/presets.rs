//! Forcing and initial-data presets. Both are sampled as discrete curls of a
//! stream function, so they are exactly solenoidal on the grid.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{MacGrid, VectorField};

/// Body force `g(x, t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForcingPreset {
    Zero,
    /// Curl of `A (lx/π) sin(πx/lx) sin(πy/ly)`, modulated by `cos(2π f t)`.
    Swirl {
        amplitude: f64,
        #[serde(default)]
        frequency: f64,
    },
}

impl ForcingPreset {
    pub const NAMES: [&'static str; 2] = ["zero", "swirl"];

    pub fn name(&self) -> &'static str {
        match self {
            ForcingPreset::Zero => "zero",
            ForcingPreset::Swirl { .. } => "swirl",
        }
    }

    pub fn default_for(name: &str) -> Option<Self> {
        Some(match name {
            "zero" => ForcingPreset::Zero,
            "swirl" => ForcingPreset::Swirl {
                amplitude: 1.0,
                frequency: 0.0,
            },
            _ => return None,
        })
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            ForcingPreset::Zero => true,
            ForcingPreset::Swirl { amplitude, .. } => amplitude == 0.0,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        match *self {
            ForcingPreset::Zero => vec![],
            ForcingPreset::Swirl {
                amplitude,
                frequency,
            } => {
                let mut e = vec![];
                if !amplitude.is_finite() {
                    e.push(format!("forcing.amplitude must be finite, got {amplitude}"));
                }
                if !(frequency >= 0.0 && frequency.is_finite()) {
                    e.push(format!("forcing.frequency must be >= 0, got {frequency}"));
                }
                e
            }
        }
    }

    pub fn sample(&self, grid: &MacGrid, t: f64) -> VectorField {
        match *self {
            ForcingPreset::Zero => VectorField::zeros(grid),
            ForcingPreset::Swirl {
                amplitude,
                frequency,
            } => {
                let (lx, ly) = (grid.lx(), grid.ly());
                let a = amplitude * (2.0 * PI * frequency * t).cos();
                VectorField::from_stream(grid, |x, y| {
                    a * lx / PI * (PI * x / lx).sin() * (PI * y / ly).sin()
                })
            }
        }
    }
}

/// Initial velocity `u₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialPreset {
    Zero,
    /// Curl of `A (lx/π) sin²(πx/lx) sin²(πy/ly)`: one cell-filling vortex
    /// whose velocity vanishes on the walls.
    TaylorGreen { amplitude: f64 },
    /// Ring vortex: the stream function is `A (outer − inner)` inside `inner`,
    /// falls to 0 at `outer` with a `cos²` profile, so the velocity is
    /// supported in the annulus.
    Vortex {
        center_x: f64,
        center_y: f64,
        inner: f64,
        outer: f64,
        amplitude: f64,
    },
}

impl InitialPreset {
    pub const NAMES: [&'static str; 3] = ["zero", "taylor-green", "vortex"];

    pub fn name(&self) -> &'static str {
        match self {
            InitialPreset::Zero => "zero",
            InitialPreset::TaylorGreen { .. } => "taylor-green",
            InitialPreset::Vortex { .. } => "vortex",
        }
    }

    pub fn default_for(name: &str, lx: f64, ly: f64) -> Option<Self> {
        Some(match name {
            "zero" => InitialPreset::Zero,
            "taylor-green" => InitialPreset::TaylorGreen { amplitude: 1.0 },
            "vortex" => InitialPreset::Vortex {
                center_x: 0.5 * lx,
                center_y: 0.5 * ly,
                inner: 0.25 * lx.min(ly),
                outer: 0.45 * lx.min(ly),
                amplitude: 1.0,
            },
            _ => return None,
        })
    }

    pub fn validate(&self) -> Vec<String> {
        match *self {
            InitialPreset::Zero => vec![],
            InitialPreset::TaylorGreen { amplitude } => {
                if amplitude.is_finite() {
                    vec![]
                } else {
                    vec![format!("initial.amplitude must be finite, got {amplitude}")]
                }
            }
            InitialPreset::Vortex {
                inner,
                outer,
                amplitude,
                ..
            } => {
                let mut e = vec![];
                if !(inner >= 0.0 && outer > inner) {
                    e.push(format!(
                        "initial.inner and initial.outer must satisfy 0 <= inner < outer, got {inner}, {outer}"
                    ));
                }
                if !amplitude.is_finite() {
                    e.push(format!("initial.amplitude must be finite, got {amplitude}"));
                }
                e
            }
        }
    }

    pub fn sample(&self, grid: &MacGrid) -> Result<VectorField> {
        let errs = self.validate();
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        Ok(match *self {
            InitialPreset::Zero => VectorField::zeros(grid),
            InitialPreset::TaylorGreen { amplitude } => {
                let (lx, ly) = (grid.lx(), grid.ly());
                VectorField::from_stream(grid, |x, y| {
                    amplitude * lx / PI * ((PI * x / lx).sin() * (PI * y / ly).sin()).powi(2)
                })
            }
            InitialPreset::Vortex {
                center_x,
                center_y,
                inner,
                outer,
                amplitude,
            } => VectorField::from_stream(grid, |x, y| {
                let r = (x - center_x).hypot(y - center_y);
                let s = ((r - inner) / (outer - inner)).clamp(0.0, 1.0);
                amplitude * (outer - inner) * (0.5 * PI * s).cos().powi(2)
            }),
        })
    }
}
