//! Navier-Stokes flow under a pointwise velocity-magnitude obstacle.
//!
//! The velocity lives on a MAC grid, the obstacle `p(x, t)` is approximated
//! by a ladder of regularized members `p_n`, and each implicit Euler step is
//! a variational inequality solved by splitting. Diagnostics check the
//! a-priori estimates on computed trajectories.

mod banded;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod obstacle;
pub mod scenario;
pub mod stepper;
pub mod vi_step;

pub use diagnostics::{CheckStatus, CheckSummary};
pub use error::{Error, Result};
pub use grid::{CellMask, ConstantsReport, MacGrid, VectorField};
pub use obstacle::{Extended, ObstacleField, ObstacleLadder, ObstaclePreset, SamplingLattice};
pub use scenario::{ForcingPreset, InitialPreset, RunManifest, Scenario};
pub use stepper::{LadderRun, SimulationConfig, TrajectoryRecord};
pub use vi_step::{SplitParams, StepProblem, StepSolution};
