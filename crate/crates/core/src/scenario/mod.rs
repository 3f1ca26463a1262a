//! Scenario files, presets and run outputs.

mod output;
mod parse;
mod presets;

pub use output::{
    output_dir, read_vtk_header, snapshot_vtk, timeseries_csv, write_snapshot, write_timeseries,
    write_tracked, FileEntry, RunManifest, Timestamps, VtkHeader, OUTPUT_ROOT_VAR,
    TIMESERIES_HEADER,
};
pub use parse::{
    apply_overrides, parse_override, parse_scenario, parse_scenario_str, parse_scenario_with,
    Scenario, SubcylinderSpec, VerifySpec,
};
pub use presets::{ForcingPreset, InitialPreset};

/// Small configuration shared by unit tests.
#[cfg(test)]
pub(crate) fn test_config() -> crate::stepper::SimulationConfig {
    use crate::obstacle::ObstaclePreset;
    use crate::stepper::{GridSpec, OutputSpec, SimulationConfig};
    SimulationConfig {
        grid: GridSpec {
            nx: 8,
            ny: 8,
            lx: 1.0,
            ly: 1.0,
        },
        tau: 0.125,
        horizon: 1.0,
        nu: 0.05,
        obstacle: ObstaclePreset::Constant { value: 1.0 },
        ladder: vec![4],
        forcing: ForcingPreset::Zero,
        initial: InitialPreset::Zero,
        output: OutputSpec::default(),
        tolerances: Default::default(),
    }
}
