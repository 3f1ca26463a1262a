//! Run outputs: VTK snapshots, time-series CSV and the JSON manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{CheckSummary, EnergyLedger};
use crate::error::{Error, Result};
use crate::grid::{cell_vectors, MacGrid, VectorField};
use crate::stepper::TrajectoryRecord;

/// Environment variable overriding the output root (default: current directory).
pub const OUTPUT_ROOT_VAR: &str = "NSVI_OUTPUT_ROOT";

/// `$NSVI_OUTPUT_ROOT/directory`, or `directory` itself.
pub fn output_dir(directory: &str) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(directory),
        _ => PathBuf::from(directory),
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Legacy ASCII VTK text of one state, sampled at cell centers.
///
/// `obstacle` holds the cell values of the ladder member `p_n`.
pub fn snapshot_vtk(grid: &MacGrid, u: &VectorField, obstacle: &[f64], time: f64) -> Result<String> {
    u.check(grid)?;
    if obstacle.len() != grid.num_cells() {
        return Err(Error::Shape {
            expected: format!("{} cell values", grid.num_cells()),
            got: obstacle.len().to_string(),
        });
    }
    let cells = cell_vectors(grid, u);
    let h = grid.h();
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "velocity t={time:.12e}");
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET STRUCTURED_POINTS");
    let _ = writeln!(s, "DIMENSIONS {} {} 1", grid.nx(), grid.ny());
    let _ = writeln!(s, "ORIGIN {:.12e} {:.12e} 0", 0.5 * h, 0.5 * h);
    let _ = writeln!(s, "SPACING {h:.12e} {h:.12e} 1");
    let _ = writeln!(s, "POINT_DATA {}", grid.num_cells());
    let _ = writeln!(s, "VECTORS velocity double");
    for c in &cells {
        let _ = writeln!(s, "{:.12e} {:.12e} 0", c[0], c[1]);
    }
    let _ = writeln!(s, "SCALARS obstacle double 1");
    let _ = writeln!(s, "LOOKUP_TABLE default");
    for p in obstacle {
        let _ = writeln!(s, "{p:.12e}");
    }
    let _ = writeln!(s, "SCALARS speed double 1");
    let _ = writeln!(s, "LOOKUP_TABLE default");
    for c in &cells {
        let _ = writeln!(s, "{:.12e}", c[0].hypot(c[1]));
    }
    Ok(s)
}

pub fn write_snapshot(
    path: &Path,
    grid: &MacGrid,
    u: &VectorField,
    obstacle: &[f64],
    time: f64,
) -> Result<()> {
    write_file(path, snapshot_vtk(grid, u, obstacle, time)?.as_bytes())
}

/// Header of a legacy VTK structured-points file.
#[derive(Clone, Debug, PartialEq)]
pub struct VtkHeader {
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub points: usize,
    /// `(name, kind)` of each data block in order, e.g. `("velocity", "VECTORS")`.
    pub arrays: Vec<(String, String)>,
}

/// Reads the header and array names of text produced by [`snapshot_vtk`].
pub fn read_vtk_header(text: &str) -> Result<VtkHeader> {
    let bad = |what: &str| Error::domain(format!("malformed VTK: {what}"));
    let mut dims = None;
    let mut origin = None;
    let mut spacing = None;
    let mut points = None;
    let mut arrays = Vec::new();
    let triple = |rest: &[&str]| -> Option<[f64; 3]> {
        if rest.len() != 3 {
            return None;
        }
        let v: Vec<f64> = rest.iter().filter_map(|x| x.parse().ok()).collect();
        (v.len() == 3).then(|| [v[0], v[1], v[2]])
    };
    let mut lines = text.lines();
    if !lines.next().is_some_and(|l| l.starts_with("# vtk DataFile")) {
        return Err(bad("missing version line"));
    }
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.first().copied() {
            Some("DIMENSIONS") => {
                let d = triple(&tok[1..]).ok_or_else(|| bad("DIMENSIONS"))?;
                dims = Some([d[0] as usize, d[1] as usize, d[2] as usize]);
            }
            Some("ORIGIN") => origin = Some(triple(&tok[1..]).ok_or_else(|| bad("ORIGIN"))?),
            Some("SPACING") => spacing = Some(triple(&tok[1..]).ok_or_else(|| bad("SPACING"))?),
            Some("POINT_DATA") => {
                points = Some(
                    tok.get(1)
                        .and_then(|x| x.parse().ok())
                        .ok_or_else(|| bad("POINT_DATA"))?,
                )
            }
            Some(kind @ ("VECTORS" | "SCALARS")) => {
                let name = tok.get(1).ok_or_else(|| bad(kind))?;
                arrays.push((name.to_string(), kind.to_string()));
            }
            _ => {}
        }
    }
    Ok(VtkHeader {
        dims: dims.ok_or_else(|| bad("no DIMENSIONS"))?,
        origin: origin.ok_or_else(|| bad("no ORIGIN"))?,
        spacing: spacing.ok_or_else(|| bad("no SPACING"))?,
        points: points.ok_or_else(|| bad("no POINT_DATA"))?,
        arrays,
    })
}

pub const TIMESERIES_HEADER: &str =
    "t,l2_norm,h1_seminorm,energy_lhs,dissipation,M0,constraint_violation,step_iters,step_residual";

/// One row per time level. Energy columns are empty without a ledger.
pub fn timeseries_csv(traj: &TrajectoryRecord, ledger: Option<&EnergyLedger>) -> String {
    let mut s = String::from(TIMESERIES_HEADER);
    s.push('\n');
    for k in 0..traj.times.len() {
        let (lhs, diss, m0) = match ledger {
            Some(l) => (
                format!("{:.12e}", l.lhs[k]),
                format!("{:.12e}", l.dissipation[k]),
                format!("{:.12e}", l.m0),
            ),
            None => Default::default(),
        };
        let _ = writeln!(
            s,
            "{:.12e},{:.12e},{:.12e},{lhs},{diss},{m0},{:.12e},{},{:.12e}",
            traj.times[k],
            traj.l2_norm[k],
            traj.h1_seminorm[k],
            traj.constraint_violation[k],
            traj.step_iters[k],
            traj.step_residual[k],
        );
    }
    s
}

pub fn write_timeseries(path: &Path, traj: &TrajectoryRecord, ledger: Option<&EnergyLedger>) -> Result<()> {
    write_file(path, timeseries_csv(traj, ledger).as_bytes())
}

/// Writes `contents` to `path` and returns its manifest entry (relative to `root`).
pub fn write_tracked(root: &Path, rel: &str, contents: &[u8]) -> Result<FileEntry> {
    write_file(&root.join(rel), contents)?;
    Ok(FileEntry::of(rel, contents))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileEntry {
    pub fn of(path: &str, contents: &[u8]) -> Self {
        Self {
            path: path.to_string(),
            sha256: hex::encode(Sha256::digest(contents)),
            bytes: contents.len() as u64,
        }
    }
}

/// Start and end stamps. With `SOURCE_DATE_EPOCH` set both equal it, which
/// keeps manifests byte-identical across reruns; otherwise the simulated
/// interval is recorded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub source: String,
    pub start: f64,
    pub end: f64,
}

impl Timestamps {
    pub fn for_run(t_start: f64, t_end: f64) -> Self {
        match std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|s| s.trim().parse::<f64>().ok())
        {
            Some(e) => Self {
                source: "SOURCE_DATE_EPOCH".into(),
                start: e,
                end: e,
            },
            None => Self {
                source: "simulated-time".into(),
                start: t_start,
                end: t_end,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub command: String,
    pub timestamps: Timestamps,
    pub checks: Vec<CheckSummary>,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn new(config_hash: String, command: &str, timestamps: Timestamps) -> Self {
        Self {
            config_hash,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            timestamps,
            checks: Vec::new(),
            files: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        write_file(&path, self.to_json().as_bytes())?;
        Ok(path)
    }
}
