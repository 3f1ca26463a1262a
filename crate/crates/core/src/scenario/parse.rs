//! Scenario files.
//!
//! ```toml
//! [grid]        # nx, ny (cells), lx, ly (length); cells must be square
//! [time]        # horizon (time), tau (time, optional: CFL 0.5 default)
//! [physics]     # nu (length²/time)
//! [obstacle]    # preset + optional parameters (velocity / length / time)
//! [ladder]      # indices (strictly increasing), run (optional)
//! [forcing]     # preset + optional parameters (velocity/time)
//! [initial]     # preset + optional parameters (velocity, length)
//! [output]      # cadence, directory (optional)
//! [tolerances]  # feas_tol, kkt_tol, max_iter, relaxation, rho (optional)
//! [verify]      # kappa, family_size, seed, vi_slack, energy_slack,
//!               # restarts, dual_tol, subcylinder (optional)
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use super::presets::{ForcingPreset, InitialPreset};
use crate::error::{Error, Result};
use crate::grid::{cell_vectors, CellMask, MacGrid};
use crate::obstacle::ObstaclePreset;
use crate::stepper::{GridSpec, OutputSpec, SimulationConfig};
use crate::vi_step::SplitParams;

/// `Ω′ × [t1, t1p]` with `Ω′ = [x0, x1] × [y0, y1]` (cells whose centers lie inside).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubcylinderSpec {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub t1: f64,
    pub t1p: f64,
}

impl SubcylinderSpec {
    pub fn mask(&self, grid: &MacGrid) -> Result<CellMask> {
        let mut m = CellMask::empty(grid);
        for (i, j) in grid.cells() {
            let (x, y) = grid.cell_center(i, j);
            if x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1 {
                m.set(grid.cell(i, j), true);
            }
        }
        if m.count() == 0 {
            return Err(Error::config("verify.subcylinder contains no cell centers"));
        }
        Ok(m)
    }
}

/// Parameters of the diagnostics suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySpec {
    pub kappa: f64,
    pub family_size: usize,
    pub seed: u64,
    pub vi_slack: f64,
    pub energy_slack: f64,
    pub restarts: usize,
    /// Relative increment at which the dual-norm ascent stops.
    pub dual_tol: f64,
    pub subcylinder: Option<SubcylinderSpec>,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            kappa: 0.5,
            family_size: 4,
            seed: 7,
            vi_slack: crate::diagnostics::VI_RESIDUAL_SLACK,
            energy_slack: 1e-6,
            restarts: 2,
            dual_tol: 1e-6,
            subcylinder: None,
        }
    }
}

impl VerifySpec {
    pub fn problems(&self) -> Vec<String> {
        let mut e = Vec::new();
        if !(self.kappa > 0.0) {
            e.push(format!("verify.kappa must be > 0, got {}", self.kappa));
        }
        if self.restarts == 0 {
            e.push("verify.restarts must be >= 1".into());
        }
        if !(self.dual_tol > 0.0) {
            e.push(format!("verify.dual_tol must be > 0, got {}", self.dual_tol));
        }
        if i64::try_from(self.seed).is_err() {
            e.push(format!("verify.seed must be <= {}, got {}", i64::MAX, self.seed));
        }
        e
    }
}

/// A parsed scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: SimulationConfig,
    /// Ladder index used by single runs (largest index when absent).
    pub run_index: Option<u64>,
    pub verify: VerifySpec,
}

impl Scenario {
    pub fn run_index(&self) -> u64 {
        self.run_index
            .unwrap_or_else(|| *self.config.ladder.last().expect("validated ladder"))
    }

    /// Every value problem of the config, the verify section and the run index.
    pub fn problems(&self) -> Vec<String> {
        let mut e = self.config.problems();
        e.extend(self.verify.problems());
        if let Some(run) = self.run_index {
            if !self.config.ladder.contains(&run) {
                e.push(format!(
                    "ladder.run = {run} is not one of ladder.indices {:?}",
                    self.config.ladder
                ));
            }
        }
        e
    }

    /// Canonical TOML; `parse_scenario_str(&s.to_toml())` gives `s` back.
    ///
    /// Panics unless [`Scenario::problems`] is empty.
    pub fn to_toml(&self) -> String {
        let c = &self.config;
        let mut root = Table::new();
        let mut grid = Table::new();
        grid.insert("nx".into(), Value::Integer(c.grid.nx as i64));
        grid.insert("ny".into(), Value::Integer(c.grid.ny as i64));
        grid.insert("lx".into(), Value::Float(c.grid.lx));
        grid.insert("ly".into(), Value::Float(c.grid.ly));
        root.insert("grid".into(), Value::Table(grid));
        let mut time = Table::new();
        time.insert("tau".into(), Value::Float(c.tau));
        time.insert("horizon".into(), Value::Float(c.horizon));
        root.insert("time".into(), Value::Table(time));
        let mut physics = Table::new();
        physics.insert("nu".into(), Value::Float(c.nu));
        root.insert("physics".into(), Value::Table(physics));
        let ser = |v: &dyn erased::Ser| v.to_value();
        root.insert("obstacle".into(), ser(&c.obstacle));
        let mut ladder = Table::new();
        ladder.insert(
            "indices".into(),
            Value::Array(c.ladder.iter().map(|&n| Value::Integer(n as i64)).collect()),
        );
        if let Some(r) = self.run_index {
            ladder.insert("run".into(), Value::Integer(r as i64));
        }
        root.insert("ladder".into(), Value::Table(ladder));
        root.insert("forcing".into(), ser(&c.forcing));
        root.insert("initial".into(), ser(&c.initial));
        root.insert("output".into(), ser(&c.output));
        root.insert("tolerances".into(), ser(&c.tolerances));
        root.insert("verify".into(), ser(&self.verify));
        toml::to_string(&root).expect("scenario tables serialize")
    }

    /// SHA-256 of the canonical TOML.
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

mod erased {
    use serde::Serialize;
    use toml::Value;

    pub trait Ser {
        fn to_value(&self) -> Value;
    }

    impl<T: Serialize> Ser for T {
        fn to_value(&self) -> Value {
            Value::try_from(self).expect("scenario sections serialize")
        }
    }
}

const SECTIONS: [&str; 10] = [
    "grid",
    "time",
    "physics",
    "obstacle",
    "ladder",
    "forcing",
    "initial",
    "output",
    "tolerances",
    "verify",
];

fn section_keys(section: &str) -> &'static [&'static str] {
    match section {
        "grid" => &["nx", "ny", "lx", "ly"],
        "time" => &["tau", "horizon"],
        "physics" => &["nu"],
        "ladder" => &["indices", "run"],
        "output" => &["cadence", "directory"],
        "tolerances" => &["rho", "max_iter", "feas_tol", "kkt_tol", "relaxation"],
        "verify" => &[
            "kappa",
            "family_size",
            "seed",
            "vi_slack",
            "energy_slack",
            "restarts",
            "dual_tol",
            "subcylinder",
        ],
        _ => &[],
    }
}

/// Keys accepted in a preset section, for the named preset.
fn preset_keys(section: &str, name: &str) -> Option<Vec<String>> {
    let v = match section {
        "obstacle" => Value::try_from(ObstaclePreset::default_for(name, 1.0, 1.0, 1.0)?),
        "forcing" => Value::try_from(ForcingPreset::default_for(name)?),
        "initial" => Value::try_from(InitialPreset::default_for(name, 1.0, 1.0)?),
        _ => return None,
    }
    .ok()?;
    Some(v.as_table()?.keys().cloned().collect())
}

fn preset_names(section: &str) -> &'static [&'static str] {
    match section {
        "obstacle" => &ObstaclePreset::NAMES,
        "forcing" => &ForcingPreset::NAMES,
        "initial" => &InitialPreset::NAMES,
        _ => &[],
    }
}

/// Checks that `key` (dotted) names a field of the schema.
fn known_key(root: &Table, key: &str) -> std::result::Result<(), String> {
    let (section, field) = key
        .split_once('.')
        .ok_or_else(|| format!("override key {key:?} must have the form section.key"))?;
    if !SECTIONS.contains(&section) {
        return Err(format!("override {key:?}: unknown section {section:?}"));
    }
    let field = field.split('.').next().unwrap_or(field);
    if matches!(section, "obstacle" | "forcing" | "initial") {
        if field == "preset" {
            return Ok(());
        }
        let name = root
            .get(section)
            .and_then(|s| s.get("preset"))
            .and_then(Value::as_str)
            .unwrap_or("");
        let keys = preset_keys(section, name).unwrap_or_default();
        if keys.iter().any(|k| k == field) {
            return Ok(());
        }
        return Err(format!(
            "override {key:?}: preset {name:?} has no parameter {field:?} (known: {})",
            keys.join(", ")
        ));
    }
    if section_keys(section).contains(&field) {
        Ok(())
    } else {
        Err(format!(
            "override {key:?}: unknown key (known in [{section}]: {})",
            section_keys(section).join(", ")
        ))
    }
}

/// Parses `value` as a TOML literal, falling back to a bare string.
fn parse_literal(value: &str) -> Value {
    value
        .parse::<Value>()
        .unwrap_or_else(|_| Value::String(value.to_string()))
}

/// Applies `section.key=value` overrides to a raw scenario table.
pub fn apply_overrides(root: &mut Table, overrides: &[(String, String)]) -> Result<()> {
    let mut errors = Vec::new();
    for (key, value) in overrides {
        if let Err(e) = known_key(root, key) {
            errors.push(e);
            continue;
        }
        let mut parts = key.split('.');
        let section = parts.next().expect("checked");
        let mut table = root
            .entry(section.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        let rest: Vec<&str> = parts.collect();
        for (i, part) in rest.iter().enumerate() {
            let Value::Table(t) = table else {
                errors.push(format!("override {key:?}: {part:?} is not inside a table"));
                break;
            };
            if i + 1 == rest.len() {
                t.insert(part.to_string(), parse_literal(value));
                break;
            }
            table = t
                .entry(part.to_string())
                .or_insert_with(|| Value::Table(Table::new()));
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(errors))
    }
}

/// Splits `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override {s:?} must have the form key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

struct Reader {
    errors: Vec<String>,
}

impl Reader {
    fn section<'a>(&mut self, root: &'a Table, name: &str, required: bool) -> Option<&'a Table> {
        match root.get(name) {
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.errors.push(format!("[{name}] must be a table"));
                None
            }
            None => {
                if required {
                    self.errors.push(format!("missing section [{name}]"));
                }
                None
            }
        }
    }

    fn unknown(&mut self, t: &Table, section: &str, allowed: &[&str]) {
        for k in t.keys() {
            if !allowed.contains(&k.as_str()) {
                self.errors.push(format!(
                    "{section}.{k}: unknown key (allowed: {})",
                    allowed.join(", ")
                ));
            }
        }
    }

    fn float(&mut self, t: Option<&Table>, section: &str, key: &str) -> Option<f64> {
        let v = t?.get(key);
        match v {
            Some(Value::Float(x)) => Some(*x),
            Some(Value::Integer(i)) => Some(*i as f64),
            Some(other) => {
                self.errors.push(format!(
                    "{section}.{key} must be a number, got {}",
                    other.type_str()
                ));
                None
            }
            None => None,
        }
    }

    fn req_float(&mut self, t: Option<&Table>, section: &str, key: &str) -> Option<f64> {
        let v = self.float(t, section, key);
        if v.is_none() && t.is_some_and(|t| !t.contains_key(key)) {
            self.errors.push(format!("missing key {section}.{key}"));
        }
        v
    }

    fn uint(&mut self, t: Option<&Table>, section: &str, key: &str, required: bool) -> Option<u64> {
        match t?.get(key) {
            Some(Value::Integer(i)) if *i >= 0 => Some(*i as u64),
            Some(other) => {
                self.errors.push(format!(
                    "{section}.{key} must be a nonnegative integer, got {other}"
                ));
                None
            }
            None => {
                if required {
                    self.errors.push(format!("missing key {section}.{key}"));
                }
                None
            }
        }
    }

    /// Fills the preset defaults, then overlays the given parameters.
    fn preset<T: for<'de> Deserialize<'de>>(
        &mut self,
        t: Option<&Table>,
        section: &str,
        defaults: impl Fn(&str) -> Option<T>,
    ) -> Option<T>
    where
        T: Serialize,
    {
        let t = t?;
        let name = match t.get("preset") {
            Some(Value::String(s)) => s.clone(),
            Some(other) => {
                self.errors.push(format!("{section}.preset must be a string, got {other}"));
                return None;
            }
            None => {
                self.errors.push(format!("missing key {section}.preset"));
                return None;
            }
        };
        let Some(base) = defaults(&name) else {
            self.errors.push(format!(
                "{section}.preset: unknown preset {name:?} (available: {})",
                preset_names(section).join(", ")
            ));
            return None;
        };
        let mut merged = match Value::try_from(&base) {
            Ok(Value::Table(m)) => m,
            _ => unreachable!("presets serialize to tables"),
        };
        let mut ok = true;
        for (k, v) in t {
            if k == "preset" {
                continue;
            }
            match (merged.get(k), v) {
                (None, _) => {
                    let known: Vec<&String> = merged.keys().filter(|k| *k != "preset").collect();
                    self.errors.push(format!(
                        "{section}.{k}: unknown parameter for preset {name:?} (known: {})",
                        known.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
                    ));
                    ok = false;
                }
                (Some(Value::Float(_)), Value::Integer(i)) => {
                    merged.insert(k.clone(), Value::Float(*i as f64));
                }
                (Some(_), v) => {
                    merged.insert(k.clone(), v.clone());
                }
            }
        }
        if !ok {
            return None;
        }
        match Value::Table(merged).try_into::<T>() {
            Ok(p) => Some(p),
            Err(e) => {
                self.errors.push(format!("[{section}]: {}", e.message()));
                None
            }
        }
    }
}

fn parse_table(text: &str) -> Result<Table> {
    text.parse::<Table>().map_err(|e| {
        let at = e
            .span()
            .map(|s| {
                let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
                format!(" (line {line})")
            })
            .unwrap_or_default();
        Error::Validation(vec![format!("syntax error{at}: {}", e.message())])
    })
}

/// Line of `key` inside `[section]`, or of the section header when `key` is absent.
fn locate(text: &str, section: &str, key: Option<&str>) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (no, line) in text.lines().enumerate() {
        let l = line.trim();
        if let Some(name) = l.strip_prefix('[').and_then(|x| x.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header = Some(no + 1);
            }
            continue;
        }
        if current == section {
            if let Some(k) = key {
                let lhs = l.split('=').next().unwrap_or("").trim();
                if lhs == k {
                    return Some(no + 1);
                }
            }
        }
    }
    header
}

/// Prefixes messages that start with `section.key` by their source line.
fn with_lines(text: &str, errors: Vec<String>) -> Vec<String> {
    errors
        .into_iter()
        .map(|m| {
            let head = m
                .split(|c: char| c == ':' || c == ' ')
                .next()
                .unwrap_or("")
                .trim_matches(|c| c == '[' || c == ']');
            let mut parts = head.splitn(2, '.');
            let section = parts.next().unwrap_or("");
            if !SECTIONS.contains(&section) {
                return m;
            }
            match locate(text, section, parts.next()) {
                Some(line) => format!("line {line}: {m}"),
                None => m,
            }
        })
        .collect()
}

/// Parses and validates scenario text. Every problem is reported, with the
/// offending key and, when it appears in `text`, its line.
pub fn parse_scenario_str(text: &str, overrides: &[(String, String)]) -> Result<Scenario> {
    parse_unlocated(text, overrides).map_err(|e| match e {
        Error::Validation(v) => Error::Validation(with_lines(text, v)),
        other => other,
    })
}

fn parse_unlocated(text: &str, overrides: &[(String, String)]) -> Result<Scenario> {
    let mut root = parse_table(text)?;
    apply_overrides(&mut root, overrides)?;
    let mut r = Reader { errors: Vec::new() };
    for k in root.keys() {
        if !SECTIONS.contains(&k.as_str()) {
            r.errors.push(format!(
                "unknown section [{k}] (allowed: {})",
                SECTIONS.join(", ")
            ));
        }
    }
    let grid_t = r.section(&root, "grid", true);
    let time_t = r.section(&root, "time", true);
    let physics_t = r.section(&root, "physics", true);
    let obstacle_t = r.section(&root, "obstacle", true);
    let ladder_t = r.section(&root, "ladder", true);
    let forcing_t = r.section(&root, "forcing", true);
    let initial_t = r.section(&root, "initial", true);
    let output_t = r.section(&root, "output", false);
    let tol_t = r.section(&root, "tolerances", false);
    let verify_t = r.section(&root, "verify", false);
    for (t, name) in [
        (grid_t, "grid"),
        (time_t, "time"),
        (physics_t, "physics"),
        (ladder_t, "ladder"),
        (output_t, "output"),
        (tol_t, "tolerances"),
        (verify_t, "verify"),
    ] {
        if let Some(t) = t {
            r.unknown(t, name, section_keys(name));
        }
    }

    let nx = r.uint(grid_t, "grid", "nx", true);
    let ny = r.uint(grid_t, "grid", "ny", true);
    let lx = r.float(grid_t, "grid", "lx").unwrap_or(1.0);
    let ly = r.float(grid_t, "grid", "ly").unwrap_or(1.0);
    let horizon = r.req_float(time_t, "time", "horizon");
    let tau = r.float(time_t, "time", "tau");
    let nu = r.req_float(physics_t, "physics", "nu");

    let (plx, ply, pt) = (lx, ly, horizon.unwrap_or(1.0));
    let obstacle = r.preset(obstacle_t, "obstacle", |n| ObstaclePreset::default_for(n, plx, ply, pt));
    let forcing = r.preset(forcing_t, "forcing", ForcingPreset::default_for);
    let initial = r.preset(initial_t, "initial", |n| InitialPreset::default_for(n, plx, ply));

    let ladder = match ladder_t.and_then(|t| t.get("indices")) {
        Some(Value::Array(a)) => {
            let mut out = Vec::new();
            for v in a {
                match v {
                    Value::Integer(i) if *i > 0 => out.push(*i as u64),
                    other => r.errors.push(format!(
                        "ladder.indices entries must be positive integers, got {other}"
                    )),
                }
            }
            Some(out)
        }
        Some(other) => {
            r.errors.push(format!("ladder.indices must be an array, got {other}"));
            None
        }
        None => {
            if ladder_t.is_some() {
                r.errors.push("missing key ladder.indices".into());
            }
            None
        }
    };
    let run_index = r.uint(ladder_t, "ladder", "run", false);

    let section_value = |t: Option<&Table>| t.map(|t| Value::Table(t.clone()));
    let output: Option<OutputSpec> = match section_value(output_t) {
        None => Some(OutputSpec::default()),
        Some(v) => {
            let mut base = match Value::try_from(OutputSpec::default()) {
                Ok(Value::Table(t)) => t,
                _ => unreachable!(),
            };
            if let Value::Table(t) = v {
                base.extend(t);
            }
            match Value::Table(base).try_into() {
                Ok(o) => Some(o),
                Err(e) => {
                    r.errors.push(format!("[output]: {}", e.message()));
                    None
                }
            }
        }
    };
    let tolerances: Option<SplitParams> = {
        let mut base = match Value::try_from(SplitParams::default()) {
            Ok(Value::Table(t)) => t,
            _ => unreachable!(),
        };
        if let Some(t) = tol_t {
            for (k, v) in t {
                let v = match v {
                    Value::Integer(i) if k != "max_iter" => Value::Float(*i as f64),
                    other => other.clone(),
                };
                base.insert(k.clone(), v);
            }
        }
        match Value::Table(base).try_into() {
            Ok(o) => Some(o),
            Err(e) => {
                r.errors.push(format!("[tolerances]: {}", e.message()));
                None
            }
        }
    };
    let verify: Option<VerifySpec> = match section_value(verify_t) {
        None => Some(VerifySpec::default()),
        Some(v) => match v.try_into() {
            Ok(o) => Some(o),
            Err(e) => {
                r.errors.push(format!("[verify]: {}", e.message()));
                None
            }
        },
    };
    if let Some(v) = &verify {
        r.errors.extend(v.problems());
    }

    if !r.errors.is_empty() {
        // Still report value problems of the parts that did parse.
        if let (Some(nx), Some(ny), Some(horizon), Some(nu), Some(ladder)) = (nx, ny, horizon, nu, &ladder) {
            let partial = SimulationConfig {
                grid: GridSpec { nx: nx as usize, ny: ny as usize, lx, ly },
                tau: tau.unwrap_or(horizon),
                horizon,
                nu,
                obstacle: obstacle.unwrap_or(ObstaclePreset::FreeFlow),
                ladder: ladder.clone(),
                forcing: forcing.unwrap_or(ForcingPreset::Zero),
                initial: initial.unwrap_or(InitialPreset::Zero),
                output: output.unwrap_or_default(),
                tolerances: tolerances.unwrap_or_default(),
            };
            r.errors.extend(partial.problems());
        }
        return Err(Error::Validation(r.errors));
    }
    let (nx, ny, horizon, nu) = (
        nx.expect("checked") as usize,
        ny.expect("checked") as usize,
        horizon.expect("checked"),
        nu.expect("checked"),
    );
    let initial = initial.expect("checked");
    let tau = match tau {
        Some(t) => t,
        None => default_tau(nx, ny, lx, ly, horizon, &initial, &mut r.errors),
    };
    let config = SimulationConfig {
        grid: GridSpec { nx, ny, lx, ly },
        tau,
        horizon,
        nu,
        obstacle: obstacle.expect("checked"),
        ladder: ladder.expect("checked"),
        forcing: forcing.expect("checked"),
        initial,
        output: output.expect("checked"),
        tolerances: tolerances.expect("checked"),
    };
    r.errors.extend(config.problems());
    if let Some(run) = run_index {
        if !config.ladder.contains(&run) {
            r.errors.push(format!(
                "ladder.run = {run} is not one of ladder.indices {:?}",
                config.ladder
            ));
        }
    }
    if !r.errors.is_empty() {
        return Err(Error::Validation(r.errors));
    }
    Ok(Scenario {
        config,
        run_index,
        verify: verify.expect("checked"),
    })
}

/// `τ = T/K` with the smallest `K` such that `τ max|u₀| ≤ h/2`.
fn default_tau(
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    horizon: f64,
    initial: &InitialPreset,
    errors: &mut Vec<String>,
) -> f64 {
    let speed = match MacGrid::new(nx, ny, lx, ly).and_then(|g| Ok((g, initial.sample(&g)?))) {
        Ok((g, u0)) => cell_vectors(&g, &u0)
            .iter()
            .fold(0.0_f64, |m, c| m.max(c[0].hypot(c[1]))),
        Err(e) => {
            errors.push(format!("grid: {e}"));
            return 1.0;
        }
    };
    let h = lx / nx as f64;
    let tau0 = 0.5 * h / speed.max(1.0);
    let k = (horizon / tau0).ceil().max(1.0);
    horizon / k
}

pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    parse_scenario_with(path, &[])
}

pub fn parse_scenario_with(path: &Path, overrides: &[(String, String)]) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario_str(&text, overrides).map_err(|e| match e {
        Error::Validation(v) => Error::Validation(
            v.into_iter()
                .map(|m| format!("{}: {m}", path.display()))
                .collect(),
        ),
        other => other,
    })
}
