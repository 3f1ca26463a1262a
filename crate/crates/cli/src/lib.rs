//! The `nsvi` command line.
//!
//! Exit codes: 0 success, 1 invalid input (scenario, overrides, arguments),
//! 2 numerical failure or a failed check.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use nsvi_core::diagnostics::{
    blockage_check, bv_estimate, energy_check, global_vi_residual, perturbation_structure_check,
    CheckStatus, CheckSummary, Subcylinder, TestFunctionFamily,
};
use nsvi_core::grid::{embedding_constants, poincare_constant, DualNormParams};
use nsvi_core::obstacle::{build_ladder, ObstacleLadder};
use nsvi_core::scenario::{
    output_dir, parse_override, parse_scenario_with, snapshot_vtk, timeseries_csv, write_tracked,
    FileEntry, RunManifest, Scenario, Timestamps,
};
use nsvi_core::stepper::{run, run_ladder, SimulationConfig, TrajectoryRecord};
use nsvi_core::vi_step::ball_project;
use nsvi_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "nsvi", version, about = "Navier-Stokes flow under a velocity obstacle")]
pub struct Cli {
    /// More detail on stdout (repeatable).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Only print errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario TOML file.
    pub scenario: PathBuf,
    /// Override a scenario key, e.g. `--set time.tau=0.001` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CheckName {
    Energy,
    Constraint,
    ViResidual,
    Bv,
    Perturbation,
    Blockage,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one ladder member (ladder.run, else the largest index) and write
    /// the time series, VTK snapshots and manifest.
    Run(ScenarioArgs),
    /// Run every ladder member and write the L²(Q) distance matrix with the
    /// D(n, 2n) monotonicity verdict.
    Ladder(ScenarioArgs),
    /// Run the diagnostics suite; exit 2 if an applicable check fails.
    Verify {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Run only these checks (repeatable).
        #[arg(long, value_enum)]
        only: Vec<CheckName>,
    },
    /// Print the discrete embedding constants of the scenario grid as CSV.
    Constants {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Random restarts of the ascent estimates.
        #[arg(long, default_value_t = 2)]
        restarts: usize,
    },
    /// Print the projection of (x, y) onto the closed disk of radius r.
    #[command(allow_negative_numbers = true)]
    Project { x: f64, y: f64, radius: f64 },
}

/// Process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Invalid = 1,
    Failed = 2,
}

fn exit_for(e: &Error) -> Exit {
    if e.is_numerical() {
        Exit::Failed
    } else {
        Exit::Invalid
    }
}

struct Console<'a> {
    out: &'a mut dyn Write,
    verbose: u8,
    quiet: bool,
}

impl Console<'_> {
    fn say(&mut self, line: impl AsRef<str>) {
        if !self.quiet {
            let _ = writeln!(self.out, "{}", line.as_ref());
        }
    }

    fn detail(&mut self, line: impl AsRef<str>) {
        if self.verbose > 0 && !self.quiet {
            let _ = writeln!(self.out, "{}", line.as_ref());
        }
    }
}

/// Runs a parsed command line, writing the human summary to `out` and
/// errors to `err`.
pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Exit {
    let mut con = Console {
        out,
        verbose: cli.verbose,
        quiet: cli.quiet,
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a, &mut con),
        Command::Ladder(a) => cmd_ladder(&a, &mut con),
        Command::Verify { scenario, only } => cmd_verify(&scenario, &only, &mut con),
        Command::Constants { scenario, restarts } => cmd_constants(&scenario, restarts, &mut con),
        Command::Project { x, y, radius } => cmd_project(x, y, radius, &mut con),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            report_error(&e, err);
            exit_for(&e)
        }
    }
}

fn report_error(e: &Error, err: &mut dyn Write) {
    match e {
        Error::Validation(list) => {
            let _ = writeln!(err, "error: {} problem(s) found", list.len());
            for m in list {
                let _ = writeln!(err, "  - {m}");
            }
        }
        other => {
            let _ = writeln!(err, "error: {other}");
        }
    }
}

fn load(args: &ScenarioArgs) -> Result<Scenario> {
    let overrides = args
        .set
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>>>()?;
    parse_scenario_with(&args.scenario, &overrides)
}

fn ladder_for(config: &SimulationConfig, n: u64) -> Result<ObstacleLadder> {
    build_ladder(&config.obstacle_field()?, &[n], &config.lattice()?)
}

fn timestamps(config: &SimulationConfig) -> Timestamps {
    Timestamps::for_run(0.0, config.horizon)
}

/// Writes the series, snapshots and scenario of one trajectory under `dir`.
fn write_trajectory(
    dir: &Path,
    prefix: &str,
    config: &SimulationConfig,
    rec: &TrajectoryRecord,
    ledger: Option<&nsvi_core::diagnostics::EnergyLedger>,
    snapshots: bool,
) -> Result<Vec<FileEntry>> {
    let mut files = vec![write_tracked(
        dir,
        &format!("{prefix}timeseries.csv"),
        timeseries_csv(rec, ledger).as_bytes(),
    )?];
    if snapshots && !rec.snapshots.is_empty() {
        let grid = config.mac_grid()?;
        let ladder = ladder_for(config, rec.n)?;
        let cells = grid.num_cells();
        for (u, &k) in rec.snapshots.iter().zip(&rec.snapshot_steps) {
            let p = ladder.members[0].slice(k, cells);
            let text = snapshot_vtk(&grid, u, p, rec.times[k])?;
            files.push(write_tracked(
                dir,
                &format!("{prefix}snapshots/u_{k:06}.vtk"),
                text.as_bytes(),
            )?);
        }
    }
    Ok(files)
}

fn constraint_summary(recs: &[&TrajectoryRecord], tol: f64) -> CheckSummary {
    let worst = recs.iter().map(|r| r.max_violation()).fold(0.0, f64::max);
    CheckSummary::new("constraint", worst <= tol, worst, tol)
}

fn finish(
    dir: &Path,
    scenario: &Scenario,
    command: &str,
    checks: Vec<CheckSummary>,
    mut files: Vec<FileEntry>,
) -> Result<PathBuf> {
    files.push(write_tracked(dir, "scenario.toml", scenario.to_toml().as_bytes())?);
    let mut manifest = RunManifest::new(scenario.config_hash(), command, timestamps(&scenario.config));
    manifest.checks = checks;
    manifest.files = files;
    manifest.write(dir)
}

fn status_word(s: CheckStatus) -> &'static str {
    match s {
        CheckStatus::Pass => "pass",
        CheckStatus::Fail => "FAIL",
        CheckStatus::NotApplicable => "n/a",
    }
}

fn print_check(con: &mut Console, c: &CheckSummary) {
    let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3e}"));
    con.say(format!(
        "  {:<13} {:<4}  worst {:>10}  threshold {:>10}",
        c.check,
        status_word(c.status),
        fmt(c.worst),
        fmt(c.threshold)
    ));
}

fn cmd_run(args: &ScenarioArgs, con: &mut Console) -> Result<Exit> {
    let scenario = load(args)?;
    let config = &scenario.config;
    let n = scenario.run_index();
    let dir = output_dir(&config.output.directory).join(format!("run-n{n}"));
    let rec = match run(config, n) {
        Ok(r) => r,
        Err(Error::StepFailed { step, partial, source }) => {
            let files = write_trajectory(&dir, "partial-", config, &partial, None, false)?;
            con.say(format!(
                "step {step} failed; partial series in {}",
                dir.join(&files[0].path).display()
            ));
            return Err(Error::StepFailed { step, partial, source });
        }
        Err(e) => return Err(e),
    };
    let grid = config.mac_grid()?;
    let ledger = energy_check(&rec, config, poincare_constant(&grid)?)?;
    let blockage = blockage_check(&rec, config)?;
    let mut files = write_trajectory(&dir, "", config, &rec, Some(&ledger), true)?;
    if blockage.applicable {
        files.push(write_tracked(&dir, "blockage.csv", blockage.to_csv().as_bytes())?);
    }
    let checks = vec![
        ledger.summary(),
        constraint_summary(&[&rec], config.tolerances.feas_tol),
        blockage.summary(),
    ];
    con.say(format!(
        "run n = {n}: {} steps, {} splitting iterations, final |u| = {:.6e}",
        rec.steps(),
        rec.step_iters.iter().sum::<usize>(),
        rec.l2_norm.last().copied().unwrap_or(0.0)
    ));
    for c in &checks {
        print_check(con, c);
    }
    for f in &files {
        con.detail(format!("  wrote {}", dir.join(&f.path).display()));
    }
    let manifest = finish(&dir, &scenario, "run", checks, files)?;
    con.say(format!("manifest: {}", manifest.display()));
    Ok(Exit::Ok)
}

fn cmd_ladder(args: &ScenarioArgs, con: &mut Console) -> Result<Exit> {
    let scenario = load(args)?;
    let config = &scenario.config;
    let lad = run_ladder(config)?;
    let dir = output_dir(&config.output.directory).join("ladder");
    let grid = config.mac_grid()?;
    let l_p = poincare_constant(&grid)?;
    let mut files = vec![write_tracked(&dir, "distance.csv", lad.distance_csv().as_bytes())?];
    let mut cauchy = String::from("n,m,distance\n");
    for c in &lad.cauchy {
        cauchy.push_str(&format!("{},{},{:.12e}\n", c.n, c.m, c.distance));
    }
    files.push(write_tracked(&dir, "cauchy.csv", cauchy.as_bytes())?);
    let mut checks = Vec::new();
    let mut worst_energy: Option<CheckSummary> = None;
    for rec in &lad.records {
        let ledger = energy_check(rec, config, l_p)?;
        files.extend(write_trajectory(&dir, &format!("n{}-", rec.n), config, rec, Some(&ledger), false)?);
        let s = ledger.summary();
        if worst_energy.as_ref().map_or(true, |w| s.worst > w.worst) {
            worst_energy = Some(s);
        }
    }
    checks.extend(worst_energy);
    checks.push(constraint_summary(
        &lad.records.iter().collect::<Vec<_>>(),
        config.tolerances.feas_tol,
    ));
    let nonincreasing = lad.cauchy_nonincreasing();
    let worst_step = lad
        .cauchy
        .windows(2)
        .map(|w| w[1].distance - w[0].distance)
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(CheckSummary::new(
        "ladder-cauchy",
        nonincreasing,
        if worst_step.is_finite() { worst_step } else { 0.0 },
        0.0,
    ));
    con.say(format!("ladder {:?}", lad.indices));
    for c in &lad.cauchy {
        con.say(format!("  D({}, {}) = {:.6e}", c.n, c.m, c.distance));
    }
    con.say(format!(
        "verdict: {}",
        if nonincreasing { "nonincreasing" } else { "not nonincreasing" }
    ));
    for f in &files {
        con.detail(format!("  wrote {}", dir.join(&f.path).display()));
    }
    let manifest = finish(&dir, &scenario, "ladder", checks, files)?;
    con.say(format!("manifest: {}", manifest.display()));
    Ok(Exit::Ok)
}

fn cmd_verify(args: &ScenarioArgs, only: &[CheckName], con: &mut Console) -> Result<Exit> {
    let scenario = load(args)?;
    let config = &scenario.config;
    let spec = &scenario.verify;
    let wanted = |c: CheckName| only.is_empty() || only.contains(&c);
    let n = scenario.run_index();
    let records = if config.ladder.len() >= 2 {
        run_ladder(config)?.records
    } else {
        vec![run(config, n)?]
    };
    let main = records
        .iter()
        .find(|r| r.n == n)
        .ok_or_else(|| Error::Invariant(format!("no trajectory for n = {n}")))?;
    let grid = config.mac_grid()?;
    let dir = output_dir(&config.output.directory).join("verify");
    let mut checks: Vec<(CheckSummary, Option<String>)> = Vec::new();
    let mut files = Vec::new();

    if wanted(CheckName::Energy) {
        let l_p = poincare_constant(&grid)?;
        let mut worst = f64::NEG_INFINITY;
        let mut worst_file = None;
        for rec in &records {
            let ledger = energy_check(rec, config, l_p)?;
            let name = format!("energy-n{}.csv", rec.n);
            files.push(write_tracked(&dir, &name, ledger.to_csv().as_bytes())?);
            if -ledger.min_margin() > worst {
                worst = -ledger.min_margin();
                worst_file = Some(name);
            }
        }
        let s = CheckSummary::new("energy", worst <= spec.energy_slack, worst, spec.energy_slack);
        checks.push((s, worst_file));
    }
    if wanted(CheckName::Constraint) {
        let s = constraint_summary(&records.iter().collect::<Vec<_>>(), config.tolerances.feas_tol);
        let mut csv = String::from("n,max_violation\n");
        for r in &records {
            csv.push_str(&format!("{},{:.12e}\n", r.n, r.max_violation()));
        }
        files.push(write_tracked(&dir, "constraint.csv", csv.as_bytes())?);
        checks.push((s, Some("constraint.csv".into())));
    }
    if wanted(CheckName::ViResidual) {
        let field = config.obstacle_field()?;
        let lattice = config.lattice()?;
        let family = TestFunctionFamily::bumps(&field, &lattice, spec.family_size, spec.seed)?;
        let ladder = ladder_for(config, n)?;
        let rep = global_vi_residual(main, &family, config, &ladder.members[0], spec.vi_slack)?;
        files.push(write_tracked(&dir, "vi-residual.csv", rep.to_csv().as_bytes())?);
        checks.push((rep.summary(), Some("vi-residual.csv".into())));
    }
    if wanted(CheckName::Bv) {
        match &spec.subcylinder {
            None => checks.push((CheckSummary::not_applicable("bv"), None)),
            Some(sc) => {
                let sub = Subcylinder {
                    mask: sc.mask(&grid)?,
                    t1: sc.t1,
                    t1p: sc.t1p,
                };
                let constants = embedding_constants(&grid, spec.restarts)?;
                let params = DualNormParams {
                    tol: spec.dual_tol,
                    ..DualNormParams::default()
                };
                let rep = bv_estimate(&records, config, &sub, spec.kappa, &constants, params)?;
                files.push(write_tracked(&dir, "bv.csv", rep.to_csv().as_bytes())?);
                checks.push((rep.summary(), Some("bv.csv".into())));
            }
        }
    }
    if wanted(CheckName::Perturbation) {
        let (v, w) = match (records.first(), records.last()) {
            (Some(a), Some(b)) if records.len() >= 2 => (a.final_state(), b.final_state()),
            _ => (main.snapshots.get(main.snapshots.len() / 2), main.final_state()),
        };
        let (v, w) = v
            .zip(w)
            .ok_or_else(|| Error::Invariant("trajectory kept no states".into()))?;
        let rep = perturbation_structure_check(&grid, v, w)?;
        let text = format!(
            "total,first_sum,second_sum,split_error,bound,max_v\n{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            rep.total, rep.first_sum, rep.second_sum, rep.split_error, rep.bound, rep.max_v
        );
        files.push(write_tracked(&dir, "perturbation.csv", text.as_bytes())?);
        checks.push((rep.summary(), Some("perturbation.csv".into())));
    }
    if wanted(CheckName::Blockage) {
        let rep = blockage_check(main, config)?;
        if rep.applicable {
            files.push(write_tracked(&dir, "blockage.csv", rep.to_csv().as_bytes())?);
        }
        checks.push((rep.summary(), rep.applicable.then(|| "blockage.csv".to_string())));
    }

    let summaries: Vec<CheckSummary> = checks.iter().map(|c| c.0.clone()).collect();
    let summary_json = serde_json::to_string_pretty(&summaries).expect("summaries serialize") + "\n";
    files.push(write_tracked(&dir, "summary.json", summary_json.as_bytes())?);
    con.say(format!(
        "verify {} (n = {n}, ladder {:?})",
        scenario_name(&args.scenario),
        config.ladder
    ));
    for (c, _) in &checks {
        print_check(con, c);
    }
    let manifest = finish(&dir, &scenario, "verify", summaries, files)?;
    con.say(format!("manifest: {}", manifest.display()));
    let failed: Vec<&(CheckSummary, Option<String>)> =
        checks.iter().filter(|c| c.0.status == CheckStatus::Fail).collect();
    if failed.is_empty() {
        return Ok(Exit::Ok);
    }
    for (c, report) in failed {
        let path = report
            .as_ref()
            .map_or_else(|| manifest.clone(), |r| dir.join(r));
        // Failures are reported even with --quiet.
        let _ = writeln!(con.out, "failed: {} (report: {})", c.check, path.display());
    }
    Ok(Exit::Failed)
}

fn scenario_name(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn cmd_constants(args: &ScenarioArgs, restarts: usize, con: &mut Console) -> Result<Exit> {
    let scenario = load(args)?;
    let grid = scenario.config.mac_grid()?;
    let report = embedding_constants(&grid, restarts)?;
    // The CSV is the product of this command, so it ignores --quiet.
    let _ = write!(con.out, "{}", report.to_csv());
    Ok(Exit::Ok)
}

fn cmd_project(x: f64, y: f64, radius: f64, con: &mut Console) -> Result<Exit> {
    let [a, b] = ball_project([x, y], radius)?;
    // `+ 0.0` turns −0 into 0.
    let _ = writeln!(con.out, "{} {}", a + 0.0, b + 0.0);
    Ok(Exit::Ok)
}
