//! Batch front end: `simulate`, `find-periodic`, `verify`, `mms` and
//! `report`.
//!
//! Exit status is 0 when every verdict passes, 1 on numerical failure
//! (non-finite values, failed verdicts, non-convergence) and 2 when the
//! configuration is rejected.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::{RunConfig, Setup};
use crate::diagnostics::{moser_escalation, verdict_suite, DiagnosticsLedger, Verdict};
use crate::error::{Error, Result};
use crate::grid::State;
use crate::integrator::{Integrator, StepContext, StepHook};
use crate::mms::{run_convergence, ManufacturedCase, OrderCriterion};
use crate::output::{
    fmt17, order_csv, read_key_values, read_ledger, residuals_csv, write_ledger, write_snapshot, write_text, Summary,
};
use crate::periodic::find_periodic;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_NUMERIC: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "chemostokes", version, about = "Time-periodic chemotaxis-Stokes simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run K periods from the configured initial state and audit them.
    Simulate(RunArgs),
    /// Search for the periodic orbit by fixed-point iteration of the period map.
    FindPeriodic(RunArgs),
    /// Locate the orbit, run K periods on it and execute the full verdict suite.
    Verify(RunArgs),
    /// Run the manufactured-solution convergence ladders.
    Mms(RunArgs),
    /// Re-render the summary from the CSVs of an earlier run.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Omit wall-clock times so that outputs are byte-identical across runs.
    #[arg(long)]
    pub deterministic: bool,
    /// Number of periods to simulate (overrides `run.periods`).
    #[arg(long, value_name = "K")]
    pub periods: Option<usize>,
    /// Spatial dimension (overrides `grid.dim`).
    #[arg(long, value_parser = clap::value_parser!(u8).range(2..=3))]
    pub dim: Option<u8>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding the ledger CSVs.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub deterministic: bool,
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Exit status for an error that aborted a run.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Expr(_) => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Simulate(a) => simulate(&load(&a)?),
        Command::FindPeriodic(a) => periodic(&load(&a)?),
        Command::Verify(a) => verify(&load(&a)?),
        Command::Mms(a) => mms(&load(&a)?),
        Command::Report(a) => report(&a.out, a.deterministic),
    }
}

/// Reads the config and applies the command-line overrides.
pub fn load(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    if args.deterministic {
        cfg.run.deterministic = true;
    }
    if let Some(k) = args.periods {
        cfg.run.periods = k;
    }
    if let Some(d) = args.dim {
        cfg.grid.dim = d as usize;
    }
    Ok(cfg)
}

/// Writes snapshots every `stride` steps.
struct SnapshotHook<'a> {
    dir: &'a Path,
    stride: usize,
    count: usize,
}

impl StepHook for SnapshotHook<'_> {
    fn on_step(&mut self, ctx: &StepContext<'_>) -> Result<()> {
        self.count += 1;
        if self.stride > 0 && self.count.is_multiple_of(self.stride) {
            snapshot(self.dir, &format!("step{:06}", self.count), ctx.problem, ctx.after, ctx.phase_after)?;
        }
        Ok(())
    }
}

fn snapshot(dir: &Path, stem: &str, problem: &crate::integrator::Problem, state: &State, phase: f64) -> Result<()> {
    let c = problem.homogenizers.from_homogeneous(&state.c_tilde, phase);
    write_snapshot(&dir.join("snapshots"), stem, state, &c)
}

struct Both<'a, A, B>(&'a mut A, &'a mut B);

impl<A: StepHook, B: StepHook> StepHook for Both<'_, A, B> {
    fn on_step(&mut self, ctx: &StepContext<'_>) -> Result<()> {
        self.0.on_step(ctx)?;
        self.1.on_step(ctx)
    }
}

fn header(cfg: &RunConfig, setup: &Setup, command: &str) -> Summary {
    let mut s = Summary::default();
    let g = &setup.problem.grid;
    let cells = g.cells();
    s.push("command", command);
    s.push("dim", g.dim());
    s.push("cells", cells[..g.dim()].iter().map(|c| c.to_string()).collect::<Vec<_>>().join("x"));
    s.push_f64("m", cfg.physics.m);
    s.push_f64("chi", cfg.physics.chi);
    s.push_f64("mu", cfg.physics.mu);
    s.push_f64("period", cfg.physics.period);
    s.push_f64("dt", cfg.integrator.dt);
    s.push("clip_negative", setup.step.clip_negative);
    s
}

fn wall_time(s: &mut Summary, cfg: &RunConfig, start: Instant) {
    if !cfg.run.deterministic {
        s.push("wall_time_s", format!("{:.3}", start.elapsed().as_secs_f64()));
    }
}

/// Runs `periods` periods from `start`, recording into a fresh ledger.
/// A numerical failure stops the run; the partial ledger is still returned.
fn run_periods(cfg: &RunConfig, setup: &Setup, start: &State) -> (DiagnosticsLedger, State, Option<Error>) {
    let dir = &cfg.output.dir;
    let mut ledger = DiagnosticsLedger::new(&setup.problem, start, setup.ledger);
    let mut snaps = SnapshotHook { dir, stride: cfg.output.snapshot_stride, count: 0 };
    let mut integ = match Integrator::new(&setup.problem, setup.step) {
        Ok(i) => i,
        Err(e) => return (ledger, start.clone(), Some(e)),
    };
    let mut state = start.clone();
    for _ in 0..cfg.run.periods {
        match integ.simulate_period(&state, &mut Both(&mut ledger, &mut snaps)) {
            Ok(next) => state = next,
            Err(e) => return (ledger, state, Some(e)),
        }
    }
    (ledger, state, None)
}

fn write_run_meta(dir: &Path, clip: bool, on_orbit: bool) -> Result<()> {
    write_text(&dir.join("run_meta.txt"), &format!("clip_negative: {clip}\non_orbit: {on_orbit}\n"))
}

fn finish(dir: &Path, summary: &Summary, failure: Option<Error>) -> Result<i32> {
    summary.write(&dir.join("summary.txt"))?;
    print!("{}", summary.render());
    match failure {
        Some(e) => {
            eprintln!("error: {e}");
            Ok(exit_code(&e))
        }
        None if summary.passed() => Ok(EXIT_PASS),
        None => Ok(EXIT_NUMERIC),
    }
}

fn numeric_failure(e: &Error) -> Verdict {
    Verdict { name: "run_completed".into(), passed: false, value: 1.0, limit: 0.0, detail: e.to_string() }
}

fn save_config(cfg: &RunConfig) -> Result<()> {
    write_text(&cfg.output.dir.join("config.toml"), &cfg.to_toml()?)
}

pub fn simulate(cfg: &RunConfig) -> Result<i32> {
    let setup = cfg.build()?;
    let start = Instant::now();
    let dir = cfg.output.dir.clone();
    save_config(cfg)?;
    let (ledger, state, failure) = run_periods(cfg, &setup, &setup.initial);
    let moser = moser_escalation(&ledger, ledger.m);
    write_ledger(&dir, &ledger, &moser)?;
    write_run_meta(&dir, setup.step.clip_negative, false)?;
    if failure.is_none() {
        snapshot(&dir, "final", &setup.problem, &state, state.t)?;
    }

    let mut s = header(cfg, &setup, "simulate");
    s.push("periods", cfg.run.periods);
    s.push("steps", ledger.steps.len());
    s.push_f64("final_time", state.t);
    s.push_f64("final_mass", state.n.integral());
    wall_time(&mut s, cfg, start);
    s.verdicts = verdict_suite(&ledger, setup.step.clip_negative, false);
    if let Some(e) = &failure {
        s.verdicts.push(numeric_failure(e));
    }
    finish(&dir, &s, failure)
}

pub fn periodic(cfg: &RunConfig) -> Result<i32> {
    let setup = cfg.build()?;
    let start = Instant::now();
    let dir = cfg.output.dir.clone();
    save_config(cfg)?;
    let report = match find_periodic(&setup.problem, &setup.initial, setup.step, setup.fixed_point) {
        Ok(r) => r,
        Err(e) => {
            let mut s = header(cfg, &setup, "find-periodic");
            s.verdicts.push(numeric_failure(&e));
            return finish(&dir, &s, Some(e));
        }
    };
    write_text(&dir.join("residuals.csv"), &residuals_csv(&report.residual_history))?;
    snapshot(&dir, "orbit", &setup.problem, &report.final_state, 0.0)?;

    let mut s = header(cfg, &setup, "find-periodic");
    s.push("iterations", report.iterations);
    s.push_f64("final_residual", report.final_residual());
    s.push_f64("orbit_mass", report.final_state.n.integral());
    wall_time(&mut s, cfg, start);
    s.verdicts.push(Verdict {
        name: "fixed_point_converged".into(),
        passed: report.converged,
        value: report.final_residual(),
        limit: setup.fixed_point.tol_rel,
        detail: format!("{} iterations", report.iterations),
    });
    finish(&dir, &s, None)
}

pub fn verify(cfg: &RunConfig) -> Result<i32> {
    let setup = cfg.build()?;
    let start = Instant::now();
    let dir = cfg.output.dir.clone();
    save_config(cfg)?;
    let mut s = header(cfg, &setup, "verify");
    let mut verdicts = Vec::new();

    let mut on_orbit = false;
    let mut init = setup.initial.clone();
    if cfg.verify.orbit {
        match find_periodic(&setup.problem, &setup.initial, setup.step, setup.fixed_point) {
            Ok(report) => {
                write_text(&dir.join("residuals.csv"), &residuals_csv(&report.residual_history))?;
                s.push("orbit_iterations", report.iterations);
                s.push_f64("orbit_residual", report.final_residual());
                verdicts.push(Verdict {
                    name: "fixed_point_converged".into(),
                    passed: report.converged,
                    value: report.final_residual(),
                    limit: setup.fixed_point.tol_rel,
                    detail: format!("{} iterations", report.iterations),
                });
                on_orbit = report.converged;
                init = report.final_state;
            }
            Err(e) => {
                verdicts.push(numeric_failure(&e));
                s.verdicts = verdicts;
                return finish(&dir, &s, Some(e));
            }
        }
    }

    let (mut ledger, state, failure) = run_periods(cfg, &setup, &init);
    let excess = cfg.verify.inject_oxygen_excess;
    if excess != 0.0 {
        for row in &mut ledger.monitors {
            row.c_max += excess;
        }
        s.push_f64("injected_oxygen_excess", excess);
    }
    let moser = moser_escalation(&ledger, ledger.m);
    write_ledger(&dir, &ledger, &moser)?;
    write_run_meta(&dir, setup.step.clip_negative, on_orbit)?;
    if failure.is_none() {
        snapshot(&dir, "final", &setup.problem, &state, state.t)?;
    }

    s.push("periods", cfg.run.periods);
    s.push("steps", ledger.steps.len());
    wall_time(&mut s, cfg, start);
    verdicts.extend(verdict_suite(&ledger, setup.step.clip_negative, on_orbit));
    if let Some(e) = &failure {
        verdicts.push(numeric_failure(e));
    }
    s.verdicts = verdicts;
    finish(&dir, &s, failure)
}

fn criterion_limit(c: OrderCriterion) -> f64 {
    match c {
        OrderCriterion::Within { expected, .. } => expected,
        OrderCriterion::AtLeast { minimum } => minimum,
    }
}

pub fn mms(cfg: &RunConfig) -> Result<i32> {
    if cfg.grid.dim != 2 {
        return Err(Error::Config("the manufactured solutions are two-dimensional; use --dim 2".into()));
    }
    let cases = cfg
        .mms
        .cases
        .iter()
        .map(|name| ManufacturedCase::by_name(name).ok_or_else(|| Error::Config(format!("unknown mms case `{name}`"))))
        .collect::<Result<Vec<_>>>()?;
    let start = Instant::now();
    let dir = cfg.output.dir.clone();
    save_config(cfg)?;
    let mut s = Summary::default();
    s.push("command", "mms");
    let mut failure = None;
    for case in &cases {
        match run_convergence(case, &case.ladder) {
            Ok(table) => {
                write_text(&dir.join(format!("order_{}.csv", case.name)), &order_csv(&table))?;
                for (field, l2, linf) in &table.orders {
                    s.push(&format!("{}_{field}_order_l2", case.name), fmt17(*l2));
                    s.push(&format!("{}_{field}_order_linf", case.name), fmt17(*linf));
                }
                s.verdicts.push(Verdict {
                    name: format!("mms_{}", case.name),
                    passed: table.passed,
                    value: table.judged_order(),
                    limit: criterion_limit(table.criterion),
                    detail: format!("{} order {}", table.judged_field, table.criterion),
                });
            }
            Err(e) => {
                s.verdicts.push(numeric_failure(&e));
                failure = Some(e);
                break;
            }
        }
    }
    wall_time(&mut s, cfg, start);
    finish(&dir, &s, failure)
}

/// Rebuilds the verdicts from the ledger CSVs in `dir`.
pub fn report(dir: &Path, deterministic: bool) -> Result<i32> {
    let start = Instant::now();
    let ledger = read_ledger(dir)?;
    let meta = std::fs::read_to_string(dir.join("run_meta.txt")).unwrap_or_default();
    let meta = read_key_values(&meta);
    let flag = |key: &str| meta.iter().any(|(k, v)| k == key && v == "true");
    let clip = flag("clip_negative");
    let on_orbit = flag("on_orbit");

    let mut s = Summary::default();
    s.push("command", "report");
    s.push("source", dir.display());
    s.push("steps", ledger.steps.len());
    s.push("periods", ledger.period_count());
    if !deterministic {
        s.push("wall_time_s", format!("{:.3}", start.elapsed().as_secs_f64()));
    }
    s.verdicts = verdict_suite(&ledger, clip, on_orbit);
    s.write(&dir.join("report.txt"))?;
    print!("{}", s.render());
    Ok(if s.passed() { EXIT_PASS } else { EXIT_NUMERIC })
}
