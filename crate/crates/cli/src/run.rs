//! Mode drivers.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use mmc_ch::diagnostics::{ReferenceSpec, RefinementPath, RefinementSetup, Violation};
use mmc_ch::{
    refinement_study, scheme_comparison, simulate, ComparisonRow, Error, Field, Grid, InitialCondition,
    RefinementResult, RunSpec,
};
use thiserror::Error;

use crate::config::{ConfigError, InitialSpec, Location, Mode, RunConfig};
use crate::output::{read_snapshot, snapshot_path, write_snapshot, SeriesWriter};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
    #[error(transparent)]
    Solver(#[from] Error),
    #[error("{0} invariant violation(s), first: {1:?}")]
    Violations(usize, Violation),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 1,
            CliError::Solver(
                Error::MassDrift { .. } | Error::Positivity { .. } | Error::EnergyIncrease { .. },
            ) => 4,
            CliError::Solver(_) => 3,
            CliError::Violations(..) => 4,
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

fn analytic(spec: &InitialSpec) -> Option<InitialCondition<f64>> {
    match *spec {
        InitialSpec::Cosine => Some(InitialCondition::Cosine),
        InitialSpec::Random { seed, amplitude } => {
            Some(InitialCondition::Random { seed, amplitude, mean: 0.6 })
        }
        InitialSpec::File(_) => None,
    }
}

/// Samples or loads the initial field on the configured grid.
pub fn initial_field(cfg: &RunConfig, n: usize) -> Result<Field, CliError> {
    let grid = Grid::new(cfg.length, n)?;
    if let Some(ic) = analytic(&cfg.initial) {
        return Ok(ic.sample(grid)?);
    }
    match &cfg.initial {
        InitialSpec::File(path) => {
            let (phi, _) = read_snapshot(path).map_err(io_err(format!("reading {}", path.display())))?;
            let g = phi.grid();
            if g.n() != n || (g.length() - cfg.length).abs() > 1e-9 * cfg.length {
                return Err(Error::InvalidGrid(format!(
                    "{} holds N = {}, L = {}; the run needs N = {n}, L = {}",
                    path.display(),
                    g.n(),
                    g.length(),
                    cfg.length
                ))
                .into());
            }
            Ok(Field::from_vec(grid, phi.into_values())?)
        }
        _ => unreachable!("analytic data handled above"),
    }
}

fn run_spec(cfg: &RunConfig, dt: f64, t_final: f64) -> RunSpec<f64> {
    RunSpec {
        dt,
        t_final,
        variant: cfg.variant,
        params: cfg.params(),
        solver: cfg.solver.clone(),
        strict: cfg.strict,
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))
}

/// What a finished run wrote.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Simulated { series: PathBuf, snapshots: Vec<PathBuf>, steps: usize },
    Refined { table: PathBuf, result: RefinementResult },
    Compared { table: PathBuf, rows: Vec<ComparisonRow> },
}

pub fn run_simulate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let dir = &cfg.output.dir;
    create_dir(dir)?;
    let series = dir.join(&cfg.output.series_file);
    let mut writer =
        SeriesWriter::create(&series).map_err(io_err(format!("creating {}", series.display())))?;
    let mut snapshots = Vec::new();
    let every = cfg.output.snapshot_every;
    let phi0 = initial_field(cfg, cfg.grid_n)?;
    // the core callback can only return solver errors; keep the I/O error aside
    let mut io_failure = None;
    let result = simulate(phi0, &run_spec(cfg, cfg.dt, cfg.t_final), |s, r| {
        let written =
            writer.write(r).map_err(io_err(format!("writing {}", series.display()))).and_then(|()| {
                if every > 0 && r.step % every == 0 {
                    let path = snapshot_path(dir, r.step);
                    write_snapshot(&path, s.phi(), r.t)
                        .map_err(io_err(format!("writing {}", path.display())))?;
                    snapshots.push(path);
                }
                Ok(())
            });
        written.map_err(|e| {
            io_failure = Some(e);
            Error::TimeStep("output failed".into())
        })
    });
    if let Some(e) = io_failure {
        return Err(e);
    }
    let (state, tracker) = result?;
    if let Some(v) = tracker.violations().first() {
        return Err(CliError::Violations(tracker.violations().len(), v.clone()));
    }
    Ok(Outcome::Simulated { series, snapshots, steps: state.step() })
}

pub fn run_refine(cfg: &RunConfig, threads: usize) -> Result<Outcome, CliError> {
    create_dir(&cfg.output.dir)?;
    let r = &cfg.refine;
    let initial = analytic(&cfg.initial).ok_or_else(|| ConfigError {
        key: "initial".into(),
        location: Location::Default,
        message: "refine mode samples the initial data on every grid; a file cannot be used".into(),
    })?;
    let setup = RefinementSetup {
        length: cfg.length,
        initial,
        grids: r.grids.clone(),
        path: RefinementPath { c: r.c },
        t_final: r.t_final,
        variant: cfg.variant,
        params: cfg.params(),
        solver: cfg.solver.clone(),
        interpolation: r.interpolation,
        threads,
    };
    let result = refinement_study(&setup)?;
    let table = cfg.output.dir.join("refine.csv");
    let mut text = String::from("coarse_n,fine_n,dt_fine,cauchy_error,rate\n");
    for k in 0..result.cauchy_errors.len() {
        let rate = if k == 0 { String::new() } else { format!("{:.6}", result.rates[k - 1]) };
        text.push_str(&format!(
            "{},{},{:.16e},{:.16e},{}\n",
            result.grid_sizes[k],
            result.grid_sizes[k + 1],
            result.dts[k + 1],
            result.cauchy_errors[k],
            rate
        ));
    }
    fs::write(&table, text).map_err(io_err(format!("writing {}", table.display())))?;
    Ok(Outcome::Refined { table, result })
}

pub fn run_compare(cfg: &RunConfig) -> Result<Outcome, CliError> {
    create_dir(&cfg.output.dir)?;
    let c = &cfg.compare;
    let phi0 = initial_field(cfg, cfg.grid_n)?;
    let reference = ReferenceSpec { variant: c.reference_variant, divisor: c.reference_divisor };
    let mut rows = Vec::new();
    for &dt in &c.dts {
        rows.extend(scheme_comparison(
            &phi0,
            &c.variants,
            reference,
            dt,
            c.t_final,
            &cfg.params(),
            &cfg.solver,
        )?);
    }
    let table = cfg.output.dir.join("compare.csv");
    let mut text = String::from("variant,dt,max_err,l2_err,cpu_seconds\n");
    for r in &rows {
        text.push_str(&format!(
            "{},{:e},{:.16e},{:.16e},{:.3}\n",
            r.variant, r.dt, r.max_err, r.l2_err, r.cpu_seconds
        ));
    }
    fs::write(&table, text).map_err(io_err(format!("writing {}", table.display())))?;
    Ok(Outcome::Compared { table, rows })
}

pub fn run(cfg: &RunConfig, threads: usize) -> Result<Outcome, CliError> {
    match cfg.mode {
        Mode::Simulate => run_simulate(cfg),
        Mode::Refine => run_refine(cfg, threads),
        Mode::Compare => run_compare(cfg),
    }
}

/// Human-readable summary of an outcome.
pub fn report(outcome: &Outcome, out: &mut impl Write) -> io::Result<()> {
    match outcome {
        Outcome::Simulated { series, snapshots, steps } => {
            writeln!(out, "{steps} steps; series in {}", series.display())?;
            if !snapshots.is_empty() {
                writeln!(out, "{} snapshots", snapshots.len())?;
            }
        }
        Outcome::Refined { table, result } => {
            writeln!(out, "{:>6} {:>6} {:>12} {:>12} {:>7}", "coarse", "fine", "dt", "error", "rate")?;
            for k in 0..result.cauchy_errors.len() {
                let rate = if k == 0 { String::new() } else { format!("{:.3}", result.rates[k - 1]) };
                writeln!(
                    out,
                    "{:>6} {:>6} {:>12.4e} {:>12.4e} {:>7}",
                    result.grid_sizes[k],
                    result.grid_sizes[k + 1],
                    result.dts[k + 1],
                    result.cauchy_errors[k],
                    rate
                )?;
            }
            writeln!(out, "table in {}", table.display())?;
        }
        Outcome::Compared { table, rows } => {
            writeln!(out, "{:<20} {:>10} {:>12} {:>12} {:>9}", "variant", "dt", "max", "l2", "cpu_s")?;
            for r in rows {
                writeln!(
                    out,
                    "{:<20} {:>10.1e} {:>12.4e} {:>12.4e} {:>9.2}",
                    r.variant.name(),
                    r.dt,
                    r.max_err,
                    r.l2_err,
                    r.cpu_seconds
                )?;
            }
            writeln!(out, "table in {}", table.display())?;
        }
    }
    Ok(())
}

/// Worker cap for refinement studies: `MMC_CH_THREADS`, else the core count.
pub fn thread_cap(env: Option<&str>) -> usize {
    env.and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
