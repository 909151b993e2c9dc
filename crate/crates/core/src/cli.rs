//! Command-line front end.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::bound_states::{spectrum_trajectory, uniform_times};
use crate::config::{parse_user_values, with_overrides, RunConfig, UserValues};
use crate::error::{Error, Result};
use crate::output::{self, Manifest, OutputDir};
use crate::propagator::{shared_basis, EnsembleOptions, TimeStepping};
use crate::sweep::{frequency_grid, optimal_phase_curve, phase_sweep, simulate, summarize};
use crate::units::{Constants, Grid};

#[derive(Debug, Parser)]
#[command(name = "pairwell", version, about = "Pair creation in an oscillating Sauter well")]
pub struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one configuration key (repeatable), e.g. `--set phi=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub verb: Verb,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Verb {
    /// Evolve the Dirac sea once and write N(t).
    Simulate,
    /// Bound-level trajectory and dive events.
    Spectrum,
    /// Final pair number over the phase list.
    SweepPhase,
    /// Phase extremes at every frequency.
    Table1,
    /// Maximizing phase at every frequency.
    OptimalPhase,
}

impl Verb {
    pub fn name(self) -> &'static str {
        match self {
            Verb::Simulate => "simulate",
            Verb::Spectrum => "spectrum",
            Verb::SweepPhase => "sweep-phase",
            Verb::Table1 => "table1",
            Verb::OptimalPhase => "optimal-phase",
        }
    }
}

/// Parameters as consumed, in atomic units, next to the user's input.
#[derive(Debug, Serialize)]
struct ManifestConfig<'a> {
    input: &'a UserValues,
    constants: Constants,
    well: crate::potential::WellParams,
    grid_length: f64,
    grid_points: usize,
    grid_spacing: f64,
    stepping: TimeStepping,
    n_steps: usize,
    options: EnsembleOptions,
    phases: &'a [f64],
    frequencies: &'a [f64],
    spectrum_times: usize,
    workers: usize,
}

pub fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut user = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Resource(format!("cannot read {}: {e}", path.display())))?;
            parse_user_values(&text)?
        }
        None => UserValues::default(),
    };
    with_overrides(&mut user, &cli.overrides)?;
    RunConfig::from_user(user)
}

fn spectrum_times(config: &RunConfig) -> Vec<f64> {
    let t_final = config.policy.t_final;
    let periods = t_final / config.well.period();
    let samples = (periods * config.user.spectrum_samples_per_period as f64).ceil() as usize + 1;
    uniform_times(t_final, samples)
}

#[cfg(feature = "parallel")]
fn configure_workers(workers: usize) -> Result<()> {
    if workers > 0 {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_workers(_workers: usize) -> Result<()> {
    Ok(())
}

/// Runs one verb, writing its tables and `manifest.json` under the
/// configured output directory. Returns the manifest path.
pub fn run_command(verb: Verb, config: &RunConfig) -> Result<PathBuf> {
    configure_workers(config.user.workers)?;
    let start = Instant::now();
    let precision = config.user.precision;
    let options = config.ensemble_options();
    let stepping = config.stepping();
    let mut out = OutputDir::create(&config.user.output)?;
    let mut n_times = 0;

    let basis_for = |grid: &Grid| shared_basis(grid.clone());

    match verb {
        Verb::Simulate => {
            let basis = basis_for(&config.grid);
            let sim = simulate(&basis, &config.well, &stepping, &options, config.user.density)?;
            out.write("number_series.csv", &output::number_series_table(&sim.series, precision))?;
            if let Some(d) = &sim.density {
                let table = output::density_table(d, config.grid.positions(), precision);
                out.write("density.csv", &table)?;
            }
        }
        Verb::Spectrum => {
            let times = spectrum_times(config);
            n_times = times.len();
            let traj = spectrum_trajectory(&config.well, &times)?;
            out.write("spectrum.csv", &output::spectrum_table(&traj, precision))?;
            out.write("dive_events.csv", &output::dive_events_table(&traj.dive_events, precision))?;
        }
        Verb::SweepPhase => {
            let basis = basis_for(&config.grid);
            let points = phase_sweep(&basis, &config.well, &config.phases, &config.policy, &options)?;
            out.write("phase_sweep.csv", &output::phase_sweep_table(&points, precision))?;
        }
        Verb::Table1 => {
            let basis = basis_for(&config.grid);
            let grid = frequency_grid(
                &basis,
                &config.well,
                &config.frequencies,
                &config.phases,
                &config.policy,
                &options,
            )?;
            let rows = grid.iter().map(|p| summarize(p)).collect::<Result<Vec<_>>>()?;
            let all: Vec<_> = grid.into_iter().flatten().collect();
            out.write("phase_sweep.csv", &output::phase_sweep_table(&all, precision))?;
            out.write("frequency_summary.csv", &output::frequency_summary_table(&rows, precision))?;
        }
        Verb::OptimalPhase => {
            let basis = basis_for(&config.grid);
            let rows = optimal_phase_curve(
                &basis,
                &config.well,
                &config.frequencies,
                &config.phases,
                &config.policy,
                &options,
            )?;
            out.write("optimal_phase.csv", &output::optimal_phase_table(&rows, precision))?;
        }
    }

    let manifest_config = ManifestConfig {
        input: &config.user,
        constants: Constants::atomic(),
        well: config.well,
        grid_length: config.grid.length(),
        grid_points: config.grid.n_points(),
        grid_spacing: config.grid.spacing(),
        stepping,
        n_steps: stepping.n_steps(),
        options,
        phases: &config.phases,
        frequencies: &config.frequencies,
        spectrum_times: n_times,
        workers: config.user.workers,
    };
    let mut manifest = Manifest::new(verb.name(), manifest_config);
    manifest.wall_seconds = start.elapsed().as_secs_f64();
    out.finish(manifest)
}

/// Parses arguments, runs, and maps the outcome to a process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match load_config(&cli).and_then(|c| run_command(cli.verb, &c)) {
        Ok(path) => {
            println!("{}", path.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
