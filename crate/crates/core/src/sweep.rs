//! Single runs and parameter campaigns over phase and frequency.

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::basis::FreeBasis;
use crate::error::{Error, Result};
use crate::observables::{
    electron_density, number_series, ColumnStats, DensityProfile, NumberSeries, PositiveColumn,
};
use crate::potential::{normalize_phase, WellParams};
use crate::propagator::{evolve_ensemble, EnsembleOptions, StepPolicy, TimeStepping};
use crate::units::C2;

/// Frequencies of the reference campaign, in units of c².
pub const REFERENCE_FREQUENCIES: [f64; 6] = [0.04, 0.3, 0.6, 0.8, 1.0, 2.0];

/// `count` evenly spaced phases covering `[0, 2π]` inclusive.
pub fn phase_grid(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count)
            .map(|i| TAU * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

pub fn reference_frequencies() -> Vec<f64> {
    REFERENCE_FREQUENCIES.iter().map(|w| w * C2).collect()
}

/// Output of one ensemble simulation.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub params: WellParams,
    pub stepping: TimeStepping,
    pub series: NumberSeries,
    /// Electron density at the final snapshot, when requested.
    pub density: Option<DensityProfile>,
    pub wall_seconds: f64,
}

impl Simulation {
    pub fn final_number(&self) -> f64 {
        self.series.final_number()
    }
}

/// Evolves the Dirac sea once and reduces it to `N(t)`.
pub fn simulate(
    basis: &FreeBasis,
    params: &WellParams,
    stepping: &TimeStepping,
    options: &EnsembleOptions,
    with_density: bool,
) -> Result<Simulation> {
    let start = Instant::now();
    let last = stepping.snapshot_steps().len() - 1;
    let run = evolve_ensemble(basis, params, stepping, options, |snap| {
        let stats = ColumnStats::observe(snap);
        let coeffs = (with_density && snap.index == last).then(|| snap.positive.to_vec());
        (stats, coeffs)
    })?;
    let stats_run = crate::propagator::EnsembleRun {
        times: run.times.clone(),
        columns: run
            .columns
            .iter()
            .map(|c| crate::propagator::ColumnRecord {
                label: c.label,
                snapshots: c.snapshots.iter().map(|s| s.0).collect(),
            })
            .collect(),
    };
    let series = number_series(&stats_run);
    if series.samples.iter().any(|s| !s.1.is_finite()) {
        return Err(Error::Numeric("non-finite pair number".into()));
    }
    let density = if with_density {
        let columns: Vec<PositiveColumn> = run
            .columns
            .into_iter()
            .map(|mut c| PositiveColumn {
                label: c.label,
                coeffs: c.snapshots[last].1.take().unwrap_or_default(),
            })
            .collect();
        Some(electron_density(stepping.t_final, &columns, basis)?)
    } else {
        None
    };
    Ok(Simulation {
        params: *params,
        stepping: *stepping,
        series,
        density,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Final pair number at one `(ω0, φ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub omega0: f64,
    pub phi: f64,
    pub final_number: f64,
    #[serde(skip)]
    pub series: Option<NumberSeries>,
}

/// One full simulation per phase, results in input order. Phases that
/// coincide modulo 2π are simulated once.
pub fn phase_sweep(
    basis: &FreeBasis,
    base: &WellParams,
    phases: &[f64],
    policy: &StepPolicy,
    options: &EnsembleOptions,
) -> Result<Vec<SweepPoint>> {
    if phases.is_empty() {
        return Err(Error::config("phases", "must not be empty"));
    }
    for &phi in phases {
        if !(0.0..=TAU).contains(&phi) {
            return Err(Error::config("phases", format!("{phi} outside [0, 2π]")));
        }
    }
    let mut distinct: Vec<f64> = Vec::new();
    for &phi in phases {
        let p = normalize_phase(phi);
        if !distinct.contains(&p) {
            distinct.push(p);
        }
    }
    let run_one = |phi: f64| -> Result<(f64, NumberSeries)> {
        let params = base.with_phi(phi);
        let stepping = policy.stepping_for(&params);
        let sim = simulate(basis, &params, &stepping, options, false).map_err(|e| Error::AtPhase {
            phi,
            source: Box::new(e),
        })?;
        Ok((phi, sim.series))
    };
    let results: Vec<Result<(f64, NumberSeries)>> = map_jobs(&distinct, options, run_one);
    let mut done = Vec::with_capacity(results.len());
    for r in results {
        done.push(r?);
    }
    Ok(phases
        .iter()
        .map(|&phi| {
            let p = normalize_phase(phi);
            let (_, series) = done.iter().find(|(d, _)| *d == p).expect("simulated");
            SweepPoint {
                omega0: base.omega0,
                phi,
                final_number: series.final_number(),
                series: Some(series.clone()),
            }
        })
        .collect())
}

fn map_jobs<T, U, F>(items: &[T], options: &EnsembleOptions, f: F) -> Vec<U>
where
    T: Sync + Copy,
    U: Send,
    F: Fn(T) -> U + Sync,
{
    match options.execution {
        #[cfg(feature = "parallel")]
        crate::propagator::Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(|&x| f(x)).collect()
        }
        _ => items.iter().map(|&x| f(x)).collect(),
    }
}

/// Extremes of the phase scan at one frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencySummary {
    pub omega0: f64,
    pub n_max: f64,
    pub phi_at_max: f64,
    pub n_min: f64,
    pub phi_at_min: f64,
    pub ratio: f64,
}

/// Extremes over sampled points; ties go to the smaller phase.
pub fn summarize(points: &[SweepPoint]) -> Result<FrequencySummary> {
    let first = points
        .first()
        .ok_or_else(|| Error::config("phases", "must not be empty"))?;
    let mut sorted: Vec<&SweepPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.phi.total_cmp(&b.phi));
    let mut max = sorted[0];
    let mut min = sorted[0];
    for p in &sorted[1..] {
        if p.final_number > max.final_number {
            max = p;
        }
        if p.final_number < min.final_number {
            min = p;
        }
    }
    let ratio = if min.final_number > 0.0 {
        max.final_number / min.final_number
    } else if max.final_number > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };
    Ok(FrequencySummary {
        omega0: first.omega0,
        n_max: max.final_number,
        phi_at_max: max.phi,
        n_min: min.final_number,
        phi_at_min: min.phi,
        ratio,
    })
}

/// Phase sweeps at several frequencies; every point of every sweep.
pub fn frequency_grid(
    basis: &FreeBasis,
    base: &WellParams,
    frequencies: &[f64],
    phases: &[f64],
    policy: &StepPolicy,
    options: &EnsembleOptions,
) -> Result<Vec<Vec<SweepPoint>>> {
    if frequencies.is_empty() {
        return Err(Error::config("frequencies", "must not be empty"));
    }
    frequencies
        .iter()
        .map(|&w| {
            let params = base.with_omega0(w).validated()?;
            phase_sweep(basis, &params, phases, policy, options)
        })
        .collect()
}

pub fn frequency_table(
    basis: &FreeBasis,
    base: &WellParams,
    frequencies: &[f64],
    phases: &[f64],
    policy: &StepPolicy,
    options: &EnsembleOptions,
) -> Result<Vec<FrequencySummary>> {
    frequency_grid(basis, base, frequencies, phases, policy, options)?
        .iter()
        .map(|pts| summarize(pts))
        .collect()
}

/// Argmax phase at one frequency together with its mirror `2π − φ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalPhase {
    pub omega0: f64,
    pub phi_low: f64,
    pub phi_high: f64,
}

pub fn optimal_phase(points: &[SweepPoint]) -> Result<OptimalPhase> {
    let s = summarize(points)?;
    let low = s.phi_at_max.min(TAU - s.phi_at_max);
    Ok(OptimalPhase {
        omega0: s.omega0,
        phi_low: low,
        phi_high: TAU - low,
    })
}

/// Largest spacing between adjacent sampled phases accepted for argmax
/// extraction.
pub const MAX_PHASE_STEP: f64 = 0.1 * PI;

pub fn optimal_phase_curve(
    basis: &FreeBasis,
    base: &WellParams,
    frequencies: &[f64],
    phases: &[f64],
    policy: &StepPolicy,
    options: &EnsembleOptions,
) -> Result<Vec<OptimalPhase>> {
    let mut sorted = phases.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[1] - w[0] > MAX_PHASE_STEP * (1.0 + 1e-9)) {
        return Err(Error::config(
            "phases",
            "adjacent samples must differ by at most 0.1π",
        ));
    }
    frequency_grid(basis, base, frequencies, phases, policy, options)?
        .iter()
        .map(|pts| optimal_phase(pts))
        .collect()
}

/// `max |N(φ) − N(2π − φ)| / max N` over sampled mirror pairs.
pub fn mirror_asymmetry(points: &[SweepPoint]) -> f64 {
    let peak = points.iter().map(|p| p.final_number).fold(0.0, f64::max);
    if peak == 0.0 {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    for p in points {
        let mirror = TAU - p.phi;
        if let Some(q) = points.iter().find(|q| (q.phi - mirror).abs() < 1e-9) {
            worst = worst.max((p.final_number - q.final_number).abs());
        }
    }
    worst / peak
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn point(phi: f64, n: f64) -> SweepPoint {
        SweepPoint {
            omega0: 1.0,
            phi,
            final_number: n,
            series: None,
        }
    }

    #[test]
    fn phase_grid_covers_closed_period() {
        let g = phase_grid(21);
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 0.0);
        assert_relative_eq!(g[10], PI, max_relative = 1e-15);
        assert_relative_eq!(g[20], TAU);
        assert_relative_eq!(g[1], 0.1 * PI, max_relative = 1e-14);
        assert_eq!(phase_grid(1), vec![0.0]);
    }

    #[test]
    fn summary_of_single_point() {
        let s = summarize(&[point(0.3, 2.0)]).unwrap();
        assert_eq!(s.n_max, s.n_min);
        assert_eq!(s.ratio, 1.0);
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn summary_and_ties() {
        let pts = vec![point(PI, 0.5), point(0.5 * PI, 4.0), point(0.0, 2.0), point(1.5 * PI, 4.0)];
        let s = summarize(&pts).unwrap();
        assert_eq!(s.phi_at_max, 0.5 * PI);
        assert_eq!(s.phi_at_min, PI);
        assert_relative_eq!(s.ratio, 8.0);
        let o = optimal_phase(&pts).unwrap();
        assert_eq!(o.phi_low, 0.5 * PI);
        assert_relative_eq!(o.phi_high, 1.5 * PI);
    }

    #[test]
    fn optimal_phase_folds_to_lower_branch() {
        let pts = vec![point(0.0, 1.0), point(1.8 * PI, 3.0), point(PI, 0.1)];
        let o = optimal_phase(&pts).unwrap();
        assert_relative_eq!(o.phi_low, 0.2 * PI, max_relative = 1e-12);
        assert_relative_eq!(o.phi_high, 1.8 * PI, max_relative = 1e-12);
    }

    #[test]
    fn asymmetry_measure() {
        let pts = vec![point(0.0, 1.0), point(0.5 * PI, 0.8), point(1.5 * PI, 0.82), point(TAU, 1.0)];
        assert_relative_eq!(mirror_asymmetry(&pts), 0.02, max_relative = 1e-9);
    }
}
