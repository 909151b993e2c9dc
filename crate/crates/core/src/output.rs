//! CSV tables and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::bound_states::{DiveEvent, SpectrumTrajectory};
use crate::error::{Error, Result};
use crate::observables::{DensityProfile, NumberSeries};
use crate::sweep::{FrequencySummary, OptimalPhase, SweepPoint};

/// A CSV table held in memory: header plus formatted rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
    precision: usize,
}

impl Table {
    pub fn new(header: &[&'static str], precision: usize) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
            precision,
        }
    }

    pub fn push(&mut self, cells: &[Cell]) {
        assert_eq!(cells.len(), self.header.len(), "row width");
        let p = self.precision;
        self.rows.push(cells.iter().map(|c| c.format(p)).collect());
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        let bytes = w.into_inner().expect("in-memory flush");
        String::from_utf8(bytes).expect("ASCII cells")
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        write_file(path, self.render().as_bytes())
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Cell {
    Real(f64),
    Int(usize),
}

impl Cell {
    fn format(self, precision: usize) -> String {
        match self {
            Cell::Real(x) if x.is_infinite() => if x > 0.0 { "inf" } else { "-inf" }.to_string(),
            Cell::Real(x) => format!("{x:.precision$}"),
            Cell::Int(i) => i.to_string(),
        }
    }
}

use Cell::{Int, Real};

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes)?;
    Ok(())
}

pub fn number_series_table(series: &NumberSeries, precision: usize) -> Table {
    let mut t = Table::new(&["t", "N"], precision);
    for &(time, n) in &series.samples {
        t.push(&[Real(time), Real(n)]);
    }
    t
}

/// Gap levels at every sampled time, one row per level.
pub fn spectrum_table(traj: &SpectrumTrajectory, precision: usize) -> Table {
    let mut t = Table::new(&["t", "level_rank", "E"], precision);
    for (time, levels) in traj.times.iter().zip(&traj.levels) {
        for l in levels {
            t.push(&[Real(*time), Int(l.rank), Real(l.energy)]);
        }
    }
    t
}

pub fn dive_events_table(events: &[DiveEvent], precision: usize) -> Table {
    let mut t = Table::new(&["level_rank", "t_enter", "t_exit"], precision);
    for e in events {
        t.push(&[Int(e.level_rank), Real(e.t_enter), Real(e.t_exit)]);
    }
    t
}

pub fn phase_sweep_table(points: &[SweepPoint], precision: usize) -> Table {
    let mut t = Table::new(&["omega0", "phi", "N_final"], precision);
    for p in points {
        t.push(&[Real(p.omega0), Real(p.phi), Real(p.final_number)]);
    }
    t
}

pub fn frequency_summary_table(rows: &[FrequencySummary], precision: usize) -> Table {
    let mut t = Table::new(
        &["omega0", "N_max", "phi_at_max", "N_min", "phi_at_min", "ratio"],
        precision,
    );
    for r in rows {
        t.push(&[
            Real(r.omega0),
            Real(r.n_max),
            Real(r.phi_at_max),
            Real(r.n_min),
            Real(r.phi_at_min),
            Real(r.ratio),
        ]);
    }
    t
}

pub fn optimal_phase_table(rows: &[OptimalPhase], precision: usize) -> Table {
    let mut t = Table::new(&["omega0", "phi_opt_low", "phi_opt_high"], precision);
    for r in rows {
        t.push(&[Real(r.omega0), Real(r.phi_low), Real(r.phi_high)]);
    }
    t
}

pub fn density_table(profile: &DensityProfile, positions: &[f64], precision: usize) -> Table {
    let mut t = Table::new(&["z", "rho"], precision);
    for (z, rho) in positions.iter().zip(&profile.values) {
        t.push(&[Real(*z), Real(*rho)]);
    }
    t
}

/// Everything needed to re-run an output directory.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest<C: Serialize> {
    pub verb: String,
    pub version: &'static str,
    pub wall_seconds: f64,
    pub config: C,
    pub files: Vec<String>,
}

impl<C: Serialize> Manifest<C> {
    pub fn new(verb: &str, config: C) -> Self {
        Manifest {
            verb: verb.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            wall_seconds: 0.0,
            config,
            files: Vec::new(),
        }
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Resource(format!("manifest: {e}")))?;
        text.push('\n');
        write_file(path, text.as_bytes())
    }
}

/// Output directory that remembers which files were written.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)
            .map_err(|e| Error::Resource(format!("cannot create {}: {e}", root.display())))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, table: &Table) -> Result<()> {
        table.write_to(&self.root.join(name))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn finish<C: Serialize>(self, mut manifest: Manifest<C>) -> Result<PathBuf> {
        manifest.files = self.written;
        let path = self.root.join("manifest.json");
        manifest.write_to(&path)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_samples_give_three_lines() {
        let s = NumberSeries {
            samples: vec![(0.0, 0.0), (1.0e-3, 0.5)],
        };
        let text = number_series_table(&s, 4).render();
        assert_eq!(text, "t,N\n0.0000,0.0000\n0.0010,0.5000\n");
        assert_eq!(text.lines().count(), 3);
        assert!(!text.contains('\r'));
    }

    #[test]
    fn fixed_precision_formatting() {
        let s = NumberSeries {
            samples: vec![(0.0, 0.9721)],
        };
        let text = number_series_table(&s, 3).render();
        assert!(text.ends_with(",0.972\n"), "{text}");
    }

    #[test]
    fn headers_match_schema() {
        let first = |t: Table| t.render().lines().next().unwrap().to_string();
        assert_eq!(first(phase_sweep_table(&[], 3)), "omega0,phi,N_final");
        assert_eq!(
            first(frequency_summary_table(&[], 3)),
            "omega0,N_max,phi_at_max,N_min,phi_at_min,ratio"
        );
        assert_eq!(first(optimal_phase_table(&[], 3)), "omega0,phi_opt_low,phi_opt_high");
        assert_eq!(first(dive_events_table(&[], 3)), "level_rank,t_enter,t_exit");
        let traj = SpectrumTrajectory {
            times: vec![],
            levels: vec![],
            dived: vec![],
            dive_events: vec![],
        };
        assert_eq!(first(spectrum_table(&traj, 3)), "t,level_rank,E");
    }

    #[test]
    fn infinite_ratio_is_spelled_out() {
        let row = FrequencySummary {
            omega0: 1.0,
            n_max: 1.0,
            phi_at_max: 0.0,
            n_min: 0.0,
            phi_at_min: 1.0,
            ratio: f64::INFINITY,
        };
        assert!(frequency_summary_table(&[row], 2).render().ends_with(",inf\n"));
    }
}
