//! Created-pair observables built from evolved amplitudes.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{Branch, FreeBasis};
use crate::error::{Error, Result};
use crate::propagator::{ColumnLabel, ColumnSnapshot, EnsembleRun, Multiplicity};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

fn norm_sqr_sum(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).collect::<CompensatedSum>().value()
}

/// Dense block `U_{row,col}` of the evolution operator in the free basis:
/// rows are final-branch modes, columns initial-branch modes (both ascending).
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeMatrix {
    pub t: f64,
    rows: usize,
    cols: usize,
    /// Column-major entries.
    entries: Vec<Complex64>,
}

impl AmplitudeMatrix {
    pub fn zeros(t: f64, rows: usize, cols: usize) -> Self {
        AmplitudeMatrix {
            t,
            rows,
            cols,
            entries: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_columns(t: f64, columns: Vec<Vec<Complex64>>) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        let cols = columns.len();
        let mut entries = Vec::with_capacity(rows * cols);
        for c in columns {
            if c.len() != rows {
                return Err(Error::Dimension {
                    expected: rows,
                    got: c.len(),
                });
            }
            entries.extend(c);
        }
        Ok(AmplitudeMatrix {
            t,
            rows,
            cols,
            entries,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[col * self.rows + row]
    }

    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.entries[col * self.rows + row] = value;
    }

    pub fn column(&self, col: usize) -> &[Complex64] {
        &self.entries[col * self.rows..(col + 1) * self.rows]
    }

    pub fn column_norms(&self) -> Vec<f64> {
        (0..self.cols).map(|c| norm_sqr_sum(self.column(c))).collect()
    }

    /// `Σ |U|²` in column-major order with compensated accumulation.
    pub fn total_weight(&self) -> f64 {
        norm_sqr_sum(&self.entries)
    }
}

/// `N = Σ_{p,n} |U_pn|²`.
pub fn electron_number(matrix: &AmplitudeMatrix) -> f64 {
    matrix.total_weight()
}

/// `|Σ|U_pn|² - Σ|U_np|²|`: created electrons minus created positrons.
pub fn pair_symmetry_defect(upn: &AmplitudeMatrix, unp: &AmplitudeMatrix) -> f64 {
    (upn.total_weight() - unp.total_weight()).abs()
}

/// Per-column norms recorded at each snapshot; the cheap observer behind
/// `N(t)` and the unitarity checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    /// `Σ_p |U_{p,col}|²`.
    pub positive: f64,
    /// `Σ_n |U_{n,col}|²`.
    pub negative: f64,
}

impl ColumnStats {
    pub fn observe(snap: &ColumnSnapshot<'_>) -> Self {
        ColumnStats {
            positive: norm_sqr_sum(snap.positive),
            negative: norm_sqr_sum(snap.negative),
        }
    }

    pub fn total(&self) -> f64 {
        self.positive + self.negative
    }
}

/// Weight carried by the opposite branch to the column's initial branch.
fn transferred(label: &ColumnLabel, stats: &ColumnStats) -> f64 {
    match label.initial.branch {
        Branch::Negative => stats.positive,
        Branch::Positive => stats.negative,
    }
}

/// Ordered `(t, N)` samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumberSeries {
    pub samples: Vec<(f64, f64)>,
}

impl NumberSeries {
    pub fn final_number(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.1)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// First sample time at which `N ≥ fraction · N_final`.
    pub fn time_reaching(&self, fraction: f64) -> Option<f64> {
        let target = fraction * self.final_number();
        self.samples.iter().find(|s| s.1 >= target).map(|s| s.0)
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().map(|s| s.1).fold(0.0, f64::max)
    }
}

/// Created-particle count per snapshot from a sector run: electrons when the
/// sector is the Dirac sea, positrons when it is the positive branch.
pub fn number_series(run: &EnsembleRun<ColumnStats>) -> NumberSeries {
    let samples = run
        .times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let n = run
                .at(i)
                .map(|(label, stats)| label.weight() * transferred(label, stats))
                .collect::<CompensatedSum>()
                .value();
            (t, n)
        })
        .collect();
    NumberSeries { samples }
}

/// Electron probability density over the lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub t: f64,
    pub values: Vec<f64>,
}

impl DensityProfile {
    /// `Σ_j ρ_j dz`.
    pub fn integral(&self, spacing: f64) -> f64 {
        self.values.iter().copied().collect::<CompensatedSum>().value() * spacing
    }
}

/// Positive-branch amplitudes of one evolved sea column.
#[derive(Debug, Clone, PartialEq)]
pub struct PositiveColumn {
    pub label: ColumnLabel,
    pub coeffs: Vec<Complex64>,
}

/// `ρ(z) = Σ_n |Σ_p U_pn W_p(z)|²`. Parity-pair columns contribute their
/// mirror image as well.
pub fn electron_density(t: f64, columns: &[PositiveColumn], basis: &FreeBasis) -> Result<DensityProfile> {
    let n = basis.grid().n_points();
    let mut acc = vec![CompensatedSum::new(); n];
    for col in columns {
        if col.coeffs.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: col.coeffs.len(),
            });
        }
        let field = basis.synthesize(&col.coeffs, Branch::Positive)?;
        let rho: Vec<f64> = field
            .upper
            .iter()
            .zip(&field.lower)
            .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
            .collect();
        for (j, slot) in acc.iter_mut().enumerate() {
            slot.add(rho[j]);
            if col.label.multiplicity == Multiplicity::ParityPair {
                slot.add(rho[(n - j) % n]);
            }
        }
    }
    Ok(DensityProfile {
        t,
        values: acc.iter().map(|s| s.value().max(0.0)).collect(),
    })
}
