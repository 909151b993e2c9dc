//! Instantaneous bound levels of the well.
//!
//! Levels come from the square-well quantization condition
//!
//! ```text
//! c p₂ cot(p₂ D) = E V₀ / (c p₁) − c p₁,
//! p₁ = sqrt(c² − E²/c²),  p₂ = sqrt((E + V₀)²/c² − c²)
//! ```
//!
//! which covers both parity classes at once. Roots are confined to the cells
//! `(m−1)π < p₂D < mπ`: a root can only leave its cell through `E = ±c²`,
//! so the cell index `m` is a stable label for a level as the well moves.
//! Level `m` sits in the negative continuum exactly when `p₂(−c²)·D > mπ`.
//!
//! [`diag_oracle`] cross-checks the condition by diagonalizing the lattice
//! Hamiltonian of the actual smooth-edged well.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{sauter, WellParams};
use crate::units::{Grid, C, C2};

/// Probes per singularity cell in the root scan.
pub const PROBES_PER_CELL: usize = 64;
/// Absolute bisection tolerance on energies, in units of c².
pub const ENERGY_TOLERANCE: f64 = 1e-9;
/// Largest lattice accepted by the dense oracle.
pub const ORACLE_MAX_POINTS: usize = 1024;

/// Instantaneous depth and full width of the well.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelCondition {
    pub v0_now: f64,
    pub d_now: f64,
}

/// Value of the level condition at an energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Residual {
    Value(f64),
    /// `p₂ D` sits on a multiple of π.
    Singular,
}

impl Residual {
    pub fn value(self) -> Option<f64> {
        match self {
            Residual::Value(v) => Some(v),
            Residual::Singular => None,
        }
    }
}

/// A root of the level condition, labelled by its cot cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundLevel {
    /// Cell index `m ≥ 1`; 1 is the deepest level.
    pub rank: usize,
    pub energy: f64,
}

impl LevelCondition {
    pub fn new(v0_now: f64, d_now: f64) -> Result<Self> {
        if !(v0_now >= 0.0) {
            return Err(Error::config("v0_now", "must be ≥ 0"));
        }
        if !(d_now > 0.0) {
            return Err(Error::config("d_now", "must be > 0"));
        }
        Ok(LevelCondition { v0_now, d_now })
    }

    pub fn at(params: &WellParams, t: f64) -> Self {
        LevelCondition {
            v0_now: params.depth_at(t),
            d_now: params.width_at(t),
        }
    }

    /// Open interval `(max(−c², c² − V0), c²)` where both momenta are real.
    pub fn admissible(&self) -> Option<(f64, f64)> {
        let lo = (-C2).max(C2 - self.v0_now);
        (lo < C2).then_some((lo, C2))
    }

    pub fn p1(&self, e: f64) -> f64 {
        (C2 - e * e / C2).max(0.0).sqrt()
    }

    pub fn p2(&self, e: f64) -> f64 {
        let s = e + self.v0_now;
        (s * s / C2 - C2).max(0.0).sqrt()
    }

    /// Energy at which `p₂ D = mπ`.
    fn cell_edge(&self, m: usize) -> f64 {
        let q = m as f64 * PI / self.d_now;
        C * (C2 + q * q).sqrt() - self.v0_now
    }

    pub fn residual(&self, e: f64) -> Result<Residual> {
        let Some((lo, hi)) = self.admissible() else {
            return Err(Error::Domain { energy: e, lo: C2, hi: C2 });
        };
        if !(e > lo && e < hi) {
            return Err(Error::Domain { energy: e, lo, hi });
        }
        Ok(self.residual_unchecked(e))
    }

    fn residual_unchecked(&self, e: f64) -> Residual {
        let p1 = self.p1(e);
        let p2 = self.p2(e);
        let x = p2 * self.d_now;
        let s = x.sin();
        if s.abs() < f64::EPSILON && p2 > 0.0 {
            return Residual::Singular;
        }
        let lhs = if p2 == 0.0 {
            C / self.d_now
        } else {
            C * p2 * x.cos() / s
        };
        Residual::Value(lhs - (e * self.v0_now / (C * p1) - C * p1))
    }

    /// Number of levels already inside the negative continuum:
    /// `#{m ≥ 1 : mπ < p₂(−c²) D}`.
    pub fn dived_count(&self) -> usize {
        if self.v0_now <= 2.0 * C2 {
            return 0;
        }
        let x = self.p2(-C2) * self.d_now / PI;
        let k = x.floor() as usize;
        if (k as f64) == x {
            k.saturating_sub(1)
        } else {
            k
        }
    }

    /// All roots in the admissible interval, ascending.
    pub fn levels(&self) -> Vec<BoundLevel> {
        let Some((lo, hi)) = self.admissible() else {
            return Vec::new();
        };
        let tol = ENERGY_TOLERANCE * C2;
        let mut out: Vec<BoundLevel> = Vec::new();
        let mut m = 1usize;
        loop {
            let left = if m == 1 {
                C2 - self.v0_now
            } else {
                self.cell_edge(m - 1)
            };
            if left >= hi {
                break;
            }
            let right = self.cell_edge(m);
            let a = left.max(lo);
            let b = right.min(hi);
            if b > a {
                for e in self.roots_in_cell(a, b, tol) {
                    if out.last().is_none_or(|l| (e - l.energy).abs() > 1e-8 * C2) {
                        out.push(BoundLevel { rank: m, energy: e });
                    }
                }
            }
            m += 1;
        }
        out
    }

    /// Sign changes of the residual on `(a, b)`. The limits are known: the
    /// residual tends to +∞ (or a positive constant at p₂ = 0) at the left
    /// end of every cell and to −∞ at the right end.
    fn roots_in_cell(&self, a: f64, b: f64, tol: f64) -> Vec<f64> {
        let eval = |e: f64| match self.residual_unchecked(e) {
            Residual::Value(v) => v,
            Residual::Singular => f64::NAN,
        };
        let mut points = Vec::with_capacity(PROBES_PER_CELL + 2);
        points.push((a, 1.0));
        for i in 0..PROBES_PER_CELL {
            let e = a + (b - a) * (i as f64 + 0.5) / PROBES_PER_CELL as f64;
            let v = eval(e);
            if v.is_finite() {
                points.push((e, v));
            }
        }
        points.push((b, -1.0));

        let mut roots = Vec::new();
        for w in points.windows(2) {
            let ((mut x0, f0), (mut x1, f1)) = (w[0], w[1]);
            if f0 == 0.0 {
                roots.push(x0);
                continue;
            }
            if f0.signum() == f1.signum() {
                continue;
            }
            let s0 = f0.signum();
            while x1 - x0 > tol {
                let mid = 0.5 * (x0 + x1);
                let fm = eval(mid);
                if !fm.is_finite() {
                    break;
                }
                if fm.signum() == s0 {
                    x0 = mid;
                } else {
                    x1 = mid;
                }
            }
            roots.push(0.5 * (x0 + x1));
        }
        roots
    }
}

/// Evaluates the level condition at energy `e`.
pub fn level_residual(e: f64, cond: &LevelCondition) -> Result<Residual> {
    cond.residual(e)
}

/// Sorted bound energies of the instantaneous well.
pub fn bound_levels(cond: &LevelCondition) -> Vec<f64> {
    cond.levels().into_iter().map(|l| l.energy).collect()
}

/// A span during which level `level_rank` sits in the negative continuum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiveEvent {
    pub level_rank: usize,
    pub t_enter: f64,
    pub t_exit: f64,
    /// The level was already dived at the first sampled time.
    pub open_start: bool,
    /// The level was still dived at the last sampled time.
    pub open_end: bool,
}

impl DiveEvent {
    pub fn duration(&self) -> f64 {
        self.t_exit - self.t_enter
    }
}

/// Level curves over a time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTrajectory {
    pub times: Vec<f64>,
    /// Gap levels at each time, ascending energy.
    pub levels: Vec<Vec<BoundLevel>>,
    /// Dived-level count at each time.
    pub dived: Vec<usize>,
    pub dive_events: Vec<DiveEvent>,
}

impl SpectrumTrajectory {
    /// Number of distinct level curves seen in the window, counting levels
    /// while they are in the gap and while they are dived.
    pub fn distinct_levels(&self) -> usize {
        let mut ranks: Vec<usize> = self
            .levels
            .iter()
            .flat_map(|ls| ls.iter().map(|l| l.rank))
            .chain(self.dive_events.iter().map(|d| d.level_rank))
            .collect();
        ranks.sort_unstable();
        ranks.dedup();
        ranks.len()
    }

    /// Largest number of levels present at one instant (gap plus dived).
    pub fn max_simultaneous_levels(&self) -> usize {
        self.levels
            .iter()
            .zip(&self.dived)
            .map(|(l, d)| l.len() + d)
            .max()
            .unwrap_or(0)
    }

    pub fn max_gap_levels(&self) -> usize {
        self.levels.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Earliest entry to latest exit over all dive events.
    pub fn dive_interval(&self) -> Option<f64> {
        let enter = self.dive_events.iter().map(|d| d.t_enter).reduce(f64::min)?;
        let exit = self.dive_events.iter().map(|d| d.t_exit).reduce(f64::max)?;
        Some(exit - enter)
    }
}

/// `p₂(−c², t) D(t) − mπ`; positive while level `m` is dived.
fn dive_margin(params: &WellParams, t: f64, m: usize) -> f64 {
    let cond = LevelCondition::at(params, t);
    let over = cond.v0_now - 2.0 * C2;
    if over <= 0.0 {
        // Continuous extension: negative below the supercritical threshold.
        return over / C2 - m as f64 * PI;
    }
    cond.p2(-C2) * cond.d_now - m as f64 * PI
}

/// Time resolution of dive-boundary bisection (a.u.).
pub const DIVE_TIME_TOLERANCE: f64 = 1e-9;

fn bisect_time(params: &WellParams, m: usize, mut a: f64, mut b: f64) -> f64 {
    let sa = dive_margin(params, a, m) > 0.0;
    while b - a > DIVE_TIME_TOLERANCE {
        let mid = 0.5 * (a + b);
        if (dive_margin(params, mid, m) > 0.0) == sa {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Bound levels at each time plus the dive events of every level.
pub fn spectrum_trajectory(params: &WellParams, times: &[f64]) -> Result<SpectrumTrajectory> {
    if times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::config("times", "must be strictly ascending"));
    }
    let conds: Vec<LevelCondition> = times.iter().map(|&t| LevelCondition::at(params, t)).collect();
    let levels: Vec<Vec<BoundLevel>> = conds.iter().map(LevelCondition::levels).collect();
    let dived: Vec<usize> = conds.iter().map(LevelCondition::dived_count).collect();

    let max_rank = dived.iter().copied().max().unwrap_or(0);
    let mut dive_events = Vec::new();
    for m in 1..=max_rank {
        let mut inside = dived[0] >= m;
        let mut enter = inside.then_some(times[0]);
        let mut open_start = inside;
        for i in 1..times.len() {
            let now = dived[i] >= m;
            if now == inside {
                continue;
            }
            let t = bisect_time(params, m, times[i - 1], times[i]);
            if now {
                enter = Some(t);
            } else if let Some(t_enter) = enter.take() {
                dive_events.push(DiveEvent {
                    level_rank: m,
                    t_enter,
                    t_exit: t,
                    open_start,
                    open_end: false,
                });
                open_start = false;
            }
            inside = now;
        }
        if let Some(t_enter) = enter {
            dive_events.push(DiveEvent {
                level_rank: m,
                t_enter,
                t_exit: *times.last().unwrap(),
                open_start,
                open_end: true,
            });
        }
    }
    dive_events.sort_by(|a, b| a.t_enter.total_cmp(&b.t_enter).then(a.level_rank.cmp(&b.level_rank)));
    Ok(SpectrumTrajectory {
        times: times.to_vec(),
        levels,
        dived,
        dive_events,
    })
}

/// Uniform sampling of `[0, t_final]` with `samples` points.
pub fn uniform_times(t_final: f64, samples: usize) -> Vec<f64> {
    let n = samples.max(2);
    (0..n).map(|i| t_final * i as f64 / (n - 1) as f64).collect()
}

/// Dense lattice Hamiltonian `[[c² + V, cP], [cP, −c² + V]]` in the position
/// basis, with `P` the spectral derivative `-i d/dz` built directly from the
/// plane-wave sum (no FFT).
pub fn dense_hamiltonian(grid: &Grid, potential: &[f64]) -> Result<DMatrix<Complex64>> {
    let n = grid.n_points();
    if potential.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: potential.len(),
        });
    }
    // P_{jl} = (1/n) Σ_m k_m exp(2πi m (j−l)/n) depends on (j−l) mod n.
    let kernel: Vec<Complex64> = (0..n)
        .map(|d| {
            grid.modes()
                .zip(grid.momenta())
                .map(|(m, &k)| {
                    let angle = 2.0 * PI * (m * d as i64).rem_euclid(n as i64) as f64 / n as f64;
                    Complex64::from_polar(k, angle)
                })
                .sum::<Complex64>()
                / n as f64
        })
        .collect();
    let mut h = DMatrix::<Complex64>::zeros(2 * n, 2 * n);
    for j in 0..n {
        h[(j, j)] = Complex64::new(C2 + potential[j], 0.0);
        h[(n + j, n + j)] = Complex64::new(-C2 + potential[j], 0.0);
        for l in 0..n {
            let p = kernel[(j + n - l) % n] * C;
            h[(j, n + l)] = p;
            h[(n + j, l)] = p;
        }
    }
    Ok(h)
}

/// A gap eigenvalue of the lattice Hamiltonian with its parity
/// `⟨ψ| σ₃ ψ(−z) ⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleLevel {
    pub energy: f64,
    pub parity: f64,
}

/// Relative margin excluding the continuum thresholds from the gap filter.
pub const ORACLE_GAP_MARGIN: f64 = 1e-6;

/// Gap eigenvalues of a static Sauter well by dense diagonalization.
pub fn diag_oracle_static(grid: &Grid, depth: f64, width: f64, edge: f64) -> Result<Vec<OracleLevel>> {
    let n = grid.n_points();
    if n > ORACLE_MAX_POINTS {
        return Err(Error::Resource(format!(
            "dense oracle limited to {ORACLE_MAX_POINTS} points, got {n}"
        )));
    }
    let v: Vec<f64> = grid
        .positions()
        .iter()
        .map(|&z| sauter(z, depth, width, edge))
        .collect();
    let h = dense_hamiltonian(grid, &v)?;
    let eig = SymmetricEigen::new(h);
    let mut levels = Vec::new();
    for (i, &e) in eig.eigenvalues.iter().enumerate() {
        if e.abs() >= C2 * (1.0 - ORACLE_GAP_MARGIN) {
            continue;
        }
        let col = eig.eigenvectors.column(i);
        let mut parity = Complex64::new(0.0, 0.0);
        for j in 0..n {
            let mirror = (n - j) % n;
            parity += col[j].conj() * col[mirror] - col[n + j].conj() * col[n + mirror];
        }
        levels.push(OracleLevel {
            energy: e,
            parity: parity.re,
        });
    }
    levels.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    Ok(levels)
}

/// Gap eigenvalues of the well at time `t`, sorted.
pub fn diag_oracle(params: &WellParams, grid: &Grid, t: f64) -> Result<Vec<f64>> {
    Ok(diag_oracle_static(grid, params.depth_at(t), params.width_at(t), params.w)?
        .into_iter()
        .map(|l| l.energy)
        .collect())
}
