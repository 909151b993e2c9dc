//! Split-operator propagation of single states and of whole free-state
//! ensembles.
//!
//! One step of length `h` is the Strang product
//! `K(h/2) · exp(-i V(t + h/2) h) · K(h/2)` where `K(τ) = exp(-i H₀ τ)` is
//! applied exactly per momentum mode. Consecutive kinetic halves are fused
//! between snapshots, so a step costs one inverse and one forward transform
//! per spinor component.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{parity_sign, Branch, BranchLabel, FreeBasis, SpinorField};
use crate::error::{Error, Result};
use crate::potential::WellParams;
use crate::units::{Grid, C, C2};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Accuracy guard on the potential factor: `max V0 · dt`.
pub const MAX_PHASE_PER_STEP: f64 = 0.1;

/// Default end time `50π/c²`.
pub fn default_t_final() -> f64 {
    50.0 * PI / C2
}

/// Step size, end time and observation cadence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeStepping {
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_stride: usize,
}

impl TimeStepping {
    pub fn new(dt: f64, t_final: f64, snapshot_stride: usize) -> Self {
        TimeStepping {
            dt,
            t_final,
            snapshot_stride,
        }
    }

    pub fn validate(&self, params: &WellParams) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::config(
                "t_final",
                format!("must be > 0, got {}", self.t_final),
            ));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::config("snapshot_stride", "must be ≥ 1"));
        }
        if params.v0 * self.dt > MAX_PHASE_PER_STEP * (1.0 + 1e-12) {
            return Err(Error::config(
                "dt",
                format!(
                    "V0·dt = {:.4} exceeds {MAX_PHASE_PER_STEP}",
                    params.v0 * self.dt
                ),
            ));
        }
        Ok(())
    }

    /// Number of steps; the last one may be shorter than `dt`.
    pub fn n_steps(&self) -> usize {
        let ratio = self.t_final / self.dt;
        let n = ratio.round();
        if (ratio - n).abs() <= 1e-9 * ratio.max(1.0) {
            n.max(1.0) as usize
        } else {
            ratio.ceil() as usize
        }
    }

    fn step_length(&self, step: usize) -> f64 {
        let n = self.n_steps();
        if step + 1 < n {
            self.dt
        } else {
            self.t_final - (n - 1) as f64 * self.dt
        }
    }

    /// Step counts at which snapshots are taken, including 0 and the end.
    pub fn snapshot_steps(&self) -> Vec<usize> {
        let n = self.n_steps();
        let mut v: Vec<usize> = (0..n).step_by(self.snapshot_stride).collect();
        v.push(n);
        v
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        let n = self.n_steps();
        self.snapshot_steps()
            .into_iter()
            .map(|s| if s == n { self.t_final } else { s as f64 * self.dt })
            .collect()
    }

    fn is_snapshot(&self, step: usize) -> bool {
        step.is_multiple_of(self.snapshot_stride) || step == self.n_steps()
    }
}

/// How the default step size is derived from the drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPolicy {
    pub steps_per_period: usize,
    /// Explicit step size; bypasses the period rule (still guard-checked).
    pub dt_override: Option<f64>,
    pub t_final: f64,
    pub snapshot_stride: usize,
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy {
            steps_per_period: 8192,
            dt_override: None,
            t_final: default_t_final(),
            snapshot_stride: 32,
        }
    }
}

impl StepPolicy {
    /// `dt = T_drive / steps_per_period`, clipped so that `V0·dt ≤ 0.1`.
    pub fn stepping_for(&self, params: &WellParams) -> TimeStepping {
        let dt = match self.dt_override {
            Some(dt) => dt,
            None => {
                let mut dt = params.period() / self.steps_per_period as f64;
                if params.v0 > 0.0 {
                    dt = dt.min(MAX_PHASE_PER_STEP / params.v0);
                }
                dt
            }
        };
        TimeStepping::new(dt, self.t_final, self.snapshot_stride)
    }
}

/// Exact free propagator `exp(-i H₀ τ)` per mode, stored in FFT slot order
/// as the symmetric 2×2 matrix `[[a, b], [b, d]]`, pre-multiplied by `scale`.
#[derive(Debug, Clone)]
struct KineticFactors {
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    d: Vec<Complex64>,
}

impl KineticFactors {
    fn new(basis: &FreeBasis, tau: f64, scale: f64) -> Self {
        let grid = basis.grid();
        let n = grid.n_points();
        let mut a = vec![ZERO; n];
        let mut b = vec![ZERO; n];
        let mut d = vec![ZERO; n];
        for mode in basis.modes() {
            let q = grid.fft_slot_of(mode.mode_index);
            let eps = mode.energy;
            let (s, c) = (eps * tau).sin_cos();
            let (s, c) = (s * scale, c * scale);
            a[q] = Complex64::new(c, -s * C2 / eps);
            b[q] = Complex64::new(0.0, -s * C * mode.k / eps);
            d[q] = Complex64::new(c, s * C2 / eps);
        }
        KineticFactors { a, b, d }
    }

    /// Applies to a buffer of `[upper(n), lower(n)]` blocks.
    fn apply(&self, buf: &mut [Complex64]) {
        let n = self.a.len();
        for block in buf.chunks_exact_mut(2 * n) {
            let (up, lo) = block.split_at_mut(n);
            for q in 0..n {
                let (u, l) = (up[q], lo[q]);
                up[q] = self.a[q] * u + self.b[q] * l;
                lo[q] = self.b[q] * u + self.d[q] * l;
            }
        }
    }
}

/// Applies `exp(-i H₀ dt/2)` to a position-space state.
pub fn kinetic_half_step(state: &SpinorField, basis: &FreeBasis, dt: f64) -> Result<SpinorField> {
    state.check_grid(basis.grid())?;
    let n = basis.grid().n_points();
    let spectral = basis.spectral();
    let mut buf = Vec::with_capacity(2 * n);
    buf.extend_from_slice(&state.upper);
    buf.extend_from_slice(&state.lower);
    let mut scratch = vec![ZERO; spectral.scratch_len()];
    spectral.forward(&mut buf, &mut scratch);
    KineticFactors::new(basis, 0.5 * dt, 1.0 / n as f64).apply(&mut buf);
    spectral.inverse(&mut buf, &mut scratch);
    let lower = buf.split_off(n);
    SpinorField::from_components(state.grid().clone(), buf, lower)
}

/// Multiplies both components by `exp(-i V(z_j) dt)`.
pub fn potential_step(state: &SpinorField, potential: &[f64], dt: f64) -> Result<SpinorField> {
    let n = state.grid().n_points();
    if potential.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: potential.len(),
        });
    }
    let mut out = state.clone();
    for ((u, l), &v) in out.upper.iter_mut().zip(out.lower.iter_mut()).zip(potential) {
        let phase = Complex64::from_polar(1.0, -v * dt);
        *u *= phase;
        *l *= phase;
    }
    Ok(out)
}

/// Whether each column of an ensemble stands for one initial state or for the
/// parity pair `{k, -k}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Multiplicity {
    Single,
    ParityPair,
}

impl Multiplicity {
    pub fn weight(self) -> f64 {
        match self {
            Multiplicity::Single => 1.0,
            Multiplicity::ParityPair => 2.0,
        }
    }
}

/// Which initial states are evolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Reduction {
    /// Every basis state of the sector.
    #[default]
    Full,
    /// Modes `m ≥ 0` plus the Nyquist mode; `m > 0` columns stand for `±m`.
    /// Valid when the potential is even in `z`.
    Parity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Execution {
    Sequential,
    /// Data-parallel over state batches; falls back to sequential when the
    /// crate is built without the `parallel` feature.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub reduction: Reduction,
    pub execution: Execution,
    /// States evolved in lockstep per worker (amortizes potential sampling).
    pub batch_size: usize,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions {
            reduction: Reduction::Full,
            execution: Execution::default(),
            batch_size: 32,
        }
    }
}

impl EnsembleOptions {
    pub fn with_reduction(mut self, reduction: Reduction) -> Self {
        self.reduction = reduction;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnLabel {
    pub initial: BranchLabel,
    pub multiplicity: Multiplicity,
}

impl ColumnLabel {
    pub fn weight(&self) -> f64 {
        self.multiplicity.weight()
    }
}

/// What an observer sees for one evolved state at one snapshot: the
/// projections of `U(t)|initial⟩` onto both free branches, ascending modes.
#[derive(Debug)]
pub struct ColumnSnapshot<'a> {
    pub index: usize,
    pub time: f64,
    pub column: ColumnLabel,
    pub positive: &'a [Complex64],
    pub negative: &'a [Complex64],
}

#[derive(Debug, Clone)]
pub struct ColumnRecord<R> {
    pub label: ColumnLabel,
    pub snapshots: Vec<R>,
}

/// Per-column observer output, columns in ascending initial-mode order.
#[derive(Debug, Clone)]
pub struct EnsembleRun<R> {
    pub times: Vec<f64>,
    pub columns: Vec<ColumnRecord<R>>,
}

impl<R> EnsembleRun<R> {
    /// Records of all columns at snapshot `index`, in column order.
    pub fn at(&self, index: usize) -> impl Iterator<Item = (&ColumnLabel, &R)> {
        self.columns
            .iter()
            .map(move |c| (&c.label, &c.snapshots[index]))
    }
}

/// The initial columns for a sector under a reduction, ascending order.
pub fn ensemble_columns(grid: &Grid, branch: Branch, reduction: Reduction) -> Vec<ColumnLabel> {
    match reduction {
        Reduction::Full => grid
            .modes()
            .map(|m| ColumnLabel {
                initial: BranchLabel::new(m, branch),
                multiplicity: Multiplicity::Single,
            })
            .collect(),
        Reduction::Parity => std::iter::once(grid.min_mode())
            .chain(0..grid.max_mode_exclusive())
            .map(|m| ColumnLabel {
                initial: BranchLabel::new(m, branch),
                multiplicity: if m == 0 || m == grid.min_mode() {
                    Multiplicity::Single
                } else {
                    Multiplicity::ParityPair
                },
            })
            .collect(),
    }
}

/// Lockstep evolution of a batch of states held in unnormalized momentum
/// space (raw forward-transform output).
struct BatchEvolver<'a> {
    basis: &'a FreeBasis,
    params: &'a WellParams,
    stepping: &'a TimeStepping,
    kin_half: &'a KineticFactors,
    kin_full: &'a KineticFactors,
    kin_last_half: &'a KineticFactors,
    kin_join_last: &'a KineticFactors,
}

impl BatchEvolver<'_> {
    fn run<R, F>(&self, columns: &[ColumnLabel], observe: &F) -> Result<Vec<ColumnRecord<R>>>
    where
        F: Fn(&ColumnSnapshot<'_>) -> R,
    {
        let grid = self.basis.grid();
        let n = grid.n_points();
        let spectral = self.basis.spectral();
        let mut scratch = vec![ZERO; spectral.scratch_len()];
        let mut buf = Vec::with_capacity(2 * n * columns.len());
        for col in columns {
            let w = self.basis.state(col.initial)?;
            buf.extend_from_slice(&w.upper);
            buf.extend_from_slice(&w.lower);
        }
        spectral.forward(&mut buf, &mut scratch);

        let mut records: Vec<ColumnRecord<R>> = columns
            .iter()
            .map(|&label| ColumnRecord {
                label,
                snapshots: Vec::new(),
            })
            .collect();
        let mut pos = vec![ZERO; n];
        let mut neg = vec![ZERO; n];
        let mut record = |buf: &[Complex64], index: usize, time: f64, records: &mut [ColumnRecord<R>]| {
            for (block, rec) in buf.chunks_exact(2 * n).zip(records.iter_mut()) {
                self.project_block(block, &mut pos, &mut neg);
                let snap = ColumnSnapshot {
                    index,
                    time,
                    column: rec.label,
                    positive: &pos,
                    negative: &neg,
                };
                rec.snapshots.push(observe(&snap));
            }
        };

        let n_steps = self.stepping.n_steps();
        let mut snap_index = 0;
        record(&buf, snap_index, 0.0, &mut records);
        snap_index += 1;

        let mut potential = vec![0.0; n];
        let mut phase = vec![ZERO; n];
        let inv_n = 1.0 / n as f64;
        let first_half = if n_steps == 1 {
            self.kin_last_half
        } else {
            self.kin_half
        };
        first_half.apply(&mut buf);
        for step in 0..n_steps {
            let h = self.stepping.step_length(step);
            let t0 = step as f64 * self.stepping.dt;
            self.params.sample_into(grid, t0 + 0.5 * h, &mut potential);
            for (p, &v) in phase.iter_mut().zip(&potential) {
                *p = Complex64::from_polar(inv_n, -v * h);
            }
            spectral.inverse(&mut buf, &mut scratch);
            for block in buf.chunks_exact_mut(n) {
                for (x, p) in block.iter_mut().zip(&phase) {
                    *x *= p;
                }
            }
            spectral.forward(&mut buf, &mut scratch);

            let end = step + 1;
            let is_last = end == n_steps;
            let next_is_last = end + 1 == n_steps;
            let this_half = if is_last { self.kin_last_half } else { self.kin_half };
            if is_last || self.stepping.is_snapshot(end) {
                this_half.apply(&mut buf);
                let time = if is_last {
                    self.stepping.t_final
                } else {
                    end as f64 * self.stepping.dt
                };
                record(&buf, snap_index, time, &mut records);
                snap_index += 1;
                if !is_last {
                    let next_half = if next_is_last {
                        self.kin_last_half
                    } else {
                        self.kin_half
                    };
                    next_half.apply(&mut buf);
                }
            } else if next_is_last {
                self.kin_join_last.apply(&mut buf);
            } else {
                self.kin_full.apply(&mut buf);
            }
        }
        Ok(records)
    }

    fn project_block(&self, block: &[Complex64], pos: &mut [Complex64], neg: &mut [Complex64]) {
        let grid = self.basis.grid();
        let n = grid.n_points();
        let scale = grid.length().sqrt() / n as f64;
        let (up, lo) = block.split_at(n);
        for (slot, mode) in self.basis.modes().iter().enumerate() {
            let q = grid.fft_slot_of(mode.mode_index);
            let s = scale * parity_sign(mode.mode_index);
            let (u, l) = (up[q] * s, lo[q] * s);
            pos[slot] = u * mode.positive[0] + l * mode.positive[1];
            neg[slot] = u * mode.negative[0] + l * mode.negative[1];
        }
    }
}

/// Precomputed factors for one (basis, stepping) pair.
struct KineticSet {
    half: KineticFactors,
    full: KineticFactors,
    last_half: KineticFactors,
    join_last: KineticFactors,
}

impl KineticSet {
    fn new(basis: &FreeBasis, stepping: &TimeStepping) -> Self {
        let dt = stepping.dt;
        let last = stepping.step_length(stepping.n_steps() - 1);
        KineticSet {
            half: KineticFactors::new(basis, 0.5 * dt, 1.0),
            full: KineticFactors::new(basis, dt, 1.0),
            last_half: KineticFactors::new(basis, 0.5 * last, 1.0),
            join_last: KineticFactors::new(basis, 0.5 * (dt + last), 1.0),
        }
    }

    fn evolver<'a>(
        &'a self,
        basis: &'a FreeBasis,
        params: &'a WellParams,
        stepping: &'a TimeStepping,
    ) -> BatchEvolver<'a> {
        BatchEvolver {
            basis,
            params,
            stepping,
            kin_half: &self.half,
            kin_full: &self.full,
            kin_last_half: &self.last_half,
            kin_join_last: &self.join_last,
        }
    }
}

/// Evolves a normalized state from `t = 0` to `stepping.t_final`.
pub fn evolve(
    state: &SpinorField,
    basis: &FreeBasis,
    params: &WellParams,
    stepping: &TimeStepping,
) -> Result<SpinorField> {
    evolve_from(state, basis, params, stepping, 0.0)
}

/// Evolves from `t_start` over `stepping.t_final` time units (step lattice
/// anchored at `t_start`).
pub fn evolve_from(
    state: &SpinorField,
    basis: &FreeBasis,
    params: &WellParams,
    stepping: &TimeStepping,
    t_start: f64,
) -> Result<SpinorField> {
    stepping.validate(params)?;
    state.check_grid(basis.grid())?;
    let n = basis.grid().n_points();
    let spectral = basis.spectral();
    let set = KineticSet::new(basis, stepping);
    let n_steps = stepping.n_steps();

    let mut buf = Vec::with_capacity(2 * n);
    buf.extend_from_slice(&state.upper);
    buf.extend_from_slice(&state.lower);
    let mut scratch = vec![ZERO; spectral.scratch_len()];
    let mut potential = vec![0.0; n];
    let mut phase = vec![ZERO; n];
    let inv_n = 1.0 / n as f64;

    spectral.forward(&mut buf, &mut scratch);
    if n_steps == 1 {
        set.last_half.apply(&mut buf);
    } else {
        set.half.apply(&mut buf);
    }
    for step in 0..n_steps {
        let h = stepping.step_length(step);
        let t = t_start + step as f64 * stepping.dt + 0.5 * h;
        params.sample_into(basis.grid(), t, &mut potential);
        for (p, &v) in phase.iter_mut().zip(&potential) {
            *p = Complex64::from_polar(inv_n, -v * h);
        }
        spectral.inverse(&mut buf, &mut scratch);
        for block in buf.chunks_exact_mut(n) {
            for (x, p) in block.iter_mut().zip(&phase) {
                *x *= p;
            }
        }
        spectral.forward(&mut buf, &mut scratch);
        let end = step + 1;
        if end == n_steps {
            set.last_half.apply(&mut buf);
        } else if end + 1 == n_steps {
            set.join_last.apply(&mut buf);
        } else {
            set.full.apply(&mut buf);
        }
    }
    spectral.inverse(&mut buf, &mut scratch);
    for x in &mut buf {
        *x *= inv_n;
    }
    let lower = buf.split_off(n);
    SpinorField::from_components(state.grid().clone(), buf, lower)
}

/// Evolves every negative-energy basis state (the Dirac sea) and hands each
/// snapshot of each column to `observe`.
pub fn evolve_ensemble<R, F>(
    basis: &FreeBasis,
    params: &WellParams,
    stepping: &TimeStepping,
    options: &EnsembleOptions,
    observe: F,
) -> Result<EnsembleRun<R>>
where
    R: Send,
    F: Fn(&ColumnSnapshot<'_>) -> R + Sync,
{
    evolve_sector(basis, Branch::Negative, params, stepping, options, observe)
}

/// Like [`evolve_ensemble`] for an arbitrary initial branch.
pub fn evolve_sector<R, F>(
    basis: &FreeBasis,
    branch: Branch,
    params: &WellParams,
    stepping: &TimeStepping,
    options: &EnsembleOptions,
    observe: F,
) -> Result<EnsembleRun<R>>
where
    R: Send,
    F: Fn(&ColumnSnapshot<'_>) -> R + Sync,
{
    stepping.validate(params)?;
    let columns = ensemble_columns(basis.grid(), branch, options.reduction);
    evolve_columns(basis, &columns, params, stepping, options, observe)
}

/// Evolves an explicit list of initial columns.
pub fn evolve_columns<R, F>(
    basis: &FreeBasis,
    columns: &[ColumnLabel],
    params: &WellParams,
    stepping: &TimeStepping,
    options: &EnsembleOptions,
    observe: F,
) -> Result<EnsembleRun<R>>
where
    R: Send,
    F: Fn(&ColumnSnapshot<'_>) -> R + Sync,
{
    stepping.validate(params)?;
    for col in columns {
        basis.grid().check_mode(col.initial.mode_index)?;
    }
    let set = KineticSet::new(basis, stepping);
    let evolver = set.evolver(basis, params, stepping);
    let batch = options.batch_size.max(1);
    let batches: Vec<&[ColumnLabel]> = columns.chunks(batch).collect();

    let results: Vec<Result<Vec<ColumnRecord<R>>>> = match options.execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            batches
                .par_iter()
                .map(|cols| evolver.run(cols, &observe))
                .collect()
        }
        _ => batches
            .iter()
            .map(|cols| evolver.run(cols, &observe))
            .collect(),
    };
    let mut out = Vec::with_capacity(columns.len());
    for r in results {
        out.extend(r?);
    }
    Ok(EnsembleRun {
        times: stepping.snapshot_times(),
        columns: out,
    })
}

/// Shared handle used by callers that evolve many ensembles on one lattice.
pub fn shared_basis(grid: Grid) -> Arc<FreeBasis> {
    Arc::new(FreeBasis::new(Arc::new(grid)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bound_states::dense_hamiltonian;
    use crate::observables::{number_series, ColumnStats};
    use crate::units::LAMBDA_C;
    use nalgebra::{DMatrix, DVector};

    fn toy_grid(n: usize) -> Arc<Grid> {
        Arc::new(Grid::new(0.5, n).unwrap())
    }

    fn free_params() -> WellParams {
        WellParams::new(0.0, 10.0 * LAMBDA_C, 0.3 * LAMBDA_C, 0.04 * C2, 0.0).unwrap()
    }

    fn wavepacket(grid: &Arc<Grid>) -> SpinorField {
        let upper = grid
            .positions()
            .iter()
            .map(|&z| Complex64::from_polar((-(z / 0.05).powi(2)).exp(), 40.0 * z))
            .collect();
        let lower = grid
            .positions()
            .iter()
            .map(|&z| Complex64::new(0.3 * (-(z / 0.04).powi(2)).exp(), 0.0))
            .collect();
        let mut s = SpinorField::from_components(grid.clone(), upper, lower).unwrap();
        s.normalize();
        s
    }

    /// `Π exp(-i H(t_mid) h)` by dense diagonalization, position basis.
    fn dense_evolve(state: &SpinorField, params: &WellParams, stepping: &TimeStepping) -> SpinorField {
        let grid = state.grid();
        let n = grid.n_points();
        let mut v: DVector<Complex64> =
            DVector::from_iterator(2 * n, state.upper.iter().chain(&state.lower).copied());
        for step in 0..stepping.n_steps() {
            let h = stepping.step_length(step);
            let t = step as f64 * stepping.dt + 0.5 * h;
            let ham = dense_hamiltonian(grid, &params.sample(grid, t)).unwrap();
            let eig = ham.symmetric_eigen();
            let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| Complex64::from_polar(1.0, -e * h)));
            let u = &eig.eigenvectors * phases * eig.eigenvectors.adjoint();
            v = u * v;
        }
        let upper = v.rows(0, n).iter().copied().collect();
        let lower = v.rows(n, n).iter().copied().collect();
        SpinorField::from_components(grid.clone(), upper, lower).unwrap()
    }

    #[test]
    fn zero_duration_is_identity() {
        let grid = toy_grid(32);
        let basis = FreeBasis::new(grid.clone());
        let psi = wavepacket(&grid);
        let out = kinetic_half_step(&psi, &basis, 0.0).unwrap();
        assert!(out.distance(&psi) < 1e-13);
        let out = potential_step(&psi, &vec![C2; 32], 0.0).unwrap();
        assert!(out.distance(&psi) < 1e-15);
    }

    #[test]
    fn free_eigenstate_acquires_phase() {
        let grid = toy_grid(32);
        let basis = FreeBasis::new(grid.clone());
        let dt = 1e-5;
        for label in [BranchLabel::new(3, Branch::Positive), BranchLabel::new(-5, Branch::Negative)] {
            let psi = basis.state(label).unwrap();
            let e = basis.energy(label).unwrap();
            let out = kinetic_half_step(&psi, &basis, dt).unwrap();
            let expected = psi.inner(&out);
            let phase = Complex64::from_polar(1.0, -e * dt / 2.0);
            assert!((expected - phase).norm() < 1e-12, "{expected} vs {phase}");

            let stepping = TimeStepping::new(dt, 40.0 * dt, 10);
            let out = evolve(&psi, &basis, &free_params(), &stepping).unwrap();
            let phase = Complex64::from_polar(1.0, -e * 40.0 * dt);
            assert!((psi.inner(&out) - phase).norm() < 1e-11);
        }
    }

    #[test]
    fn potential_step_is_a_pure_phase() {
        let grid = toy_grid(16);
        let psi = wavepacket(&grid);
        let v: Vec<f64> = grid.positions().iter().map(|z| 1e3 * z).collect();
        let out = potential_step(&psi, &v, 1e-4).unwrap();
        for ((a, b), &vj) in psi.upper.iter().zip(&out.upper).zip(&v) {
            let want = a * Complex64::from_polar(1.0, -vj * 1e-4);
            assert!((b - want).norm() < 1e-15);
        }
        assert!(matches!(potential_step(&psi, &[0.0; 3], 1e-4), Err(Error::Dimension { .. })));
    }

    #[test]
    fn evolution_is_unitary() {
        let grid = toy_grid(64);
        let basis = FreeBasis::new(grid.clone());
        let psi = wavepacket(&grid);
        let params = WellParams::reference();
        let stepping = TimeStepping::new(2e-7, 1e-4, 1);
        let out = evolve(&psi, &basis, &params, &stepping).unwrap();
        assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_dense_exponential_oracle() {
        let grid = Arc::new(Grid::new(0.5, 64).unwrap());
        let basis = FreeBasis::new(grid.clone());
        let psi = wavepacket(&grid);
        let params = WellParams::reference().with_phi(0.5 * PI);
        let stepping = TimeStepping::new(1e-6, 50e-6, 1);
        let split = evolve_from(&psi, &basis, &params, &stepping, 0.0).unwrap();
        let dense = dense_evolve(&psi, &params, &stepping);
        let overlap = split.inner(&dense).norm();
        assert!(overlap > 1.0 - 1e-6, "overlap {overlap}");
    }

    #[test]
    fn strang_is_second_order() {
        let grid = toy_grid(64);
        let basis = FreeBasis::new(grid.clone());
        let psi = wavepacket(&grid);
        let params = WellParams::reference().with_omega0(2.0 * C2);
        let t = 5e-5;
        let run = |dt: f64| evolve(&psi, &basis, &params, &TimeStepping::new(dt, t, 1)).unwrap();
        let reference = run(t / 1024.0);
        let e1 = run(t / 32.0).distance(&reference);
        let e2 = run(t / 64.0).distance(&reference);
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "error ratio {ratio}");
    }

    #[test]
    fn time_ordering_splits() {
        let grid = toy_grid(32);
        let basis = FreeBasis::new(grid.clone());
        let psi = wavepacket(&grid);
        let params = WellParams::reference().with_phi(1.0);
        let dt = 1e-6;
        let first = evolve(&psi, &basis, &params, &TimeStepping::new(dt, 30.0 * dt, 1)).unwrap();
        let both = evolve_from(&first, &basis, &params, &TimeStepping::new(dt, 50.0 * dt, 1), 30.0 * dt).unwrap();
        let direct = evolve(&psi, &basis, &params, &TimeStepping::new(dt, 80.0 * dt, 1)).unwrap();
        assert!(both.distance(&direct) < 1e-11);
    }

    #[test]
    fn partial_last_step_reaches_t_final() {
        let s = TimeStepping::new(1.0, 10.5, 4);
        assert_eq!(s.n_steps(), 11);
        assert_eq!(s.snapshot_steps(), vec![0, 4, 8, 11]);
        assert_eq!(*s.snapshot_times().last().unwrap(), 10.5);
        assert!((s.step_length(10) - 0.5).abs() < 1e-12);
        assert_eq!(TimeStepping::new(0.1, 1.0, 1).n_steps(), 10);
    }

    #[test]
    fn step_guard_rejects_coarse_steps() {
        let params = WellParams::reference();
        let dt = 0.11 / params.v0;
        assert!(TimeStepping::new(dt, 1e-3, 1).validate(&params).is_err());
        assert!(TimeStepping::new(0.1 / params.v0, 1e-3, 1).validate(&params).is_ok());
        assert!(TimeStepping::new(1e-7, 1e-3, 0).validate(&params).is_err());
        let s = StepPolicy::default().stepping_for(&params);
        assert!(params.v0 * s.dt <= MAX_PHASE_PER_STEP);
        assert!((s.dt - params.period() / 8192.0).abs() < 1e-18);
    }

    #[test]
    fn ensemble_column_matches_single_state_evolution() {
        let grid = toy_grid(32);
        let basis = FreeBasis::new(grid.clone());
        let params = WellParams::reference().with_phi(0.7);
        let label = BranchLabel::new(-3, Branch::Negative);
        for n_steps in [1usize, 7] {
            let stepping = TimeStepping::new(1e-6, n_steps as f64 * 1e-6, 3);
            let cols = [ColumnLabel { initial: label, multiplicity: Multiplicity::Single }];
            let run = evolve_columns(&basis, &cols, &params, &stepping, &EnsembleOptions::default(), |s| {
                (s.positive.to_vec(), s.negative.to_vec())
            })
            .unwrap();
            let direct = evolve(&basis.state(label).unwrap(), &basis, &params, &stepping).unwrap();
            let (pos, neg) = basis.project_both(&direct).unwrap();
            let (rp, rn) = run.columns[0].snapshots.last().unwrap();
            for i in 0..32 {
                assert!((rp[i] - pos[i]).norm() < 1e-12);
                assert!((rn[i] - neg[i]).norm() < 1e-12);
            }
            assert_eq!(run.times.len(), stepping.snapshot_steps().len());
        }
    }

    #[test]
    fn no_potential_no_pairs() {
        let grid = toy_grid(32);
        let basis = FreeBasis::new(grid);
        let stepping = TimeStepping::new(1e-6, 1e-4, 10);
        let run = evolve_ensemble(&basis, &free_params(), &stepping, &EnsembleOptions::default(), |s| {
            s.positive.iter().map(|a| a.norm()).fold(0.0, f64::max)
        })
        .unwrap();
        assert_eq!(run.columns.len(), 32);
        for c in &run.columns {
            assert!(c.snapshots.iter().all(|&a| a < 1e-13));
        }
    }

    #[test]
    fn parity_reduction_matches_full_ensemble() {
        let grid = Arc::new(Grid::new(0.25, 128).unwrap());
        let basis = FreeBasis::new(grid.clone());
        let params = WellParams::reference();
        let stepping = TimeStepping::new(0.1 / params.v0, 2e-3, 64);
        let number = |reduction| {
            let opts = EnsembleOptions::default().with_reduction(reduction);
            let run = evolve_ensemble(&basis, &params, &stepping, &opts, ColumnStats::observe).unwrap();
            number_series(&run)
        };
        let full = number(Reduction::Full);
        let parity = number(Reduction::Parity);
        assert_eq!(ensemble_columns(&grid, Branch::Negative, Reduction::Parity).len(), 65);
        let n = full.final_number();
        assert!(n > 0.01, "{n}");
        // Only the unpaired Nyquist mode breaks the mirror symmetry.
        assert!((parity.final_number() - n).abs() < 2e-2 * n, "{} vs {n}", parity.final_number());
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let grid = toy_grid(32);
        let basis = FreeBasis::new(grid);
        let params = WellParams::reference();
        let stepping = TimeStepping::new(0.1 / params.v0, 5e-4, 16);
        let go = |execution| {
            let opts = EnsembleOptions {
                execution,
                batch_size: 5,
                ..EnsembleOptions::default()
            };
            evolve_ensemble(&basis, &params, &stepping, &opts, |s| (s.positive.to_vec(), s.negative.to_vec())).unwrap()
        };
        let a = go(Execution::Sequential);
        let b = go(Execution::default());
        for (ca, cb) in a.columns.iter().zip(&b.columns) {
            assert_eq!(ca.label, cb.label);
            assert_eq!(ca.snapshots, cb.snapshots);
        }
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let basis = FreeBasis::new(toy_grid(32));
        let psi = wavepacket(&toy_grid(16));
        assert!(kinetic_half_step(&psi, &basis, 1e-6).is_err());
    }
}
