//! Field-free Dirac eigenbasis on the lattice.
//!
//! Representation: `α_z = σ₁`, `β = σ₃`, so the free Hamiltonian at momentum
//! `k` is the real symmetric matrix `[[c², ck], [ck, -c²]]`. Basis states are
//! `W_{k,±}(z) = u_±(k) e^{ikz} / √L` with `u_±` real, unit-norm and with the
//! first nonzero component positive.
//!
//! Momentum-space arrays exposed by this module are ordered by ascending mode
//! index `m ∈ [-n/2, n/2)`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{Grid, C, C2};

/// Energy branch of a free state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Positive,
    Negative,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Positive => 1.0,
            Branch::Negative => -1.0,
        }
    }

    pub fn opposite(self) -> Branch {
        match self {
            Branch::Positive => Branch::Negative,
            Branch::Negative => Branch::Positive,
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Branch::Positive => f.write_str("positive"),
            Branch::Negative => f.write_str("negative"),
        }
    }
}

/// A free state `(mode_index, branch)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BranchLabel {
    pub mode_index: i64,
    pub branch: Branch,
}

impl BranchLabel {
    pub fn new(mode_index: i64, branch: Branch) -> Self {
        BranchLabel { mode_index, branch }
    }
}

/// `±sqrt(c⁴ + c²k²)`.
pub fn free_energy(k: f64, branch: Branch) -> f64 {
    branch.sign() * (C2 * C2 + C2 * k * k).sqrt()
}

/// Unit eigenvector of the free Hamiltonian at momentum `k` for `branch`.
pub fn free_spinor(k: f64, branch: Branch) -> [f64; 2] {
    let eps = (C2 * C2 + C2 * k * k).sqrt();
    let ck = C * k;
    match branch {
        Branch::Positive => {
            let (a, b) = (C2 + eps, ck);
            let norm = a.hypot(b);
            [a / norm, b / norm]
        }
        Branch::Negative => {
            let (a, b) = (ck, -(C2 + eps));
            let norm = a.hypot(b);
            // Phase convention: first nonzero component real positive.
            let s = if k > 0.0 { 1.0 } else { -1.0 };
            [s * a / norm, s * b / norm]
        }
    }
}

/// Single-particle Dirac state sampled on the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    grid: Arc<Grid>,
    pub upper: Vec<Complex64>,
    pub lower: Vec<Complex64>,
}

impl SpinorField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.n_points();
        SpinorField {
            grid,
            upper: vec![Complex64::new(0.0, 0.0); n],
            lower: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn from_components(
        grid: Arc<Grid>,
        upper: Vec<Complex64>,
        lower: Vec<Complex64>,
    ) -> Result<Self> {
        let n = grid.n_points();
        for len in [upper.len(), lower.len()] {
            if len != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: len,
                });
            }
        }
        Ok(SpinorField { grid, upper, lower })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// `Σ_j |ψ(z_j)|² dz`.
    pub fn norm_sqr(&self) -> f64 {
        let s: f64 = self
            .upper
            .iter()
            .chain(&self.lower)
            .map(|c| c.norm_sqr())
            .sum();
        s * self.grid.spacing()
    }

    pub fn normalize(&mut self) {
        let inv = 1.0 / self.norm_sqr().sqrt();
        for c in self.upper.iter_mut().chain(self.lower.iter_mut()) {
            *c *= inv;
        }
    }

    /// Grid inner product `Σ_j ψ†(z_j) χ(z_j) dz`.
    pub fn inner(&self, other: &SpinorField) -> Complex64 {
        let s: Complex64 = self
            .upper
            .iter()
            .zip(&other.upper)
            .chain(self.lower.iter().zip(&other.lower))
            .map(|(a, b)| a.conj() * b)
            .sum();
        s * self.grid.spacing()
    }

    /// `sqrt(Σ_j |ψ - χ|² dz)`.
    pub fn distance(&self, other: &SpinorField) -> f64 {
        let s: f64 = self
            .upper
            .iter()
            .zip(&other.upper)
            .chain(self.lower.iter().zip(&other.lower))
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        (s * self.grid.spacing()).sqrt()
    }

    pub(crate) fn check_grid(&self, grid: &Grid) -> Result<()> {
        if !self.grid.same_as(grid) {
            return Err(Error::Dimension {
                expected: grid.n_points(),
                got: self.grid.n_points(),
            });
        }
        Ok(())
    }
}

/// Planned forward/inverse transforms for one lattice size.
#[derive(Clone)]
pub struct Spectral {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Spectral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectral").field("n", &self.n).finish()
    }
}

impl Spectral {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Spectral {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn scratch_len(&self) -> usize {
        self.forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len())
    }

    /// Unnormalized forward DFT of every length-`n` chunk of `buf`.
    pub fn forward(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.forward.process_with_scratch(buf, scratch);
    }

    /// Unnormalized inverse DFT of every length-`n` chunk of `buf`.
    pub fn inverse(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.inverse.process_with_scratch(buf, scratch);
    }
}

/// Per-mode data of the free basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeMode {
    pub mode_index: i64,
    pub k: f64,
    /// Positive-branch energy `+ε_k`; the negative branch is `-ε_k`.
    pub energy: f64,
    pub positive: [f64; 2],
    pub negative: [f64; 2],
}

impl FreeMode {
    pub fn spinor(&self, branch: Branch) -> [f64; 2] {
        match branch {
            Branch::Positive => self.positive,
            Branch::Negative => self.negative,
        }
    }

    pub fn energy_of(&self, branch: Branch) -> f64 {
        branch.sign() * self.energy
    }
}

/// The complete set of `2n` free eigenstates on a lattice.
#[derive(Debug, Clone)]
pub struct FreeBasis {
    grid: Arc<Grid>,
    modes: Vec<FreeMode>,
    spectral: Spectral,
}

impl FreeBasis {
    pub fn new(grid: Arc<Grid>) -> Self {
        let modes = grid
            .modes()
            .zip(grid.momenta())
            .map(|(m, &k)| FreeMode {
                mode_index: m,
                k,
                energy: free_energy(k, Branch::Positive),
                positive: free_spinor(k, Branch::Positive),
                negative: free_spinor(k, Branch::Negative),
            })
            .collect();
        let spectral = Spectral::new(grid.n_points());
        FreeBasis {
            grid,
            modes,
            spectral,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    /// Modes in ascending index order.
    pub fn modes(&self) -> &[FreeMode] {
        &self.modes
    }

    pub fn mode(&self, mode_index: i64) -> Result<&FreeMode> {
        self.grid.check_mode(mode_index)?;
        Ok(&self.modes[self.grid.slot_of(mode_index)])
    }

    pub fn len(&self) -> usize {
        2 * self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn energy(&self, label: BranchLabel) -> Result<f64> {
        Ok(self.mode(label.mode_index)?.energy_of(label.branch))
    }

    /// Position-space basis state `W_label(z_j)`.
    pub fn state(&self, label: BranchLabel) -> Result<SpinorField> {
        let mode = self.mode(label.mode_index)?;
        let u = mode.spinor(label.branch);
        let norm = 1.0 / self.grid.length().sqrt();
        let mut field = SpinorField::zeros(self.grid.clone());
        for (j, &z) in self.grid.positions().iter().enumerate() {
            let wave = Complex64::from_polar(norm, mode.k * z);
            field.upper[j] = wave * u[0];
            field.lower[j] = wave * u[1];
        }
        Ok(field)
    }

    /// Plane-wave amplitudes `⟨e^{ik_m z}/√L | ψ_component⟩` of both
    /// components, ascending mode order.
    pub fn plane_wave_amplitudes(
        &self,
        state: &SpinorField,
    ) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
        state.check_grid(&self.grid)?;
        let n = self.grid.n_points();
        let mut buf = Vec::with_capacity(2 * n);
        buf.extend_from_slice(&state.upper);
        buf.extend_from_slice(&state.lower);
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.spectral.scratch_len()];
        self.spectral.forward(&mut buf, &mut scratch);
        let scale = self.grid.length().sqrt() / n as f64;
        let mut upper = vec![Complex64::new(0.0, 0.0); n];
        let mut lower = vec![Complex64::new(0.0, 0.0); n];
        for (slot, mode) in self.modes.iter().enumerate() {
            let q = self.grid.fft_slot_of(mode.mode_index);
            let s = scale * parity_sign(mode.mode_index);
            upper[slot] = buf[q] * s;
            lower[slot] = buf[n + q] * s;
        }
        Ok((upper, lower))
    }

    /// Coefficients `⟨W_{k,branch}|ψ⟩` for all modes, ascending order.
    pub fn project(&self, state: &SpinorField, branch: Branch) -> Result<Vec<Complex64>> {
        let (upper, lower) = self.plane_wave_amplitudes(state)?;
        Ok(self.contract(&upper, &lower, branch))
    }

    /// Both branch projections from a single transform.
    pub fn project_both(&self, state: &SpinorField) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
        let (upper, lower) = self.plane_wave_amplitudes(state)?;
        Ok((
            self.contract(&upper, &lower, Branch::Positive),
            self.contract(&upper, &lower, Branch::Negative),
        ))
    }

    fn contract(&self, upper: &[Complex64], lower: &[Complex64], branch: Branch) -> Vec<Complex64> {
        self.modes
            .iter()
            .zip(upper.iter().zip(lower))
            .map(|(mode, (a, b))| {
                let u = mode.spinor(branch);
                a * u[0] + b * u[1]
            })
            .collect()
    }

    /// Inverse of [`FreeBasis::project`]: `Σ_k coeffs[k] W_{k,branch}(z)`.
    pub fn synthesize(&self, coeffs: &[Complex64], branch: Branch) -> Result<SpinorField> {
        let n = self.grid.n_points();
        if coeffs.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: coeffs.len(),
            });
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); 2 * n];
        let scale = 1.0 / self.grid.length().sqrt();
        for (mode, c) in self.modes.iter().zip(coeffs) {
            let q = self.grid.fft_slot_of(mode.mode_index);
            let u = mode.spinor(branch);
            let s = scale * parity_sign(mode.mode_index);
            buf[q] = c * (u[0] * s);
            buf[n + q] = c * (u[1] * s);
        }
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.spectral.scratch_len()];
        self.spectral.inverse(&mut buf, &mut scratch);
        let lower = buf.split_off(n);
        SpinorField::from_components(self.grid.clone(), buf, lower)
    }
}

pub fn build_basis(grid: Arc<Grid>) -> FreeBasis {
    FreeBasis::new(grid)
}

pub fn project_branch(
    state: &SpinorField,
    basis: &FreeBasis,
    branch: Branch,
) -> Result<Vec<Complex64>> {
    basis.project(state, branch)
}

/// `(-1)^m`, the phase `e^{i k_m L/2}` from the lattice origin at `-L/2`.
#[inline]
pub(crate) fn parity_sign(mode_index: i64) -> f64 {
    if mode_index.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}
