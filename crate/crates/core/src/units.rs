//! Atomic-unit constants and the periodic Fourier lattice.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Speed of light in atomic units.
pub const C: f64 = 137.035999;

/// Derived atomic-unit scales. Energies are naturally quoted in units of
/// `c2` (the rest energy) and lengths in units of `lambda_c`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Constants {
    pub c: f64,
    pub lambda_c: f64,
    pub c2: f64,
}

impl Constants {
    pub const fn atomic() -> Self {
        Constants {
            c: C,
            lambda_c: 1.0 / C,
            c2: C * C,
        }
    }
}

impl Default for Constants {
    fn default() -> Self {
        Self::atomic()
    }
}

/// Rest energy c² in atomic units.
pub const C2: f64 = C * C;
/// Compton wavelength 1/c in atomic units.
pub const LAMBDA_C: f64 = 1.0 / C;

/// Periodic spatial lattice `z_j = -L/2 + j·dz` with its conjugate momentum
/// lattice `k_m = 2π m / L`, `m ∈ [-n/2, n/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    length: f64,
    n_points: usize,
    spacing: f64,
    positions: Vec<f64>,
    momenta: Vec<f64>,
}

/// Smallest grid the propagator accepts.
pub const MIN_POINTS: usize = 8;

impl Grid {
    pub fn new(length: f64, n_points: usize) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::config(
                "length",
                format!("must be positive and finite, got {length}"),
            ));
        }
        if !n_points.is_multiple_of(2) || n_points < MIN_POINTS {
            return Err(Error::config(
                "n_points",
                format!("n_points must be even, ≥ {MIN_POINTS} (got {n_points})"),
            ));
        }
        Ok(Self::build(length, n_points))
    }

    /// Unchecked constructor used by tests that want toy lattices below the
    /// propagator minimum (e.g. four points).
    pub fn new_unchecked(length: f64, n_points: usize) -> Self {
        assert!(length > 0.0 && n_points >= 2 && n_points.is_multiple_of(2));
        Self::build(length, n_points)
    }

    fn build(length: f64, n_points: usize) -> Self {
        let spacing = length / n_points as f64;
        let positions = (0..n_points)
            .map(|j| -0.5 * length + j as f64 * spacing)
            .collect();
        let half = (n_points / 2) as i64;
        let momenta = (-half..half)
            .map(|m| 2.0 * PI * m as f64 / length)
            .collect();
        Grid {
            length,
            n_points,
            spacing,
            positions,
            momenta,
        }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// Momenta in ascending mode order, `k[i]` belongs to mode `i - n/2`.
    pub fn momenta(&self) -> &[f64] {
        &self.momenta
    }

    pub fn min_mode(&self) -> i64 {
        -((self.n_points / 2) as i64)
    }

    pub fn max_mode_exclusive(&self) -> i64 {
        (self.n_points / 2) as i64
    }

    pub fn modes(&self) -> impl Iterator<Item = i64> + Clone {
        self.min_mode()..self.max_mode_exclusive()
    }

    pub fn momentum_of(&self, mode_index: i64) -> Result<f64> {
        self.check_mode(mode_index)?;
        Ok(2.0 * PI * mode_index as f64 / self.length)
    }

    pub fn check_mode(&self, mode_index: i64) -> Result<()> {
        let (lo, hi) = (self.min_mode(), self.max_mode_exclusive());
        if mode_index < lo || mode_index >= hi {
            return Err(Error::Bounds {
                index: mode_index,
                lo,
                hi,
            });
        }
        Ok(())
    }

    /// Largest |k| on the lattice (the Nyquist mode).
    pub fn max_momentum(&self) -> f64 {
        PI * self.n_points as f64 / self.length
    }

    /// Position of mode `m` in the ascending-order arrays.
    pub(crate) fn slot_of(&self, mode_index: i64) -> usize {
        (mode_index - self.min_mode()) as usize
    }

    /// Position of mode `m` in unshifted FFT output order.
    pub(crate) fn fft_slot_of(&self, mode_index: i64) -> usize {
        mode_index.rem_euclid(self.n_points as i64) as usize
    }

    pub(crate) fn same_as(&self, other: &Grid) -> bool {
        self.n_points == other.n_points && self.length == other.length
    }
}

/// Builds the lattice, validating length and point count.
pub fn make_grid(length: f64, n_points: usize) -> Result<Grid> {
    Grid::new(length, n_points)
}

pub fn momentum_of(grid: &Grid, mode_index: i64) -> Result<f64> {
    grid.momentum_of(mode_index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constants_are_consistent() {
        let k = Constants::atomic();
        assert_eq!(k.lambda_c * k.c, 1.0);
        assert_eq!(k.c2, k.c * k.c);
        assert_relative_eq!(k.c2, 1.87789e4, max_relative = 1e-5);
    }

    #[test]
    fn four_point_lattice() {
        let g = Grid::new_unchecked(2.5, 4);
        assert_eq!(g.positions(), &[-1.25, -0.625, 0.0, 0.625]);
        let step = 2.0 * PI / 2.5;
        let expected = [-2.0 * step, -step, 0.0, step];
        for (a, b) in g.momenta().iter().zip(expected) {
            assert_relative_eq!(*a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn spacing_and_cutoff() {
        let g = make_grid(2.5, 2048).unwrap();
        assert_relative_eq!(g.spacing(), 1.2207e-3, max_relative = 1e-4);
        let g = make_grid(2.5, 512).unwrap();
        assert_relative_eq!(g.max_momentum(), 643.4, max_relative = 1e-4);
        assert!(g.max_momentum() > 3.0 * C);
        assert_relative_eq!(3.0 * C, 411.1, max_relative = 1e-4);
    }

    #[test]
    fn rejects_bad_configuration() {
        for (len, n) in [(0.0, 16), (-1.0, 16), (f64::NAN, 16)] {
            match make_grid(len, n) {
                Err(Error::Config { field, .. }) => assert_eq!(field, "length"),
                other => panic!("unexpected {other:?}"),
            }
        }
        for n in [7, 6, 0, 9] {
            let err = make_grid(2.5, n).unwrap_err();
            assert!(err.to_string().contains("n_points must be even, ≥ 8"));
        }
    }

    #[test]
    fn momentum_indexing() {
        let g = make_grid(2.5, 16).unwrap();
        assert_eq!(momentum_of(&g, 0).unwrap(), 0.0);
        assert_relative_eq!(momentum_of(&g, 1).unwrap(), 2.5133, max_relative = 1e-4);
        assert_eq!(momentum_of(&g, -1).unwrap(), -momentum_of(&g, 1).unwrap());
        assert!(matches!(momentum_of(&g, 8), Err(Error::Bounds { .. })));
        assert!(momentum_of(&g, -8).is_ok());
        assert!(momentum_of(&g, -9).is_err());
    }

    #[test]
    fn momenta_sum_to_nyquist() {
        for n in [8usize, 64, 512] {
            let g = make_grid(2.5, n).unwrap();
            let sum: f64 = g.momenta().iter().sum();
            let nyquist = -(2.0 * PI / 2.5) * (n / 2) as f64;
            assert_relative_eq!(sum, nyquist, max_relative = 1e-10);
        }
    }
}
