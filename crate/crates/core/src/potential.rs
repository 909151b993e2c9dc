//! The oscillating Sauter well: a tanh-edged well whose depth and width
//! breathe at a common frequency with a relative phase.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{Grid, C2, LAMBDA_C};

/// Physical knobs of the well, all in atomic units (phase in radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellParams {
    /// Depth amplitude V0.
    pub v0: f64,
    /// Width oscillation amplitude D0.
    pub d0: f64,
    /// Edge width W.
    pub w: f64,
    /// Common angular frequency of depth and width.
    pub omega0: f64,
    /// Depth phase relative to width, in [0, 2π).
    pub phi: f64,
}

impl WellParams {
    pub fn new(v0: f64, d0: f64, w: f64, omega0: f64, phi: f64) -> Result<Self> {
        WellParams {
            v0,
            d0,
            w,
            omega0,
            phi,
        }
        .validated()
    }

    /// Reference configuration: V0 = 2.53c², D0 = 10λ_C, W = 0.3λ_C,
    /// ω0 = 0.04c², φ = 0.
    pub fn reference() -> Self {
        WellParams {
            v0: 2.53 * C2,
            d0: 10.0 * LAMBDA_C,
            w: 0.3 * LAMBDA_C,
            omega0: 0.04 * C2,
            phi: 0.0,
        }
    }

    pub fn with_phi(mut self, phi: f64) -> Self {
        self.phi = normalize_phase(phi);
        self
    }

    pub fn with_omega0(mut self, omega0: f64) -> Self {
        self.omega0 = omega0;
        self
    }

    pub fn with_v0(mut self, v0: f64) -> Self {
        self.v0 = v0;
        self
    }

    /// Checks the invariants and folds φ into [0, 2π).
    pub fn validated(mut self) -> Result<Self> {
        let checks = [
            ("v0", self.v0 >= 0.0, "must be ≥ 0"),
            ("d0", self.d0 >= 0.0, "must be ≥ 0"),
            ("w", self.w > 0.0, "must be > 0"),
            ("omega0", self.omega0 > 0.0, "must be > 0"),
            ("phi", self.phi.is_finite(), "must be finite"),
        ];
        for (field, ok, reason) in checks {
            if !ok {
                return Err(Error::config(field, reason));
            }
        }
        for (field, value) in [("v0", self.v0), ("d0", self.d0), ("w", self.w), ("omega0", self.omega0)] {
            if !value.is_finite() {
                return Err(Error::config(field, "must be finite"));
            }
        }
        self.phi = normalize_phase(self.phi);
        Ok(self)
    }

    pub fn period(&self) -> f64 {
        TAU / self.omega0
    }

    pub fn depth_at(&self, t: f64) -> f64 {
        0.5 * self.v0 * (1.0 - (self.omega0 * t + self.phi).cos())
    }

    pub fn width_at(&self, t: f64) -> f64 {
        self.w + 0.5 * self.d0 * (1.0 - (self.omega0 * t).cos())
    }

    /// V(z, t).
    pub fn value(&self, z: f64, t: f64) -> f64 {
        sauter(z, self.depth_at(t), self.width_at(t), self.w)
    }

    pub fn sample(&self, grid: &Grid, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; grid.n_points()];
        self.sample_into(grid, t, &mut out);
        out
    }

    pub(crate) fn sample_into(&self, grid: &Grid, t: f64, out: &mut [f64]) {
        let depth = self.depth_at(t);
        let width = self.width_at(t);
        for (v, &z) in out.iter_mut().zip(grid.positions()) {
            *v = sauter(z, depth, width, self.w);
        }
    }
}

/// Static Sauter well of depth `depth`, full width `width` and edge width `edge`.
pub fn sauter(z: f64, depth: f64, width: f64, edge: f64) -> f64 {
    // Written as a difference of tanh with arguments of opposite sign so that
    // V(z) and V(-z) round identically.
    let a = (z - 0.5 * width) / edge;
    let b = (z + 0.5 * width) / edge;
    0.5 * depth * (a.tanh() - b.tanh())
}

pub fn normalize_phase(phi: f64) -> f64 {
    let r = phi.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

pub fn depth_at(params: &WellParams, t: f64) -> f64 {
    params.depth_at(t)
}

pub fn width_at(params: &WellParams, t: f64) -> f64 {
    params.width_at(t)
}

pub fn sample_potential(params: &WellParams, grid: &Grid, t: f64) -> Vec<f64> {
    params.sample(grid, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::make_grid;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn reference() -> WellParams {
        WellParams::reference()
    }

    #[test]
    fn depth_examples() {
        let p = reference();
        assert_eq!(p.depth_at(0.0), 0.0);
        let t_half = PI / p.omega0;
        assert_relative_eq!(p.depth_at(t_half), 2.53 * C2, max_relative = 1e-14);
        let q = p.with_phi(PI / 2.0);
        assert_relative_eq!(q.depth_at(0.0), 0.5 * q.v0, max_relative = 1e-14);
    }

    #[test]
    fn width_examples() {
        let p = reference();
        assert_relative_eq!(p.width_at(0.0), 0.3 * LAMBDA_C);
        assert_relative_eq!(p.width_at(PI / p.omega0), 10.3 * LAMBDA_C, max_relative = 1e-14);
        assert_relative_eq!(
            p.width_at(0.5 * PI / p.omega0),
            p.w + 0.5 * p.d0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn potential_examples() {
        let grid = make_grid(2.5, 64).unwrap();
        let p = reference();
        assert!(p.sample(&grid, 0.0).iter().all(|&v| v == 0.0));

        let t = 0.3 * p.period();
        let center = p.value(0.0, t);
        let expect = -p.depth_at(t) * (p.width_at(t) / (2.0 * p.w)).tanh();
        assert_relative_eq!(center, expect, max_relative = 1e-14);

        // D = W reduces the center to -V0·tanh(1/2).
        let v = sauter(0.0, 1.0, 0.7, 0.7);
        assert_relative_eq!(v, -0.5f64.tanh(), max_relative = 1e-15);
        assert_relative_eq!(0.5f64.tanh(), 0.4621, max_relative = 1e-4);
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(WellParams::new(-1.0, 0.0, 1.0, 1.0, 0.0).is_err());
        assert!(WellParams::new(1.0, -1.0, 1.0, 1.0, 0.0).is_err());
        assert!(WellParams::new(1.0, 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(WellParams::new(1.0, 0.0, 1.0, 0.0, 0.0).is_err());
        let p = WellParams::new(1.0, 0.0, 1.0, 1.0, -PI / 2.0).unwrap();
        assert_relative_eq!(p.phi, 1.5 * PI);
        let p = WellParams::new(1.0, 0.0, 1.0, 1.0, 2.0 * PI).unwrap();
        assert_eq!(p.phi, 0.0);
    }

    proptest! {
        #[test]
        fn even_and_bounded(t in 0.0f64..0.02, phi in 0.0f64..TAU, n in prop::sample::select(vec![16usize, 64, 256])) {
            let grid = make_grid(2.5, n).unwrap();
            let p = reference().with_phi(phi);
            let v = p.sample(&grid, t);
            let depth = p.depth_at(t);
            for j in 1..n {
                let mirror = v[n - j];
                prop_assert!((v[j] - mirror).abs() <= 1e-12 * p.v0);
            }
            for &x in &v {
                prop_assert!(x <= 0.0 && x >= -depth * (1.0 + 1e-15));
            }
        }

        #[test]
        fn mirrored_phase_is_time_reversed_drive(s in 0.0f64..1.0, phi in 0.0f64..TAU) {
            let p = reference().with_phi(phi);
            let q = reference().with_phi(TAU - phi);
            let period = p.period();
            let t = s * period;
            prop_assert!((q.depth_at(t) - p.depth_at(period - t)).abs() <= 1e-9 * p.v0);
            prop_assert!((q.width_at(t) - p.width_at(period - t)).abs() <= 1e-9 * p.d0);
        }
    }
}
