//! `key = value` run configuration.
//!
//! Physical inputs are written in the units the literature quotes them in
//! (energies in c², lengths in λ_C, phases in π) and converted to atomic
//! units once, when the document is parsed.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::potential::WellParams;
use crate::propagator::{
    default_t_final, EnsembleOptions, Execution, Reduction, StepPolicy, TimeStepping,
};
use crate::sweep::{phase_grid, REFERENCE_FREQUENCIES};
use crate::units::{Grid, C2, LAMBDA_C};

/// Values exactly as written by the user, before unit conversion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserValues {
    pub v0: f64,
    pub d0: f64,
    pub w: f64,
    pub omega0: f64,
    pub phi: f64,
    pub length: f64,
    pub n_points: usize,
    pub dt: Option<f64>,
    pub t_final: f64,
    pub snapshot_stride: usize,
    pub steps_per_period: usize,
    pub phases: Option<Vec<f64>>,
    pub frequencies: Option<Vec<f64>>,
    pub output: PathBuf,
    pub precision: usize,
    pub workers: usize,
    pub reduction: Reduction,
    pub batch_size: usize,
    pub spectrum_samples_per_period: usize,
    pub density: bool,
}

impl Default for UserValues {
    fn default() -> Self {
        UserValues {
            v0: 2.53,
            d0: 10.0,
            w: 0.3,
            omega0: 0.04,
            phi: 0.0,
            length: 2.5,
            n_points: 2048,
            dt: None,
            t_final: default_t_final(),
            snapshot_stride: 32,
            steps_per_period: 8192,
            phases: None,
            frequencies: None,
            output: PathBuf::from("out"),
            precision: 12,
            workers: 0,
            reduction: Reduction::Parity,
            batch_size: 32,
            spectrum_samples_per_period: 4096,
            density: false,
        }
    }
}

/// Validated configuration with every physical quantity in atomic units.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub user: UserValues,
    pub well: WellParams,
    pub grid: Grid,
    pub policy: StepPolicy,
    /// Phases in radians (default: 21 points over `[0, 2π]`).
    pub phases: Vec<f64>,
    /// Frequencies in atomic units.
    pub frequencies: Vec<f64>,
}

impl RunConfig {
    pub fn from_user(user: UserValues) -> Result<Self> {
        let well = WellParams::new(
            user.v0 * C2,
            user.d0 * LAMBDA_C,
            user.w * LAMBDA_C,
            user.omega0 * C2,
            user.phi * PI,
        )?;
        let grid = Grid::new(user.length, user.n_points)?;
        if user.steps_per_period == 0 {
            return Err(Error::config("steps_per_period", "must be ≥ 1"));
        }
        if user.batch_size == 0 {
            return Err(Error::config("batch_size", "must be ≥ 1"));
        }
        if user.spectrum_samples_per_period < 2 {
            return Err(Error::config("spectrum_samples_per_period", "must be ≥ 2"));
        }
        if user.precision > 17 {
            return Err(Error::config("precision", "at most 17 digits"));
        }
        let policy = StepPolicy {
            steps_per_period: user.steps_per_period,
            dt_override: user.dt,
            t_final: user.t_final,
            snapshot_stride: user.snapshot_stride,
        };
        policy.stepping_for(&well).validate(&well)?;
        let phases = match &user.phases {
            Some(p) => p.iter().map(|x| x * PI).collect(),
            None => phase_grid(21),
        };
        if let Some(bad) = phases.iter().find(|p| !(0.0..=2.0 * PI).contains(*p)) {
            return Err(Error::config("phases", format!("{} outside [0, 2]", bad / PI)));
        }
        let frequencies: Vec<f64> = user
            .frequencies
            .clone()
            .unwrap_or_else(|| REFERENCE_FREQUENCIES.to_vec())
            .iter()
            .map(|w| w * C2)
            .collect();
        if frequencies.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::config("frequencies", "must be > 0"));
        }
        Ok(RunConfig {
            user,
            well,
            grid,
            policy,
            phases,
            frequencies,
        })
    }

    pub fn stepping(&self) -> TimeStepping {
        self.policy.stepping_for(&self.well)
    }

    pub fn ensemble_options(&self) -> EnsembleOptions {
        EnsembleOptions {
            reduction: self.user.reduction,
            execution: Execution::default(),
            batch_size: self.user.batch_size,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_user(UserValues::default()).expect("defaults are valid")
    }
}

const KEYS: &[&str] = &[
    "v0",
    "d0",
    "w",
    "omega0",
    "phi",
    "length",
    "n_points",
    "dt",
    "t_final",
    "snapshot_stride",
    "steps_per_period",
    "phases",
    "frequencies",
    "output",
    "precision",
    "workers",
    "reduction",
    "batch_size",
    "spectrum_samples_per_period",
    "density",
];

fn line_err(line: usize, key: &str, reason: impl Into<String>) -> Error {
    Error::ConfigLine {
        line,
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| line_err(line, key, format!("cannot parse `{v}` as a number")))?;
    if !x.is_finite() {
        return Err(line_err(line, key, "must be finite"));
    }
    Ok(x)
}

fn parse_usize(line: usize, key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| line_err(line, key, format!("cannot parse `{v}` as a non-negative integer")))
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    let items: Vec<&str> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(line_err(line, key, "list must not be empty"));
    }
    items.into_iter().map(|s| parse_f64(line, key, s)).collect()
}

/// Applies one `key = value` assignment to `user`.
pub fn apply_assignment(user: &mut UserValues, line: usize, key: &str, value: &str) -> Result<()> {
    match key {
        "v0" => user.v0 = parse_f64(line, key, value)?,
        "d0" => user.d0 = parse_f64(line, key, value)?,
        "w" => user.w = parse_f64(line, key, value)?,
        "omega0" => user.omega0 = parse_f64(line, key, value)?,
        "phi" => user.phi = parse_f64(line, key, value)?,
        "length" => user.length = parse_f64(line, key, value)?,
        "n_points" => {
            let n = parse_usize(line, key, value)?;
            if n % 2 != 0 || n < crate::units::MIN_POINTS {
                return Err(line_err(line, key, "n_points must be even, ≥ 8"));
            }
            user.n_points = n;
        }
        "dt" => {
            user.dt = match value {
                "auto" => None,
                v => Some(parse_f64(line, key, v)?),
            }
        }
        "t_final" => user.t_final = parse_f64(line, key, value)?,
        "snapshot_stride" => user.snapshot_stride = parse_usize(line, key, value)?,
        "steps_per_period" => user.steps_per_period = parse_usize(line, key, value)?,
        "phases" => user.phases = Some(parse_list(line, key, value)?),
        "frequencies" => user.frequencies = Some(parse_list(line, key, value)?),
        "output" => {
            if value.is_empty() {
                return Err(line_err(line, key, "path must not be empty"));
            }
            user.output = PathBuf::from(value);
        }
        "precision" => user.precision = parse_usize(line, key, value)?,
        "workers" => user.workers = parse_usize(line, key, value)?,
        "reduction" => {
            user.reduction = match value {
                "full" => Reduction::Full,
                "parity" => Reduction::Parity,
                other => {
                    return Err(line_err(
                        line,
                        key,
                        format!("expected `full` or `parity`, got `{other}`"),
                    ))
                }
            }
        }
        "batch_size" => user.batch_size = parse_usize(line, key, value)?,
        "spectrum_samples_per_period" => {
            user.spectrum_samples_per_period = parse_usize(line, key, value)?
        }
        "density" => {
            user.density = match value {
                "true" => true,
                "false" => false,
                other => return Err(line_err(line, key, format!("expected true/false, got `{other}`"))),
            }
        }
        other => {
            return Err(line_err(
                line,
                other,
                format!("unknown key (expected one of: {})", KEYS.join(", ")),
            ))
        }
    }
    Ok(())
}

/// Splits `key = value`, ignoring `#` comments. `None` for blank lines.
fn split_line(line_no: usize, raw: &str) -> Result<Option<(String, String)>> {
    let text = raw.split('#').next().unwrap_or("").trim();
    if text.is_empty() {
        return Ok(None);
    }
    let (k, v) = text
        .split_once('=')
        .ok_or_else(|| line_err(line_no, text, "expected `key = value`"))?;
    Ok(Some((k.trim().to_string(), v.trim().to_string())))
}

/// Parses raw values without validating cross-field invariants.
pub fn parse_user_values(text: &str) -> Result<UserValues> {
    let mut user = UserValues::default();
    let mut seen: Vec<String> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if let Some((k, v)) = split_line(line, raw)? {
            if seen.contains(&k) {
                return Err(line_err(line, &k, "duplicate key"));
            }
            apply_assignment(&mut user, line, &k, &v)?;
            seen.push(k);
        }
    }
    Ok(user)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    RunConfig::from_user(parse_user_values(text)?)
}

/// Applies `key=value` overrides (CLI `--set`) on top of a parsed document.
pub fn with_overrides(user: &mut UserValues, overrides: &[String]) -> Result<()> {
    for (i, o) in overrides.iter().enumerate() {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| line_err(i + 1, o, "override must be `key=value`"))?;
        apply_assignment(user, i + 1, k.trim(), v.trim())?;
    }
    Ok(())
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Serializes a configuration in the format [`parse_config`] reads.
pub fn render(config: &RunConfig) -> String {
    let u = &config.user;
    let mut s = String::new();
    let _ = writeln!(s, "# energies in c², lengths in λ_C (grid length in a.u.), phases in π");
    let _ = writeln!(s, "v0 = {:?}", u.v0);
    let _ = writeln!(s, "d0 = {:?}", u.d0);
    let _ = writeln!(s, "w = {:?}", u.w);
    let _ = writeln!(s, "omega0 = {:?}", u.omega0);
    let _ = writeln!(s, "phi = {:?}", u.phi);
    let _ = writeln!(s, "length = {:?}", u.length);
    let _ = writeln!(s, "n_points = {}", u.n_points);
    match u.dt {
        Some(dt) => {
            let _ = writeln!(s, "dt = {dt:?}");
        }
        None => {
            let _ = writeln!(s, "dt = auto");
        }
    }
    let _ = writeln!(s, "t_final = {:?}", u.t_final);
    let _ = writeln!(s, "snapshot_stride = {}", u.snapshot_stride);
    let _ = writeln!(s, "steps_per_period = {}", u.steps_per_period);
    if let Some(p) = &u.phases {
        let _ = writeln!(s, "phases = {}", join(p));
    }
    if let Some(f) = &u.frequencies {
        let _ = writeln!(s, "frequencies = {}", join(f));
    }
    let _ = writeln!(s, "output = {}", u.output.display());
    let _ = writeln!(s, "precision = {}", u.precision);
    let _ = writeln!(s, "workers = {}", u.workers);
    let reduction = match u.reduction {
        Reduction::Full => "full",
        Reduction::Parity => "parity",
    };
    let _ = writeln!(s, "reduction = {reduction}");
    let _ = writeln!(s, "batch_size = {}", u.batch_size);
    let _ = writeln!(s, "spectrum_samples_per_period = {}", u.spectrum_samples_per_period);
    let _ = writeln!(s, "density = {}", u.density);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn empty_document_gives_reference_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c.well, WellParams::reference());
        assert_eq!(c.user.v0, 2.53);
        assert_eq!(c.user.d0, 10.0);
        assert_eq!(c.user.w, 0.3);
        assert_eq!(c.user.omega0, 0.04);
        assert_eq!(c.user.phi, 0.0);
        assert_relative_eq!(c.policy.t_final, 50.0 * PI / C2);
        assert_eq!(c.phases.len(), 21);
        assert_eq!(c.frequencies.len(), 6);
    }

    #[test]
    fn phase_in_units_of_pi() {
        let c = parse_config("phi = 0.5  # quarter turn\n").unwrap();
        assert_relative_eq!(c.well.phi, PI / 2.0);
    }

    #[test]
    fn validation_errors_name_the_key() {
        let err = parse_config("# header\nn_points = 7\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("n_points must be even, ≥ 8"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");

        let err = parse_config("v0 = abc").unwrap_err();
        assert!(err.to_string().contains("v0"));
        assert_eq!(err.exit_code(), 2);

        let err = parse_config("\n\nbogus = 1").unwrap_err();
        assert!(matches!(err, Error::ConfigLine { line: 3, .. }));

        let err = parse_config("w = 0").unwrap_err();
        assert!(err.to_string().contains('w'));

        assert!(parse_config("v0 = 1\nv0 = 2").is_err());
        assert!(parse_config("just text").is_err());
        assert!(parse_config("phases = 0, 2.5").is_err());
        assert!(parse_config("reduction = half").is_err());
    }

    #[test]
    fn step_guard_is_enforced() {
        let err = parse_config("dt = 1e-4").unwrap_err();
        assert!(err.to_string().contains("dt"));
        assert!(parse_config("dt = 1e-6").is_ok());
    }

    #[test]
    fn overrides_apply_on_top() {
        let mut u = parse_user_values("n_points = 64").unwrap();
        with_overrides(&mut u, &["phi=1".into(), "n_points = 128".into()]).unwrap();
        let c = RunConfig::from_user(u).unwrap();
        assert_eq!(c.grid.n_points(), 128);
        assert_relative_eq!(c.well.phi, PI);
        let mut u = UserValues::default();
        assert!(with_overrides(&mut u, &["phi".into()]).is_err());
    }

    #[test]
    fn render_round_trips_defaults() {
        let c = RunConfig::default();
        assert_eq!(parse_config(&render(&c)).unwrap(), c);
    }

    proptest! {
        #[test]
        fn render_round_trips(
            v0 in 0.0f64..4.0,
            d0 in 0.0f64..20.0,
            w in 0.05f64..1.0,
            omega0 in 0.01f64..3.0,
            phi in 0.0f64..2.0,
            half_n in 4usize..2048,
            stride in 1usize..100,
            phases in prop::option::of(prop::collection::vec(0.0f64..2.0, 1..6)),
            freqs in prop::option::of(prop::collection::vec(0.01f64..3.0, 1..4)),
            precision in 0usize..17,
            full in any::<bool>(),
        ) {
            let user = UserValues {
                v0, d0, w, omega0, phi,
                n_points: 2 * half_n,
                snapshot_stride: stride,
                phases,
                frequencies: freqs,
                precision,
                dt: Some(1e-7),
                reduction: if full { Reduction::Full } else { Reduction::Parity },
                ..UserValues::default()
            };
            let c = RunConfig::from_user(user).unwrap();
            prop_assert_eq!(parse_config(&render(&c)).unwrap(), c);
        }
    }
}
