//! Declarative run configuration: a TOML file describing the system, the
//! integration parameters, the coupling grid, the scan window, and the
//! verification tolerances. Unknown keys are rejected so typos fail loudly.

use std::path::{Path, PathBuf};

use popsync::analyzer::ScanParams;
use popsync::distributions::SamplingMode;
use popsync::simulator::{SimParams, DEFAULT_ONSET_COEFF, DEFAULT_ONSET_MARGIN};
use popsync::{CouplingSpec, PopulationSpec, SystemConfig};
use serde::Deserialize;
use thiserror::Error;

/// Largest coupling grid a range may expand to; guards against a typo'd
/// step flooding the sweep with millions of trials.
pub const MAX_GRID_POINTS: usize = 10_000;

pub const DEFAULT_REL_TOLERANCE: f64 = 0.10;
pub const DEFAULT_ABS_TOLERANCE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config syntax error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    output: Option<RawOutput>,
    system: RawSystem,
    sim: Option<RawSim>,
    sweep: Option<RawSweep>,
    scan: Option<RawScan>,
    verify: Option<RawVerify>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    populations: Vec<RawPopulation>,
    coupling: RawCoupling,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPopulation {
    n: usize,
    omega0: f64,
    delta: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoupling {
    k: Vec<Vec<f64>>,
    alpha: Option<Vec<Vec<f64>>>,
    eta: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    dt: Option<f64>,
    t_transient: Option<f64>,
    t_average: Option<f64>,
    seed: Option<u64>,
    sampling: Option<SamplingMode>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    eta_grid: RawGrid,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RangeGrid {
    min: f64,
    max: f64,
    step: f64,
}

// List must come first: a derived struct deserializer also accepts a
// positional sequence, so a plain list would otherwise match Range.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawGrid {
    List(Vec<f64>),
    Range(RangeGrid),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScan {
    v_min: Option<f64>,
    v_max: Option<f64>,
    n_points: Option<usize>,
    im_tolerance: Option<f64>,
    refine_tolerance: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerify {
    rel_tolerance: Option<f64>,
    abs_tolerance: Option<f64>,
    onset_coeff: Option<f64>,
    onset_margin: Option<f64>,
}

/// How a detected onset is judged against a predicted threshold, plus the
/// order-parameter level that counts as synchronized.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyParams {
    /// Accept |onset - eta*| up to this fraction of |eta*|.
    pub rel_tolerance: f64,
    /// For |eta*| <= 1 also accept this absolute error.
    pub abs_tolerance: f64,
    /// Onset threshold on r is coeff / sqrt(N) + margin.
    pub onset_coeff: f64,
    pub onset_margin: f64,
}

impl Default for VerifyParams {
    fn default() -> Self {
        Self {
            rel_tolerance: DEFAULT_REL_TOLERANCE,
            abs_tolerance: DEFAULT_ABS_TOLERANCE,
            onset_coeff: DEFAULT_ONSET_COEFF,
            onset_margin: DEFAULT_ONSET_MARGIN,
        }
    }
}

/// Fully validated configuration, ready for the command pipelines.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub system: SystemConfig,
    pub sim: SimParams,
    /// Coupling grid for sweep/verify; those commands require it.
    pub eta_grid: Option<Vec<f64>>,
    pub scan: ScanParams,
    pub verify: VerifyParams,
    pub output_dir: PathBuf,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<LoadedConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text)?;

    let populations: Vec<PopulationSpec> = raw
        .system
        .populations
        .iter()
        .map(|p| PopulationSpec::new(p.n, p.omega0, p.delta))
        .collect();
    let m = populations.len();
    let coupling = CouplingSpec {
        k: raw.system.coupling.k,
        alpha: raw
            .system
            .coupling
            .alpha
            .unwrap_or_else(|| vec![vec![0.0; m]; m]),
        eta: raw.system.coupling.eta.unwrap_or(0.0),
    };
    let system = SystemConfig::new(populations, coupling);
    system.validate().map_err(|e| invalid(e.to_string()))?;

    let defaults = SimParams::default();
    let sim = match raw.sim {
        Some(s) => SimParams {
            dt: s.dt.unwrap_or(defaults.dt),
            t_transient: s.t_transient.unwrap_or(defaults.t_transient),
            t_average: s.t_average.unwrap_or(defaults.t_average),
            seed: s.seed.unwrap_or(defaults.seed),
            sampling_mode: s.sampling.unwrap_or(defaults.sampling_mode),
            ..SimParams::default()
        },
        None => defaults,
    };
    sim.validate().map_err(|e| invalid(e.to_string()))?;

    let eta_grid = raw.sweep.map(|s| expand_grid(&s.eta_grid)).transpose()?;

    let mut scan = ScanParams::auto(&system.dists());
    if let Some(s) = raw.scan {
        if let Some(v) = s.v_min {
            scan.v_min = v;
        }
        if let Some(v) = s.v_max {
            scan.v_max = v;
        }
        if let Some(n) = s.n_points {
            scan.n_points = n;
        }
        if let Some(t) = s.im_tolerance {
            scan.im_tolerance = t;
        }
        if let Some(t) = s.refine_tolerance {
            scan.refine_tolerance = t;
        }
    }
    scan.validate().map_err(|e| invalid(e.to_string()))?;

    let mut verify = VerifyParams::default();
    if let Some(v) = raw.verify {
        if let Some(t) = v.rel_tolerance {
            verify.rel_tolerance = t;
        }
        if let Some(t) = v.abs_tolerance {
            verify.abs_tolerance = t;
        }
        if let Some(c) = v.onset_coeff {
            verify.onset_coeff = c;
        }
        if let Some(mrg) = v.onset_margin {
            verify.onset_margin = mrg;
        }
    }
    for (name, value) in [
        ("rel_tolerance", verify.rel_tolerance),
        ("abs_tolerance", verify.abs_tolerance),
        ("onset_coeff", verify.onset_coeff),
        ("onset_margin", verify.onset_margin),
    ] {
        if !value.is_finite() || value < 0.0 {
            return Err(invalid(format!(
                "[verify] {name} = {value} must be finite and non-negative"
            )));
        }
    }

    Ok(LoadedConfig {
        system,
        sim,
        eta_grid,
        scan,
        verify,
        output_dir: raw.output.map(|o| o.dir).unwrap_or_else(|| PathBuf::from(".")),
    })
}

fn expand_grid(grid: &RawGrid) -> Result<Vec<f64>, ConfigError> {
    let values = match grid {
        RawGrid::List(values) => values.clone(),
        RawGrid::Range(r) => {
            if !r.min.is_finite() || !r.max.is_finite() || !r.step.is_finite() {
                return Err(invalid("eta_grid range bounds must be finite"));
            }
            if r.step <= 0.0 {
                return Err(invalid(format!("eta_grid step = {} must be positive", r.step)));
            }
            if r.max < r.min {
                return Err(invalid(format!(
                    "eta_grid range is empty: max {} < min {}",
                    r.max, r.min
                )));
            }
            // A hair of slack so max lands on the grid despite rounding.
            let count = ((r.max - r.min) / r.step + 1e-9).floor() as usize + 1;
            if count > MAX_GRID_POINTS {
                return Err(invalid(format!(
                    "eta_grid expands to {count} points (limit {MAX_GRID_POINTS})"
                )));
            }
            (0..count).map(|i| r.min + r.step * i as f64).collect()
        }
    };
    if values.is_empty() {
        return Err(invalid("eta_grid is empty"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("eta_grid contains a non-finite value"));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [system]
        populations = [
            { n = 100, omega0 = 2.0, delta = 1.0 },
            { n = 100, omega0 = 2.0, delta = 1.0 },
        ]
        [system.coupling]
        k = [[1.0, -1.0], [1.0, 0.0]]
    "#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.system.n_populations(), 2);
        assert_eq!(cfg.sim.dt, 0.02);
        assert_eq!(cfg.sim.seed, 0);
        assert_eq!(cfg.sim.sampling_mode, SamplingMode::Deterministic);
        assert_eq!(cfg.system.coupling.eta, 0.0);
        assert!(cfg.system.coupling.alpha.iter().flatten().all(|&a| a == 0.0));
        assert!(cfg.eta_grid.is_none());
        assert_eq!(cfg.verify.rel_tolerance, 0.10);
        assert_eq!(cfg.output_dir, PathBuf::from("."));
        // Auto scan window: resonance at -2, padded by 20 half-widths.
        assert_eq!(cfg.scan.v_min, -22.0);
        assert_eq!(cfg.scan.v_max, 18.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\n[sim]\ndtt = 0.1\n");
        let err = parse_config(&text).unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)), "{err}");
    }

    #[test]
    fn invalid_system_is_rejected() {
        let text = MINIMAL.replace("delta = 1.0 },\n        ]", "delta = 0.0 },\n        ]");
        let err = parse_config(&text).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)), "{err}");
    }

    #[test]
    fn grid_range_expands_inclusively() {
        let text = format!("{MINIMAL}\n[sweep]\neta_grid = {{ min = -1.0, max = 1.0, step = 0.5 }}\n");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.eta_grid.unwrap(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn grid_list_passes_through() {
        let text = format!("{MINIMAL}\n[sweep]\neta_grid = [3.0, 1.0, -2.0]\n");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.eta_grid.unwrap(), vec![3.0, 1.0, -2.0]);
    }

    #[test]
    fn bad_grids_are_rejected() {
        for grid in [
            "eta_grid = { min = 1.0, max = -1.0, step = 0.5 }",
            "eta_grid = { min = 0.0, max = 1.0, step = 0.0 }",
            "eta_grid = { min = 0.0, max = 1e6, step = 1e-9 }",
            "eta_grid = []",
        ] {
            let text = format!("{MINIMAL}\n[sweep]\n{grid}\n");
            assert!(parse_config(&text).is_err(), "accepted {grid}");
        }
    }

    #[test]
    fn scan_overrides_apply() {
        let text = format!("{MINIMAL}\n[scan]\nv_min = -5.0\nv_max = 5.0\nn_points = 101\n");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.scan.v_min, -5.0);
        assert_eq!(cfg.scan.v_max, 5.0);
        assert_eq!(cfg.scan.n_points, 101);
        assert_eq!(cfg.scan.im_tolerance, popsync::analyzer::DEFAULT_IM_TOLERANCE);
    }

    #[test]
    fn inverted_scan_window_is_rejected() {
        let text = format!("{MINIMAL}\n[scan]\nv_min = 5.0\nv_max = -5.0\n");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn sampling_mode_parses_from_lowercase_names() {
        let text = format!("{MINIMAL}\n[sim]\nsampling = \"random\"\nseed = 9\n");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.sim.sampling_mode, SamplingMode::Random);
        assert_eq!(cfg.sim.seed, 9);
    }
}
