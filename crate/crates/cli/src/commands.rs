//! The four command pipelines, separated from I/O so tests can call them
//! directly: analyze (predict thresholds), simulate (one trial), sweep
//! (coupling grid), verify (predict, sweep, and compare onsets).

use popsync::analyzer::{
    evaluate_determinant, find_critical_couplings, identical_critical, residual_scale,
    AnalyzerError, IdenticalCaseInput, ScanReport,
};
use popsync::simulator::{
    detect_onset_with_threshold, run_trial, sweep_eta, SimError, SweepResult, TrialResult,
};
use popsync::CriticalSet;
use thiserror::Error;

use crate::config::{ConfigError, LoadedConfig, VerifyParams};

#[derive(Debug, Error)]
pub enum CmdError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("invalid run: {0}")]
    Sim(#[from] SimError),
    #[error("analysis failed: {0}")]
    Analyzer(#[from] AnalyzerError),
    #[error("closed form and scan disagree: {0}")]
    CrossCheck(String),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl CmdError {
    /// Process exit code: 2 for configuration or I/O problems, 3 when the
    /// analysis itself fails. (Verification mismatch is not an error; the
    /// caller maps it to exit 1.)
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Config(_) | CmdError::Sim(_) | CmdError::Io(_) => 2,
            CmdError::Analyzer(_) | CmdError::CrossCheck(_) => 3,
        }
    }
}

/// Which route produced the thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Trace/determinant closed form (two identical lag-free populations),
    /// cross-checked against the scan.
    ClosedForm,
    /// Determinant scan over the marginal frequency window.
    Scan,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::ClosedForm => "closed-form",
            Method::Scan => "scan",
        })
    }
}

#[derive(Debug, Clone)]
pub struct AnalyzeOutcome {
    pub report: ScanReport,
    /// |determinant| at each solution, relative to its natural scale;
    /// index-aligned with `report.critical.solutions`.
    pub residuals: Vec<f64>,
    pub method: Method,
}

/// Predicts the critical couplings for the configured system.
///
/// Two identical lag-free populations use the closed form, with the scan run
/// as an independent cross-check; any disagreement is an analysis failure.
/// Every other system is scanned.
pub fn run_analyze(cfg: &LoadedConfig) -> Result<AnalyzeOutcome, CmdError> {
    let dists = cfg.system.dists();
    let k = cfg.system.coupling.k_matrix();
    let alpha = cfg.system.coupling.alpha_matrix();
    let lag_free = alpha.iter().all(|&a| a == 0.0);
    let identical = dists.len() == 2 && dists[0] == dists[1] && lag_free;

    let (critical, warnings, method) = if identical {
        let input = IdenticalCaseInput::new(
            [[k[(0, 0)], k[(0, 1)]], [k[(1, 0)], k[(1, 1)]]],
            dists[0],
        )
        .expect("validated config");
        let closed = identical_critical(&input);
        let scanned = find_critical_couplings(&k, &alpha, &dists, &cfg.scan)?;
        cross_check(&closed, &scanned.critical, input.trace(), input.det())?;
        (closed, scanned.warnings, Method::ClosedForm)
    } else {
        let scanned = find_critical_couplings(&k, &alpha, &dists, &cfg.scan)?;
        (scanned.critical, scanned.warnings, Method::Scan)
    };

    let residuals = critical
        .solutions
        .iter()
        .map(|s| {
            evaluate_determinant(&k, &alpha, &dists, s.eta_star, s.v_star)
                .map(|det| det.norm() / residual_scale(&dists, s.v_star))
        })
        .collect::<Result<Vec<f64>, AnalyzerError>>()?;

    Ok(AnalyzeOutcome {
        report: ScanReport { critical, warnings },
        residuals,
        method,
    })
}

/// The closed form is exact, the scan independent; they must agree. The one
/// allowance: at a double root (T^2 = 4D exactly) Im(eta) only touches zero,
/// which a sign-change scan legitimately misses, so there the scan may be a
/// subset.
fn cross_check(
    closed: &CriticalSet,
    scanned: &CriticalSet,
    trace: f64,
    det: f64,
) -> Result<(), CmdError> {
    let tol = 1e-6;
    let pairs = |set: &CriticalSet| -> Vec<(f64, f64)> {
        set.solutions.iter().map(|s| (s.eta_star, s.v_star)).collect()
    };
    let closed_pairs = pairs(closed);
    let mut unclaimed = closed_pairs.clone();
    for s in pairs(scanned) {
        let hit = unclaimed.iter().position(|c| {
            (s.0 - c.0).abs() < tol * c.0.abs().max(1.0) && (s.1 - c.1).abs() < tol
        });
        match hit {
            Some(i) => {
                unclaimed.swap_remove(i);
            }
            None => {
                return Err(CmdError::CrossCheck(format!(
                    "scan found (eta*, v*) = ({}, {}) with no closed-form counterpart",
                    s.0, s.1
                )))
            }
        }
    }
    let tangential = trace * trace == 4.0 * det;
    if !unclaimed.is_empty() && !tangential {
        return Err(CmdError::CrossCheck(format!(
            "scan missed closed-form solutions {unclaimed:?}"
        )));
    }
    Ok(())
}

/// Runs a single trial at the system's configured coupling scale.
pub fn run_simulate(cfg: &LoadedConfig) -> Result<TrialResult, CmdError> {
    Ok(run_trial(&cfg.system, &cfg.sim)?)
}

/// Sweeps the coupling grid; requires `[sweep] eta_grid` in the config.
pub fn run_sweep(cfg: &LoadedConfig) -> Result<SweepResult, CmdError> {
    let grid = cfg.eta_grid.as_ref().ok_or_else(|| {
        ConfigError::Invalid("this command needs [sweep] eta_grid".into())
    })?;
    Ok(sweep_eta(&cfg.system, grid, &cfg.sim)?)
}

/// One predicted threshold judged against the detected onsets.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub eta_star: f64,
    /// Nearest detected onset, if any onset was detected at all.
    pub onset: Option<f64>,
    pub abs_error: Option<f64>,
    pub rel_error: Option<f64>,
    /// The absolute error bound this prediction had to meet.
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutcome {
    pub rows: Vec<VerifyRow>,
    /// Detected onsets that sit outside every prediction's tolerance; they
    /// do not fail the run but deserve eyes.
    pub unexpected_onsets: Vec<f64>,
    /// True when there was nothing to check: no predictions and no onsets.
    pub vacuous: bool,
    pub pass: bool,
}

/// Absolute error allowed between a prediction and its onset: a fraction of
/// |eta*|, widened to an absolute floor for thresholds within 1 of zero.
pub fn tolerance_bound(eta_star: f64, params: &VerifyParams) -> f64 {
    let rel = params.rel_tolerance * eta_star.abs();
    if eta_star.abs() <= 1.0 {
        rel.max(params.abs_tolerance)
    } else {
        rel
    }
}

/// Pairs every predicted threshold with the nearest detected onset and
/// judges the match. Pure function of its inputs.
pub fn compare_predictions(
    predictions: &[f64],
    onsets: &[f64],
    params: &VerifyParams,
) -> VerifyOutcome {
    let rows: Vec<VerifyRow> = predictions
        .iter()
        .map(|&p| {
            let tolerance = tolerance_bound(p, params);
            let onset = onsets
                .iter()
                .copied()
                .min_by(|a, b| (a - p).abs().total_cmp(&(b - p).abs()));
            let abs_error = onset.map(|o| (o - p).abs());
            let rel_error = abs_error.map(|e| e / p.abs().max(f64::MIN_POSITIVE));
            VerifyRow {
                eta_star: p,
                onset,
                abs_error,
                rel_error,
                pass: abs_error.is_some_and(|e| e <= tolerance),
                tolerance,
            }
        })
        .collect();
    let unexpected_onsets: Vec<f64> = onsets
        .iter()
        .copied()
        .filter(|&o| {
            !predictions
                .iter()
                .any(|&p| (o - p).abs() <= tolerance_bound(p, params))
        })
        .collect();
    VerifyOutcome {
        vacuous: rows.is_empty() && onsets.is_empty(),
        pass: rows.iter().all(|r| r.pass),
        rows,
        unexpected_onsets,
    }
}

#[derive(Debug, Clone)]
pub struct VerifyBundle {
    pub analysis: AnalyzeOutcome,
    pub sweep: SweepResult,
    /// Every onset detected in any population, ascending.
    pub onsets: Vec<f64>,
    pub outcome: VerifyOutcome,
}

/// Full verification pipeline: predict thresholds, sweep the grid, detect
/// onsets in every population, and judge the relevant predictions.
pub fn run_verify(cfg: &LoadedConfig) -> Result<VerifyBundle, CmdError> {
    let analysis = run_analyze(cfg)?;
    let sweep = run_sweep(cfg)?;
    let mut onsets: Vec<f64> = Vec::new();
    for (p, pop) in cfg.system.populations.iter().enumerate() {
        let threshold =
            cfg.verify.onset_coeff / (pop.n as f64).sqrt() + cfg.verify.onset_margin;
        onsets.extend(detect_onset_with_threshold(&sweep, p, threshold)?);
    }
    onsets.sort_by(f64::total_cmp);
    let (neg, pos) = analysis.report.critical.relevant();
    let predictions: Vec<f64> = [neg, pos].into_iter().flatten().collect();
    let outcome = compare_predictions(&predictions, &onsets, &cfg.verify);
    Ok(VerifyBundle {
        analysis,
        sweep,
        onsets,
        outcome,
    })
}
