//! CSV writers. Every file starts with `#`-prefixed metadata lines and stays
//! plottable by anything that skips comments; numbers use the shortest
//! round-trip decimal form.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use popsync::distributions::SamplingMode;
use popsync::simulator::SweepResult;

use crate::commands::{AnalyzeOutcome, VerifyBundle};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn sampling_label(mode: SamplingMode) -> &'static str {
    match mode {
        SamplingMode::Deterministic => "deterministic",
        SamplingMode::Random => "random",
    }
}

fn join(values: impl IntoIterator<Item = impl ToString>) -> String {
    values
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Writes `critical.csv`: one row per distinct threshold. A threshold that is
/// marginal at two frequencies (a repeated eta with distinct v) is reported
/// once, at the lower frequency.
pub fn write_critical_csv(dir: &Path, outcome: &AnalyzeOutcome) -> std::io::Result<PathBuf> {
    let path = dir.join("critical.csv");
    let mut f = BufWriter::new(File::create(&path)?);
    writeln!(f, "# tool: popsync {TOOL_VERSION}")?;
    writeln!(f, "# method: {}", outcome.method)?;
    let set = &outcome.report.critical;
    let fmt_opt = |v: Option<f64>| v.map_or_else(|| "none".into(), |x| x.to_string());
    writeln!(f, "# relevant_negative: {}", fmt_opt(set.relevant_negative))?;
    writeln!(f, "# relevant_positive: {}", fmt_opt(set.relevant_positive))?;
    for w in &outcome.report.warnings {
        writeln!(f, "# warning: {w}")?;
    }
    writeln!(f, "eta_star,v_star,branch_id,residual,is_relevant")?;
    for i in distinct_threshold_rows(set) {
        let s = &set.solutions[i];
        let is_relevant = set.relevant_negative == Some(s.eta_star)
            || set.relevant_positive == Some(s.eta_star);
        writeln!(
            f,
            "{},{},{},{},{}",
            s.eta_star, s.v_star, s.branch_id, outcome.residuals[i], is_relevant
        )?;
    }
    f.flush()?;
    Ok(path)
}

/// Indices of the solutions to print: solutions are ascending in eta, so
/// repeats are adjacent; each repeat group keeps its lowest-v member.
fn distinct_threshold_rows(set: &popsync::CriticalSet) -> Vec<usize> {
    let mut rows: Vec<usize> = Vec::new();
    for (i, s) in set.solutions.iter().enumerate() {
        match rows.last() {
            Some(&j)
                if (s.eta_star - set.solutions[j].eta_star).abs()
                    <= 1e-9 * set.solutions[j].eta_star.abs().max(1.0) =>
            {
                if s.v_star < set.solutions[j].v_star {
                    *rows.last_mut().unwrap() = i;
                }
            }
            _ => rows.push(i),
        }
    }
    rows
}

/// Writes `sweep.csv`: eta, then one r_mean and one r_std column per
/// population.
pub fn write_sweep_csv(dir: &Path, result: &SweepResult) -> std::io::Result<PathBuf> {
    let path = dir.join("sweep.csv");
    let mut f = BufWriter::new(File::create(&path)?);
    let meta = &result.metadata;
    writeln!(f, "# tool: popsync {TOOL_VERSION}")?;
    writeln!(f, "# seed: {}", meta.seed)?;
    writeln!(f, "# dt: {}", meta.dt)?;
    writeln!(f, "# t_transient: {}", meta.t_transient)?;
    writeln!(f, "# t_average: {}", meta.t_average)?;
    writeln!(f, "# sampling: {}", sampling_label(meta.sampling_mode))?;
    writeln!(f, "# rng: {}", meta.rng_algorithm)?;
    writeln!(f, "# populations: {}", join(&meta.population_sizes))?;
    let m = meta.population_sizes.len();
    let mean_cols = join((1..=m).map(|p| format!("r_mean_{p}")));
    let std_cols = join((1..=m).map(|p| format!("r_std_{p}")));
    writeln!(f, "eta,{mean_cols},{std_cols}")?;
    for (i, eta) in result.eta_values.iter().enumerate() {
        let means = join((0..m).map(|p| result.r_mean[p][i]));
        let stds = join((0..m).map(|p| result.r_std[p][i]));
        writeln!(f, "{eta},{means},{stds}")?;
    }
    f.flush()?;
    Ok(path)
}

/// Writes `verify.csv`: one row per relevant predicted threshold, paired
/// with its nearest detected onset.
pub fn write_verify_csv(dir: &Path, bundle: &VerifyBundle) -> std::io::Result<PathBuf> {
    let path = dir.join("verify.csv");
    let mut f = BufWriter::new(File::create(&path)?);
    let outcome = &bundle.outcome;
    writeln!(f, "# tool: popsync {TOOL_VERSION}")?;
    writeln!(f, "# vacuous: {}", outcome.vacuous)?;
    if bundle.onsets.is_empty() {
        writeln!(f, "# detected_onsets: none")?;
    } else {
        writeln!(f, "# detected_onsets: {}", join(&bundle.onsets))?;
    }
    for o in &outcome.unexpected_onsets {
        writeln!(f, "# unexpected_onset: {o}")?;
    }
    writeln!(f, "eta_star,onset,abs_error,rel_error,tolerance,pass")?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for row in &outcome.rows {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            row.eta_star,
            cell(row.onset),
            cell(row.abs_error),
            cell(row.rel_error),
            row.tolerance,
            row.pass
        )?;
    }
    f.flush()?;
    Ok(path)
}
