//! Critical-coupling analysis.
//!
//! The incoherent state of a coupled-population system loses stability when
//! some perturbation mode with marginal frequency `v` stops decaying. That
//! happens exactly where det(eta * kbar - diag(c(v))) = 0 with a *real*
//! coupling scale eta; the real crossings of the complex root branches
//! eta_b(v) are therefore the system's critical couplings.
//!
//! [`find_critical_couplings`] locates them by scanning `v` over a window,
//! tracking branches, and bisecting every sign change of Im(eta_b(v)).
//! [`identical_critical`] is the closed form for two identical populations,
//! used as an independent check of the scan. [`evaluate_determinant`] feeds
//! residual checks through plain LU, sharing nothing with the eigenvalue
//! route.

mod branches;
mod pencil;

pub use branches::{build_branches, BranchSet};
pub use pencil::{dispersion_roots_at, marginal_term, two_pop_quadratic_roots};

use crate::model::{CriticalSet, CriticalSolution, LorentzianSpec, ValidationError};
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::fmt;
use thiserror::Error;

pub const DEFAULT_N_POINTS: usize = 4001;
pub const DEFAULT_IM_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_REFINE_TOLERANCE: f64 = 1e-10;
/// Window margin beyond the extreme resonances, in units of the largest
/// half-width.
pub const DEFAULT_WINDOW_MARGIN: f64 = 20.0;

/// Scan window and tolerances for [`find_critical_couplings`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScanParams {
    pub v_min: f64,
    pub v_max: f64,
    /// Grid resolution across [v_min, v_max]; at least 2.
    pub n_points: usize,
    /// A root is accepted as real when |Im eta| < im_tolerance * max(1, |eta|).
    pub im_tolerance: f64,
    /// Bisection stops when the bracket on v is narrower than this.
    pub refine_tolerance: f64,
}

impl ScanParams {
    /// Default window: every population's resonance at v = -Omega, padded by
    /// 20 of the largest half-widths on both sides.
    pub fn auto(dists: &[LorentzianSpec]) -> Self {
        assert!(!dists.is_empty(), "scan window needs at least one population");
        let lo = dists
            .iter()
            .map(|d| -d.omega0)
            .fold(f64::INFINITY, f64::min);
        let hi = dists
            .iter()
            .map(|d| -d.omega0)
            .fold(f64::NEG_INFINITY, f64::max);
        let margin = DEFAULT_WINDOW_MARGIN
            * dists.iter().map(|d| d.delta).fold(0.0_f64, f64::max);
        Self {
            v_min: lo - margin,
            v_max: hi + margin,
            n_points: DEFAULT_N_POINTS,
            im_tolerance: DEFAULT_IM_TOLERANCE,
            refine_tolerance: DEFAULT_REFINE_TOLERANCE,
        }
    }

    pub fn validate(&self) -> Result<(), AnalyzerError> {
        if !self.v_min.is_finite() || !self.v_max.is_finite() || self.v_min >= self.v_max {
            return Err(AnalyzerError::InvalidScan(format!(
                "window [{}, {}] must be finite and increasing",
                self.v_min, self.v_max
            )));
        }
        if self.n_points < 2 {
            return Err(AnalyzerError::InvalidScan(format!(
                "n_points = {} must be at least 2",
                self.n_points
            )));
        }
        if !self.im_tolerance.is_finite() || self.im_tolerance <= 0.0 {
            return Err(AnalyzerError::InvalidScan(format!(
                "im_tolerance = {} must be positive",
                self.im_tolerance
            )));
        }
        if !self.refine_tolerance.is_finite() || self.refine_tolerance <= 0.0 {
            return Err(AnalyzerError::InvalidScan(format!(
                "refine_tolerance = {} must be positive",
                self.refine_tolerance
            )));
        }
        Ok(())
    }

    /// Uniform grid over the window.
    pub fn grid(&self) -> Vec<f64> {
        let h = self.cell();
        (0..self.n_points)
            .map(|i| {
                if i + 1 == self.n_points {
                    self.v_max
                } else {
                    self.v_min + i as f64 * h
                }
            })
            .collect()
    }

    /// Grid spacing.
    pub fn cell(&self) -> f64 {
        (self.v_max - self.v_min) / (self.n_points - 1) as f64
    }
}

/// Quality notes attached to a scan result.
#[derive(Debug, Clone, PartialEq)]
pub enum ScanWarning {
    /// A solution sits within one grid cell of the window edge; more may lie
    /// beyond. Widen the window to be sure.
    NearWindowEdge { eta_star: f64, v_star: f64 },
}

impl fmt::Display for ScanWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScanWarning::NearWindowEdge { eta_star, v_star } => write!(
                f,
                "solution eta* = {eta_star} at v* = {v_star} lies within one grid cell of the window edge; widen the scan window"
            ),
        }
    }
}

/// Scan result: the critical couplings plus any quality warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanReport {
    pub critical: CriticalSet,
    pub warnings: Vec<ScanWarning>,
}

/// Failures of the analysis itself (as opposed to invalid system configs).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyzerError {
    #[error("invalid scan parameters: {0}")]
    InvalidScan(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("eigenvalue solver failed to converge at v = {v}")]
    Eigensolver { v: f64 },
    #[error(
        "root count changed along the scan at v = {v}: found {found}, expected {expected}; \
         the coupling matrix is near rank-deficient at working precision"
    )]
    BranchCountChange {
        v: f64,
        expected: usize,
        found: usize,
    },
}

pub(crate) fn unit_complex_coupling_from(
    k: &DMatrix<f64>,
    alpha: &DMatrix<f64>,
    m: usize,
) -> Result<DMatrix<Complex64>, AnalyzerError> {
    if k.nrows() != m || k.ncols() != m || alpha.nrows() != m || alpha.ncols() != m {
        return Err(AnalyzerError::Dimension(format!(
            "k is {}x{} and alpha is {}x{}, expected {m}x{m}",
            k.nrows(),
            k.ncols(),
            alpha.nrows(),
            alpha.ncols()
        )));
    }
    Ok(DMatrix::from_fn(m, m, |i, j| {
        let (sin_a, cos_a) = alpha[(i, j)].sin_cos();
        Complex64::new(cos_a, -sin_a) * k[(i, j)]
    }))
}

/// Finds every real critical coupling of the system inside the scan window.
///
/// Builds the root branches, brackets each sign change of Im(eta) (grid nodes
/// where it vanishes exactly count directly), bisects the bracket down to
/// `refine_tolerance` re-solving and re-pairing the roots at each midpoint,
/// and keeps crossings whose residual imaginary part passes `im_tolerance`.
/// Near-duplicates (within 10x im_tolerance in both eta and v) are merged,
/// and solutions hugging the window edge produce warnings.
pub fn find_critical_couplings(
    k: &DMatrix<f64>,
    alpha: &DMatrix<f64>,
    dists: &[LorentzianSpec],
    scan: &ScanParams,
) -> Result<ScanReport, AnalyzerError> {
    scan.validate()?;
    let kbar = unit_complex_coupling_from(k, alpha, dists.len())?;
    let set = branches::build_branches_from(&kbar, dists, scan)?;
    let grid = &set.v_grid;
    let mut solutions: Vec<CriticalSolution> = Vec::new();
    for b in 0..set.n_branches() {
        let branch = &set.roots[b];
        for i in 0..grid.len() {
            if branch[i].im == 0.0 {
                push_if_real(&mut solutions, grid[i], branch[i], b, scan);
            }
        }
        for i in 0..grid.len() - 1 {
            if branch[i].im * branch[i + 1].im < 0.0 {
                let reference = set.cross_section(i);
                let (v, eta) =
                    refine_crossing(&kbar, dists, &reference, b, grid[i], grid[i + 1], scan)?;
                push_if_real(&mut solutions, v, eta, b, scan);
            }
        }
    }
    dedup_solutions(&mut solutions, 10.0 * scan.im_tolerance);
    let critical = CriticalSet::from_solutions(solutions);
    let cell = scan.cell();
    let warnings = critical
        .solutions
        .iter()
        .filter(|s| s.v_star - scan.v_min <= cell || scan.v_max - s.v_star <= cell)
        .map(|s| ScanWarning::NearWindowEdge {
            eta_star: s.eta_star,
            v_star: s.v_star,
        })
        .collect();
    Ok(ScanReport { critical, warnings })
}

fn push_if_real(
    out: &mut Vec<CriticalSolution>,
    v: f64,
    eta: Complex64,
    branch: usize,
    scan: &ScanParams,
) {
    if eta.im.abs() < scan.im_tolerance * eta.norm().max(1.0) {
        out.push(CriticalSolution {
            eta_star: eta.re,
            v_star: v,
            branch_id: branch,
        });
    }
}

/// Bisects a bracketed sign change of Im(eta) on one branch. `reference`
/// holds all branch values at the left grid node; every midpoint re-solves the
/// dispersion condition and re-pairs against the evolving left end so the
/// bisection stays on the same branch.
fn refine_crossing(
    kbar: &DMatrix<Complex64>,
    dists: &[LorentzianSpec],
    reference: &[Complex64],
    branch: usize,
    mut vl: f64,
    mut vr: f64,
    scan: &ScanParams,
) -> Result<(f64, Complex64), AnalyzerError> {
    let mut left = reference.to_vec();
    let left_positive = left[branch].im > 0.0;
    while vr - vl > scan.refine_tolerance {
        let vm = 0.5 * (vl + vr);
        if vm <= vl || vm >= vr {
            break; // bracket has collapsed to adjacent floats
        }
        let mid = ordered_roots_at(kbar, dists, vm, &left)?;
        let im = mid[branch].im;
        if im == 0.0 {
            return Ok((vm, mid[branch]));
        }
        if (im > 0.0) == left_positive {
            vl = vm;
            left = mid;
        } else {
            vr = vm;
        }
    }
    let v = 0.5 * (vl + vr);
    let final_roots = ordered_roots_at(kbar, dists, v, &left)?;
    Ok((v, final_roots[branch]))
}

fn ordered_roots_at(
    kbar: &DMatrix<Complex64>,
    dists: &[LorentzianSpec],
    v: f64,
    reference: &[Complex64],
) -> Result<Vec<Complex64>, AnalyzerError> {
    let roots = pencil::dispersion_roots_at(kbar, dists, v)?;
    if roots.len() != reference.len() {
        return Err(AnalyzerError::BranchCountChange {
            v,
            expected: reference.len(),
            found: roots.len(),
        });
    }
    Ok(branches::apply_pairing(reference, roots))
}

fn dedup_solutions(solutions: &mut Vec<CriticalSolution>, radius: f64) {
    let mut kept: Vec<CriticalSolution> = Vec::new();
    for s in solutions.drain(..) {
        let duplicate = kept.iter().any(|k| {
            let scale = k.eta_star.abs().max(1.0);
            (k.eta_star - s.eta_star).abs() <= radius * scale
                && (k.v_star - s.v_star).abs() <= radius * scale
        });
        if !duplicate {
            kept.push(s);
        }
    }
    *solutions = kept;
}

/// Two identical populations under a 2x2 lag-free coupling; the critical
/// couplings depend only on the coupling's trace and determinant and on the
/// shared distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdenticalCaseInput {
    k: [[f64; 2]; 2],
    dist: LorentzianSpec,
    trace: f64,
    det: f64,
}

impl IdenticalCaseInput {
    pub fn new(k: [[f64; 2]; 2], dist: LorentzianSpec) -> Result<Self, ValidationError> {
        if !dist.delta.is_finite() || dist.delta <= 0.0 {
            return Err(ValidationError::NonpositiveDelta {
                population: 0,
                delta: dist.delta,
            });
        }
        if !dist.omega0.is_finite() {
            return Err(ValidationError::NonfiniteOmega {
                population: 0,
                omega0: dist.omega0,
            });
        }
        for (row, r) in k.iter().enumerate() {
            for (col, &entry) in r.iter().enumerate() {
                if !entry.is_finite() {
                    return Err(ValidationError::NonfiniteCouplingEntry { row, col });
                }
            }
        }
        Ok(Self {
            k,
            dist,
            trace: k[0][0] + k[1][1],
            det: k[0][0] * k[1][1] - k[0][1] * k[1][0],
        })
    }

    pub fn k(&self) -> [[f64; 2]; 2] {
        self.k
    }

    pub fn dist(&self) -> LorentzianSpec {
        self.dist
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn det(&self) -> f64 {
        self.det
    }
}

/// Closed-form critical couplings for two identical populations, classified
/// by the coupling's trace T and determinant D (Delta, Omega shared):
///
/// * T = 0, D < 0: eta* = ±2 Delta / sqrt(-D) at v* = -Omega;
/// * T = 0, D >= 0: no finite threshold;
/// * D = 0 (T != 0): the single root eta* = 2 Delta / T at v* = -Omega;
/// * T^2 > 4D: eta* = Delta (T ± sqrt(T^2 - 4D)) / D at v* = -Omega;
/// * T^2 <= 4D: eta* = 4 Delta / T at v* = -Omega ± (Delta/T) sqrt(4D - T^2).
pub fn identical_critical(input: &IdenticalCaseInput) -> CriticalSet {
    let t = input.trace;
    let d = input.det;
    let delta = input.dist.delta;
    let resonance = -input.dist.omega0;
    let mut solutions = Vec::new();
    if t == 0.0 {
        if d < 0.0 {
            let eta = 2.0 * delta / (-d).sqrt();
            solutions.push(CriticalSolution {
                eta_star: eta,
                v_star: resonance,
                branch_id: 0,
            });
            solutions.push(CriticalSolution {
                eta_star: -eta,
                v_star: resonance,
                branch_id: 1,
            });
        }
    } else if d == 0.0 {
        solutions.push(CriticalSolution {
            eta_star: 2.0 * delta / t,
            v_star: resonance,
            branch_id: 0,
        });
    } else if t * t > 4.0 * d {
        let root = (t * t - 4.0 * d).sqrt();
        solutions.push(CriticalSolution {
            eta_star: delta * (t + root) / d,
            v_star: resonance,
            branch_id: 0,
        });
        solutions.push(CriticalSolution {
            eta_star: delta * (t - root) / d,
            v_star: resonance,
            branch_id: 1,
        });
    } else {
        let s = (4.0 * d - t * t).sqrt();
        let eta = 4.0 * delta / t;
        solutions.push(CriticalSolution {
            eta_star: eta,
            v_star: resonance + delta * s / t,
            branch_id: 0,
        });
        solutions.push(CriticalSolution {
            eta_star: eta,
            v_star: resonance - delta * s / t,
            branch_id: 1,
        });
    }
    CriticalSet::from_solutions(solutions)
}

/// det(eta * kbar - diag(c(v))) straight through LU — an independent residual
/// check on any claimed solution (the value should vanish at a true one).
pub fn evaluate_determinant(
    k: &DMatrix<f64>,
    alpha: &DMatrix<f64>,
    dists: &[LorentzianSpec],
    eta: f64,
    v: f64,
) -> Result<Complex64, AnalyzerError> {
    let m = dists.len();
    let kbar = unit_complex_coupling_from(k, alpha, m)?;
    let c = pencil::diagonal_terms(dists, v);
    let mut mat = kbar * Complex64::new(eta, 0.0);
    for s in 0..m {
        mat[(s, s)] -= c[s];
    }
    Ok(mat.lu().determinant())
}

/// Natural size of the determinant at marginal frequency `v`: the product of
/// max(1, |c(v)|) over populations. Residuals should be compared against it.
pub fn residual_scale(dists: &[LorentzianSpec], v: f64) -> f64 {
    pencil::diagonal_terms(dists, v)
        .iter()
        .map(|c| c.norm().max(1.0))
        .product()
}

/// Complex decay rates s = -Delta - i Omega of each population's mean phasor
/// at zero coupling. Every real part is strictly negative, so incoherence is
/// always stable when the populations are uncoupled.
pub fn growth_rate_at_zero_coupling(dists: &[LorentzianSpec]) -> Vec<Complex64> {
    dists
        .iter()
        .map(|d| Complex64::new(-d.delta, -d.omega0))
        .collect()
}
