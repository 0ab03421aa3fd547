//! Shared domain types: frequency distributions, populations, coupling, and
//! the solution sets produced by the critical-coupling analysis.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

/// Cauchy-Lorentz natural-frequency distribution of one population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianSpec {
    /// Center (mean) frequency Omega.
    pub omega0: f64,
    /// Half-width at half-maximum; must be strictly positive.
    pub delta: f64,
}

impl LorentzianSpec {
    pub fn new(omega0: f64, delta: f64) -> Self {
        Self { omega0, delta }
    }
}

/// One oscillator population: ensemble size plus its frequency distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    /// Number of oscillators; must be at least 1.
    pub n: usize,
    pub dist: LorentzianSpec,
}

impl PopulationSpec {
    pub fn new(n: usize, omega0: f64, delta: f64) -> Self {
        Self {
            n,
            dist: LorentzianSpec::new(omega0, delta),
        }
    }
}

/// Inter-population coupling: signed strengths `k`, phase lags `alpha`, and
/// the global scale `eta` multiplying every entry of `k`.
///
/// Row `s` of `k` lists what population `s` *receives* from each source
/// population, i.e. `k[s][s2]` couples source `s2` into target `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSpec {
    pub k: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<f64>>,
    pub eta: f64,
}

impl CouplingSpec {
    /// Coupling with all phase lags zero.
    pub fn lag_free(k: Vec<Vec<f64>>, eta: f64) -> Self {
        let m = k.len();
        Self {
            k,
            alpha: vec![vec![0.0; m]; m],
            eta,
        }
    }

    /// Number of populations this coupling connects.
    pub fn dim(&self) -> usize {
        self.k.len()
    }

    /// The complex coupling matrix `eta * k * exp(-i alpha)` entering both the
    /// mean-field equations and the marginal-stability condition.
    pub fn complex_coupling(&self) -> DMatrix<Complex64> {
        self.scaled_complex_coupling(self.eta)
    }

    /// Complex coupling with `eta` replaced by 1, for analyses that treat the
    /// global scale as the unknown.
    pub fn unit_complex_coupling(&self) -> DMatrix<Complex64> {
        self.scaled_complex_coupling(1.0)
    }

    fn scaled_complex_coupling(&self, eta: f64) -> DMatrix<Complex64> {
        let m = self.dim();
        DMatrix::from_fn(m, m, |s, s2| {
            let (sin_a, cos_a) = self.alpha[s][s2].sin_cos();
            // e^{-i alpha} = cos(alpha) - i sin(alpha); exact 1+0i for alpha = 0.
            Complex64::new(cos_a, -sin_a) * (eta * self.k[s][s2])
        })
    }

    pub fn k_matrix(&self) -> DMatrix<f64> {
        let m = self.dim();
        DMatrix::from_fn(m, m, |s, s2| self.k[s][s2])
    }

    pub fn alpha_matrix(&self) -> DMatrix<f64> {
        let m = self.dim();
        DMatrix::from_fn(m, m, |s, s2| self.alpha[s][s2])
    }
}

/// Full system description: the populations and how they are coupled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub populations: Vec<PopulationSpec>,
    pub coupling: CouplingSpec,
}

impl SystemConfig {
    pub fn new(populations: Vec<PopulationSpec>, coupling: CouplingSpec) -> Self {
        Self {
            populations,
            coupling,
        }
    }

    pub fn n_populations(&self) -> usize {
        self.populations.len()
    }

    pub fn total_oscillators(&self) -> usize {
        self.populations.iter().map(|p| p.n).sum()
    }

    /// Frequency distributions of all populations, in population order.
    pub fn dists(&self) -> Vec<LorentzianSpec> {
        self.populations.iter().map(|p| p.dist).collect()
    }

    /// Checks every structural invariant, reporting the first violation found.
    ///
    /// Check order: matrix shapes, population count vs coupling dimension,
    /// then per-population values in index order, then coupling values.
    pub fn validate(&self) -> Result<(), ValidationError> {
        let m = self.coupling.k.len();
        for (row, r) in self.coupling.k.iter().enumerate() {
            if r.len() != m {
                return Err(ValidationError::RaggedMatrix {
                    which: "k",
                    row,
                    len: r.len(),
                    expected: m,
                });
            }
        }
        if self.coupling.alpha.len() != m {
            return Err(ValidationError::CouplingShapeMismatch {
                k_dim: m,
                alpha_rows: self.coupling.alpha.len(),
            });
        }
        for (row, r) in self.coupling.alpha.iter().enumerate() {
            if r.len() != m {
                return Err(ValidationError::RaggedMatrix {
                    which: "alpha",
                    row,
                    len: r.len(),
                    expected: m,
                });
            }
        }
        if self.populations.is_empty() {
            return Err(ValidationError::NoPopulations);
        }
        if self.populations.len() != m {
            return Err(ValidationError::PopulationCountMismatch {
                populations: self.populations.len(),
                coupling_dim: m,
            });
        }
        for (idx, pop) in self.populations.iter().enumerate() {
            if !pop.dist.delta.is_finite() || pop.dist.delta <= 0.0 {
                return Err(ValidationError::NonpositiveDelta {
                    population: idx,
                    delta: pop.dist.delta,
                });
            }
            if !pop.dist.omega0.is_finite() {
                return Err(ValidationError::NonfiniteOmega {
                    population: idx,
                    omega0: pop.dist.omega0,
                });
            }
            if pop.n == 0 {
                return Err(ValidationError::ZeroOscillators { population: idx });
            }
        }
        if !self.coupling.eta.is_finite() {
            return Err(ValidationError::NonfiniteEta {
                eta: self.coupling.eta,
            });
        }
        for (row, (kr, ar)) in self
            .coupling
            .k
            .iter()
            .zip(self.coupling.alpha.iter())
            .enumerate()
        {
            for (col, (&kv, &av)) in kr.iter().zip(ar.iter()).enumerate() {
                if !kv.is_finite() || !av.is_finite() {
                    return Err(ValidationError::NonfiniteCouplingEntry { row, col });
                }
            }
        }
        Ok(())
    }
}

/// First structural violation found by [`SystemConfig::validate`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("system has no populations")]
    NoPopulations,
    #[error("{which} row {row} has {len} entries, expected {expected} (matrix must be square)")]
    RaggedMatrix {
        which: &'static str,
        row: usize,
        len: usize,
        expected: usize,
    },
    #[error("k is {k_dim}x{k_dim} but alpha has {alpha_rows} rows")]
    CouplingShapeMismatch { k_dim: usize, alpha_rows: usize },
    #[error("{populations} population(s) but coupling is {coupling_dim}x{coupling_dim}")]
    PopulationCountMismatch {
        populations: usize,
        coupling_dim: usize,
    },
    #[error("population {population}: half-width delta = {delta} must be positive and finite")]
    NonpositiveDelta { population: usize, delta: f64 },
    #[error("population {population}: center frequency omega0 = {omega0} is not finite")]
    NonfiniteOmega { population: usize, omega0: f64 },
    #[error("population {population}: needs at least one oscillator")]
    ZeroOscillators { population: usize },
    #[error("coupling scale eta = {eta} is not finite")]
    NonfiniteEta { eta: f64 },
    #[error("coupling entry ({row}, {col}) is not finite")]
    NonfiniteCouplingEntry { row: usize, col: usize },
}

/// Magnitude `r` in [0, 1] and angle `psi` in [0, 2*pi) of one population's
/// mean phasor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderParameter {
    pub r: f64,
    pub psi: f64,
}

/// One point on a root branch of the marginal-stability condition: the complex
/// coupling scale at which a mode with marginal frequency `v` neither grows
/// nor decays. Real crossings of `eta` are physical thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthPoint {
    pub v: f64,
    pub eta: Complex64,
}

/// A physical critical coupling: real scale `eta_star` at marginal frequency
/// `v_star`, tagged with the root branch it was found on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalSolution {
    pub eta_star: f64,
    pub v_star: f64,
    pub branch_id: usize,
}

/// All critical couplings of a system, sorted by `eta_star`, with the two
/// dynamically relevant ones (closest to zero from either side) singled out:
/// growing `|eta|` from zero, these are the first thresholds reached.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CriticalSet {
    pub solutions: Vec<CriticalSolution>,
    pub relevant_negative: Option<f64>,
    pub relevant_positive: Option<f64>,
}

impl CriticalSet {
    /// Sorts the solutions by `eta_star` and extracts the relevant pair:
    /// largest negative and smallest positive threshold.
    pub fn from_solutions(mut solutions: Vec<CriticalSolution>) -> Self {
        solutions.sort_by(|a, b| a.eta_star.total_cmp(&b.eta_star));
        let relevant_negative = solutions
            .iter()
            .filter(|s| s.eta_star < 0.0)
            .map(|s| s.eta_star)
            .next_back();
        let relevant_positive = solutions
            .iter()
            .map(|s| s.eta_star)
            .find(|&eta| eta > 0.0);
        Self {
            solutions,
            relevant_negative,
            relevant_positive,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn eta_values(&self) -> Vec<f64> {
        self.solutions.iter().map(|s| s.eta_star).collect()
    }

    /// The relevant thresholds as a (negative, positive) pair of options.
    pub fn relevant(&self) -> (Option<f64>, Option<f64>) {
        (self.relevant_negative, self.relevant_positive)
    }
}

/// Maps an angle to the canonical interval [0, 2*pi).
///
/// `rem_euclid` alone can round up to exactly 2*pi for tiny negative inputs,
/// so that case is folded back to 0.
pub fn wrap_phase(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_pop_config() -> SystemConfig {
        SystemConfig::new(
            vec![
                PopulationSpec::new(100, 2.0, 1.0),
                PopulationSpec::new(50, 4.0, 0.5),
            ],
            CouplingSpec::lag_free(vec![vec![-1.0, -1.0], vec![1.0, 2.0]], 1.5),
        )
    }

    #[test]
    fn valid_config_passes_validation() {
        two_pop_config().validate().expect("config should be valid");
    }

    #[test]
    fn validation_reports_dimension_mismatch_first() {
        let mut config = two_pop_config();
        config.populations.pop();
        // Also break a population value; the dimension error must win.
        config.populations[0].dist.delta = -1.0;
        assert!(matches!(
            config.validate(),
            Err(ValidationError::PopulationCountMismatch {
                populations: 1,
                coupling_dim: 2
            })
        ));
    }

    #[test]
    fn validation_rejects_nonpositive_delta() {
        let mut config = two_pop_config();
        config.populations[1].dist.delta = 0.0;
        assert!(matches!(
            config.validate(),
            Err(ValidationError::NonpositiveDelta { population: 1, .. })
        ));
    }

    #[test]
    fn validation_rejects_empty_population() {
        let mut config = two_pop_config();
        config.populations[0].n = 0;
        assert!(matches!(
            config.validate(),
            Err(ValidationError::ZeroOscillators { population: 0 })
        ));
    }

    #[test]
    fn validation_rejects_ragged_coupling_rows() {
        let mut config = two_pop_config();
        config.coupling.k[1].push(3.0);
        assert!(matches!(
            config.validate(),
            Err(ValidationError::RaggedMatrix { which: "k", row: 1, .. })
        ));
    }

    #[test]
    fn complex_coupling_scales_k_and_applies_lag() {
        let coupling = CouplingSpec {
            k: vec![vec![2.0, -1.0], vec![0.5, 1.0]],
            alpha: vec![vec![0.0, std::f64::consts::FRAC_PI_2], vec![0.0, 0.0]],
            eta: 3.0,
        };
        let kbar = coupling.complex_coupling();
        assert_eq!(kbar[(0, 0)], Complex64::new(6.0, 0.0));
        // k * eta * e^{-i pi/2} = -3 * (-i) = 3i
        let lagged = kbar[(0, 1)];
        assert!((lagged.re).abs() < 1e-15 && (lagged.im - 3.0).abs() < 1e-15);
        assert_eq!(kbar[(1, 0)], Complex64::new(1.5, 0.0));
        // Lag-free entries must be exactly real.
        assert_eq!(kbar[(1, 1)].im, 0.0);
        let unit = coupling.unit_complex_coupling();
        assert_eq!(unit[(0, 0)], Complex64::new(2.0, 0.0));
    }

    #[test]
    fn critical_set_sorts_and_finds_relevant_pair() {
        let set = CriticalSet::from_solutions(vec![
            CriticalSolution {
                eta_star: 3.24,
                v_star: 0.0,
                branch_id: 0,
            },
            CriticalSolution {
                eta_star: -3.24,
                v_star: 0.0,
                branch_id: 1,
            },
            CriticalSolution {
                eta_star: 1.24,
                v_star: -1.0,
                branch_id: 0,
            },
            CriticalSolution {
                eta_star: -0.5,
                v_star: 2.0,
                branch_id: 1,
            },
        ]);
        assert_eq!(set.eta_values(), vec![-3.24, -0.5, 1.24, 3.24]);
        assert_eq!(set.relevant(), (Some(-0.5), Some(1.24)));
    }

    #[test]
    fn critical_set_handles_one_sided_and_empty_cases() {
        let positive_only = CriticalSet::from_solutions(vec![CriticalSolution {
            eta_star: 4.0,
            v_star: -2.0,
            branch_id: 0,
        }]);
        assert_eq!(positive_only.relevant(), (None, Some(4.0)));
        let empty = CriticalSet::from_solutions(vec![]);
        assert!(empty.is_empty());
        assert_eq!(empty.relevant(), (None, None));
    }

    #[test]
    fn wrap_phase_stays_in_canonical_interval() {
        for &theta in &[-1e-18, -0.1, 0.0, 1.0, TAU, TAU + 0.25, -7.0 * TAU - 0.3, 1e9] {
            let w = wrap_phase(theta);
            assert!(
                (0.0..TAU).contains(&w),
                "wrap_phase({theta}) = {w} escaped [0, 2pi)"
            );
        }
        assert_eq!(wrap_phase(-1e-18), 0.0, "tiny negatives must fold to zero");
    }

    #[test]
    fn system_config_round_trips_through_toml() {
        let config = two_pop_config();
        let text = toml::to_string(&config).expect("serialize");
        let back: SystemConfig = toml::from_str(&text).expect("deserialize");
        assert_eq!(back, config, "round-trip must preserve every field");
    }
}
