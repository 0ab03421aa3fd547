//! Direct integration of the full phase model: fixed-step RK4 trials, order
//! parameter statistics, sweeps over the coupling scale, and empirical onset
//! detection.
//!
//! The derivative uses the exact mean-field form of the coupling: each
//! population's mean phasor z_s is computed once per stage, collapsed into a
//! per-target field `Z_s = sum_t eta k[s][t] e^{-i alpha[s][t]} z_t`, and
//! every oscillator then feels `d theta = omega + Im(Z_s e^{-i theta})`. This is
//! algebraically identical to the pairwise double sum but costs O(N) per
//! stage.
//!
//! Reproducibility: all randomness comes from ChaCha8 streams derived from the
//! user seed with a splitmix64 mix — one stream per population for frequency
//! draws, one per trial for initial phases. Accumulations are sequential, so
//! results are bit-identical for a given seed regardless of thread count
//! (parallelism is across sweep trials only).

use crate::distributions::{SamplingMode, RNG_ALGORITHM};
use crate::model::{wrap_phase, OrderParameter, SystemConfig, ValidationError};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::TAU;
use thiserror::Error;

/// Onset threshold coefficient: r_c = coeff / sqrt(N) + margin.
pub const DEFAULT_ONSET_COEFF: f64 = 2.0;
pub const DEFAULT_ONSET_MARGIN: f64 = 0.05;

/// Default empirical synchronization threshold for a population of `n`
/// oscillators: the incoherent baseline 2/sqrt(n) plus a fixed margin.
pub fn onset_threshold(n: usize) -> f64 {
    DEFAULT_ONSET_COEFF / (n as f64).sqrt() + DEFAULT_ONSET_MARGIN
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    InvalidSystem(#[from] ValidationError),
    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),
    #[error("initial phases for population {population} have {given} entries, expected {expected}")]
    PhaseShapeMismatch {
        population: usize,
        given: usize,
        expected: usize,
    },
    #[error("state does not match the system: {0}")]
    StateShapeMismatch(String),
    #[error("sweep grid must be non-empty with finite entries")]
    InvalidGrid,
    #[error("empty result: no sweep data for population {population}")]
    EmptyResult { population: usize },
    #[error("population index {population} out of range ({count} population(s))")]
    PopulationIndex { population: usize, count: usize },
}

/// Where a trial's initial phases come from.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialPhaseMode {
    /// Uniform on [0, 2*pi), fresh per trial from the trial's phase stream.
    Random,
    /// Explicit phases (wrapped into [0, 2*pi)); identical for every trial.
    Given(Vec<Vec<f64>>),
}

/// Integration and sampling controls for trials and sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub dt: f64,
    /// Settling time discarded before averaging.
    pub t_transient: f64,
    /// Averaging window; must cover at least ten steps.
    pub t_average: f64,
    pub seed: u64,
    pub sampling_mode: SamplingMode,
    pub initial_phase_mode: InitialPhaseMode,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 0.02,
            t_transient: 200.0,
            t_average: 200.0,
            seed: 0,
            sampling_mode: SamplingMode::Deterministic,
            initial_phase_mode: InitialPhaseMode::Random,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(SimError::InvalidParams(format!(
                "dt = {} must be positive and finite",
                self.dt
            )));
        }
        if !self.t_transient.is_finite() || self.t_transient < 0.0 {
            return Err(SimError::InvalidParams(format!(
                "t_transient = {} must be non-negative and finite",
                self.t_transient
            )));
        }
        if !self.t_average.is_finite() || self.t_average < 10.0 * self.dt {
            return Err(SimError::InvalidParams(format!(
                "t_average = {} must cover at least ten steps of dt = {}",
                self.t_average, self.dt
            )));
        }
        Ok(())
    }
}

/// Instantaneous ensemble state: per-population phases and natural
/// frequencies, plus the current time. Phases are not wrapped during
/// integration; call [`EnsembleState::wrap`] when canonical angles are wanted.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    pub phases: Vec<Vec<f64>>,
    pub omegas: Vec<Vec<f64>>,
    pub t: f64,
}

impl EnsembleState {
    /// Draws the initial state for a trial: frequencies from the sampling
    /// mode's per-population streams, phases per the phase mode.
    pub fn initial(config: &SystemConfig, params: &SimParams) -> Result<Self, SimError> {
        config.validate()?;
        params.validate()?;
        let omegas = draw_frequencies(config, params.sampling_mode, params.seed);
        let phases = draw_phases(
            config,
            &params.initial_phase_mode,
            derive_seed(params.seed, PHASE_STREAM),
        )?;
        Ok(Self {
            phases,
            omegas,
            t: 0.0,
        })
    }

    pub fn validate_against(&self, config: &SystemConfig) -> Result<(), SimError> {
        let m = config.n_populations();
        if self.phases.len() != m || self.omegas.len() != m {
            return Err(SimError::StateShapeMismatch(format!(
                "state holds {} phase / {} frequency population(s), system has {m}",
                self.phases.len(),
                self.omegas.len()
            )));
        }
        for (p, pop) in config.populations.iter().enumerate() {
            if self.phases[p].len() != pop.n || self.omegas[p].len() != pop.n {
                return Err(SimError::StateShapeMismatch(format!(
                    "population {p}: {} phase(s) / {} frequenc(ies), expected {}",
                    self.phases[p].len(),
                    self.omegas[p].len(),
                    pop.n
                )));
            }
        }
        Ok(())
    }

    /// Wraps all phases into [0, 2*pi).
    pub fn wrap(&mut self) {
        for pop in &mut self.phases {
            for theta in pop {
                *theta = wrap_phase(*theta);
            }
        }
    }
}

/// Time-averaged order parameter magnitude per population, with the standard
/// deviation of the fluctuations over the averaging window.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub r_mean: Vec<f64>,
    pub r_std: Vec<f64>,
}

/// Everything needed to reproduce and interpret a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepMetadata {
    pub seed: u64,
    pub dt: f64,
    pub t_transient: f64,
    pub t_average: f64,
    pub sampling_mode: SamplingMode,
    pub rng_algorithm: &'static str,
    pub population_sizes: Vec<usize>,
}

/// Order-parameter statistics across a grid of coupling scales:
/// `r_mean[population][grid_index]` (and likewise `r_std`).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub eta_values: Vec<f64>,
    pub r_mean: Vec<Vec<f64>>,
    pub r_std: Vec<Vec<f64>>,
    pub metadata: SweepMetadata,
}

// Sub-stream tags for seed derivation; frequency streams add the population
// index, phase streams the trial index.
const FREQ_STREAM: u64 = 1 << 32;
const PHASE_STREAM: u64 = 2 << 32;

/// splitmix64 finalizer over seed xor golden-ratio-scaled stream: cheap,
/// well-scrambled independent seeds for sub-streams.
fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn draw_frequencies(config: &SystemConfig, mode: SamplingMode, seed: u64) -> Vec<Vec<f64>> {
    config
        .populations
        .iter()
        .enumerate()
        .map(|(p, pop)| {
            pop.dist
                .sample_frequencies(pop.n, mode, derive_seed(seed, FREQ_STREAM + p as u64))
        })
        .collect()
}

fn draw_phases(
    config: &SystemConfig,
    mode: &InitialPhaseMode,
    phase_seed: u64,
) -> Result<Vec<Vec<f64>>, SimError> {
    match mode {
        InitialPhaseMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(phase_seed);
            Ok(config
                .populations
                .iter()
                .map(|pop| (0..pop.n).map(|_| TAU * rng.random::<f64>()).collect())
                .collect())
        }
        InitialPhaseMode::Given(phases) => {
            if phases.len() != config.n_populations() {
                return Err(SimError::StateShapeMismatch(format!(
                    "{} phase population(s) given, system has {}",
                    phases.len(),
                    config.n_populations()
                )));
            }
            for (p, (row, pop)) in phases.iter().zip(config.populations.iter()).enumerate() {
                if row.len() != pop.n {
                    return Err(SimError::PhaseShapeMismatch {
                        population: p,
                        given: row.len(),
                        expected: pop.n,
                    });
                }
            }
            Ok(phases
                .iter()
                .map(|row| row.iter().map(|&t| wrap_phase(t)).collect())
                .collect())
        }
    }
}

/// Mean phasor magnitude and angle of each population.
pub fn compute_order_parameters(state: &EnsembleState) -> Vec<OrderParameter> {
    state
        .phases
        .iter()
        .map(|phases| {
            let z = mean_phasor(phases);
            OrderParameter {
                r: z.norm().min(1.0),
                psi: wrap_phase(z.im.atan2(z.re)),
            }
        })
        .collect()
}

fn mean_phasor(phases: &[f64]) -> Complex64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for &theta in phases {
        let (s, c) = theta.sin_cos();
        re += c;
        im += s;
    }
    let n = phases.len().max(1) as f64;
    Complex64::new(re / n, im / n)
}

/// Complex coupling rows eta * k * e^{-i alpha}, row-major for the hot loop.
fn complex_rows(config: &SystemConfig) -> Vec<Vec<Complex64>> {
    let kbar = config.coupling.complex_coupling();
    (0..kbar.nrows())
        .map(|s| (0..kbar.ncols()).map(|s2| kbar[(s, s2)]).collect())
        .collect()
}

/// Phase velocities of every oscillator for the given state.
pub fn derivative(state: &EnsembleState, config: &SystemConfig) -> Result<Vec<Vec<f64>>, SimError> {
    config.validate()?;
    state.validate_against(config)?;
    let kbar = complex_rows(config);
    let mut sin_buf: Vec<Vec<f64>> = state.phases.iter().map(|p| vec![0.0; p.len()]).collect();
    let mut cos_buf = sin_buf.clone();
    let mut out = sin_buf.clone();
    let mut phasors = Vec::new();
    derivative_pass(
        &state.phases,
        &state.omegas,
        &kbar,
        &mut sin_buf,
        &mut cos_buf,
        &mut phasors,
        &mut out,
    );
    Ok(out)
}

/// One derivative evaluation. Fills the sin/cos buffers (reused to form both
/// the mean phasors and the per-oscillator projection), writes the mean
/// phasors of `phases` into `phasors`, and the velocities into `out`.
fn derivative_pass(
    phases: &[Vec<f64>],
    omegas: &[Vec<f64>],
    kbar: &[Vec<Complex64>],
    sin_buf: &mut [Vec<f64>],
    cos_buf: &mut [Vec<f64>],
    phasors: &mut Vec<Complex64>,
    out: &mut [Vec<f64>],
) {
    let m = phases.len();
    phasors.clear();
    for p in 0..m {
        let ph = &phases[p];
        let sb = &mut sin_buf[p];
        let cb = &mut cos_buf[p];
        let mut re = 0.0;
        let mut im = 0.0;
        for i in 0..ph.len() {
            let (s, c) = ph[i].sin_cos();
            sb[i] = s;
            cb[i] = c;
            re += c;
            im += s;
        }
        let inv = 1.0 / ph.len().max(1) as f64;
        phasors.push(Complex64::new(re * inv, im * inv));
    }
    for p in 0..m {
        let mut field = Complex64::new(0.0, 0.0);
        for (s2, &z) in phasors.iter().enumerate() {
            field += kbar[p][s2] * z;
        }
        let (fre, fim) = (field.re, field.im);
        let om = &omegas[p];
        let sb = &sin_buf[p];
        let cb = &cos_buf[p];
        let o = &mut out[p];
        // Im(Z e^{-i theta}) = Im(Z) cos(theta) - Re(Z) sin(theta)
        for i in 0..o.len() {
            o[i] = om[i] + fim * cb[i] - fre * sb[i];
        }
    }
}

/// Reusable integration buffers, sized once per trial.
struct StepBuffers {
    k1: Vec<Vec<f64>>,
    k2: Vec<Vec<f64>>,
    k3: Vec<Vec<f64>>,
    k4: Vec<Vec<f64>>,
    stage: Vec<Vec<f64>>,
    sin_buf: Vec<Vec<f64>>,
    cos_buf: Vec<Vec<f64>>,
    phasors: Vec<Complex64>,
    /// Mean phasors of the state at the *start* of the latest step (its first
    /// stage), reused for measurement without an extra trig pass.
    stage1_phasors: Vec<Complex64>,
}

impl StepBuffers {
    fn new(shape: &[usize]) -> Self {
        let zeros: Vec<Vec<f64>> = shape.iter().map(|&n| vec![0.0; n]).collect();
        Self {
            k1: zeros.clone(),
            k2: zeros.clone(),
            k3: zeros.clone(),
            k4: zeros.clone(),
            stage: zeros.clone(),
            sin_buf: zeros.clone(),
            cos_buf: zeros,
            phasors: Vec::with_capacity(shape.len()),
            stage1_phasors: Vec::with_capacity(shape.len()),
        }
    }
}

fn stage_state(stage: &mut [Vec<f64>], base: &[Vec<f64>], slope: &[Vec<f64>], h: f64) {
    for p in 0..stage.len() {
        let sp = &mut stage[p];
        let bp = &base[p];
        let kp = &slope[p];
        for i in 0..sp.len() {
            sp[i] = bp[i] + h * kp[i];
        }
    }
}

/// One classical RK4 step in place; phases stay unwrapped.
fn advance(
    phases: &mut [Vec<f64>],
    omegas: &[Vec<f64>],
    kbar: &[Vec<Complex64>],
    dt: f64,
    b: &mut StepBuffers,
) {
    derivative_pass(
        phases, omegas, kbar, &mut b.sin_buf, &mut b.cos_buf, &mut b.phasors, &mut b.k1,
    );
    b.stage1_phasors.clone_from(&b.phasors);
    stage_state(&mut b.stage, phases, &b.k1, 0.5 * dt);
    derivative_pass(
        &b.stage, omegas, kbar, &mut b.sin_buf, &mut b.cos_buf, &mut b.phasors, &mut b.k2,
    );
    stage_state(&mut b.stage, phases, &b.k2, 0.5 * dt);
    derivative_pass(
        &b.stage, omegas, kbar, &mut b.sin_buf, &mut b.cos_buf, &mut b.phasors, &mut b.k3,
    );
    stage_state(&mut b.stage, phases, &b.k3, dt);
    derivative_pass(
        &b.stage, omegas, kbar, &mut b.sin_buf, &mut b.cos_buf, &mut b.phasors, &mut b.k4,
    );
    let w = dt / 6.0;
    for (p, ph) in phases.iter_mut().enumerate() {
        let (k1, k2, k3, k4) = (&b.k1[p], &b.k2[p], &b.k3[p], &b.k4[p]);
        for i in 0..ph.len() {
            ph[i] += w * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

/// Advances the state by one RK4 step of size `dt`.
pub fn step_rk4(
    state: &EnsembleState,
    config: &SystemConfig,
    dt: f64,
) -> Result<EnsembleState, SimError> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(SimError::InvalidParams(format!(
            "dt = {dt} must be positive and finite"
        )));
    }
    config.validate()?;
    state.validate_against(config)?;
    let kbar = complex_rows(config);
    let shape: Vec<usize> = state.phases.iter().map(|p| p.len()).collect();
    let mut bufs = StepBuffers::new(&shape);
    let mut phases = state.phases.clone();
    advance(&mut phases, &state.omegas, &kbar, dt, &mut bufs);
    Ok(EnsembleState {
        phases,
        omegas: state.omegas.clone(),
        t: state.t + dt,
    })
}

/// Integrates through the transient, then averages r over every step of the
/// averaging window (sampling each step's start state).
fn integrate(
    phases: &mut [Vec<f64>],
    omegas: &[Vec<f64>],
    kbar: &[Vec<Complex64>],
    params: &SimParams,
) -> TrialResult {
    let shape: Vec<usize> = phases.iter().map(|p| p.len()).collect();
    let mut bufs = StepBuffers::new(&shape);
    let steps_transient = (params.t_transient / params.dt).round() as usize;
    let steps_average = ((params.t_average / params.dt).round() as usize).max(1);
    for _ in 0..steps_transient {
        advance(phases, omegas, kbar, params.dt, &mut bufs);
    }
    let m = phases.len();
    let mut acc = vec![0.0; m];
    let mut acc_sq = vec![0.0; m];
    for _ in 0..steps_average {
        advance(phases, omegas, kbar, params.dt, &mut bufs);
        for p in 0..m {
            let r = bufs.stage1_phasors[p].norm().min(1.0);
            acc[p] += r;
            acc_sq[p] += r * r;
        }
    }
    let count = steps_average as f64;
    let r_mean: Vec<f64> = acc.iter().map(|a| a / count).collect();
    let r_std: Vec<f64> = acc_sq
        .iter()
        .zip(&r_mean)
        .map(|(&sq, &mean)| (sq / count - mean * mean).max(0.0).sqrt())
        .collect();
    TrialResult { r_mean, r_std }
}

/// Runs one trial at the system's own `eta`. Equivalent to the first grid
/// entry of [`sweep_eta`] with the same seed.
pub fn run_trial(config: &SystemConfig, params: &SimParams) -> Result<TrialResult, SimError> {
    let mut state = EnsembleState::initial(config, params)?;
    let kbar = complex_rows(config);
    Ok(integrate(&mut state.phases, &state.omegas, &kbar, params))
}

/// Sweeps the coupling scale over `eta_grid`.
///
/// Natural frequencies are drawn once from the seed's frequency streams and
/// shared by every grid point, so the curve r(eta) is not confounded by
/// resampling; initial phases are drawn fresh per trial (trial `j` uses phase
/// stream `j`). Trials run in parallel but their outputs are assembled in
/// grid order and each trial's sums are sequential, so the result is
/// bit-reproducible for a given seed at any thread count.
pub fn sweep_eta(
    config: &SystemConfig,
    eta_grid: &[f64],
    params: &SimParams,
) -> Result<SweepResult, SimError> {
    config.validate()?;
    params.validate()?;
    if eta_grid.is_empty() || eta_grid.iter().any(|e| !e.is_finite()) {
        return Err(SimError::InvalidGrid);
    }
    let freqs = draw_frequencies(config, params.sampling_mode, params.seed);
    let trials: Result<Vec<TrialResult>, SimError> = eta_grid
        .par_iter()
        .enumerate()
        .map(|(j, &eta)| {
            let mut trial_config = config.clone();
            trial_config.coupling.eta = eta;
            let mut phases = draw_phases(
                &trial_config,
                &params.initial_phase_mode,
                derive_seed(params.seed, PHASE_STREAM + j as u64),
            )?;
            let kbar = complex_rows(&trial_config);
            Ok(integrate(&mut phases, &freqs, &kbar, params))
        })
        .collect();
    let trials = trials?;
    let m = config.n_populations();
    let r_mean: Vec<Vec<f64>> = (0..m)
        .map(|p| trials.iter().map(|t| t.r_mean[p]).collect())
        .collect();
    let r_std: Vec<Vec<f64>> = (0..m)
        .map(|p| trials.iter().map(|t| t.r_std[p]).collect())
        .collect();
    Ok(SweepResult {
        eta_values: eta_grid.to_vec(),
        r_mean,
        r_std,
        metadata: SweepMetadata {
            seed: params.seed,
            dt: params.dt,
            t_transient: params.t_transient,
            t_average: params.t_average,
            sampling_mode: params.sampling_mode,
            rng_algorithm: RNG_ALGORITHM,
            population_sizes: config.populations.iter().map(|p| p.n).collect(),
        },
    })
}

/// Onsets with the default threshold for the population's size.
pub fn detect_onset(result: &SweepResult, population: usize) -> Result<Vec<f64>, SimError> {
    let count = result.metadata.population_sizes.len();
    let n = *result
        .metadata
        .population_sizes
        .get(population)
        .ok_or(SimError::PopulationIndex { population, count })?;
    detect_onset_with_threshold(result, population, onset_threshold(n))
}

/// Coupling scales at which `r_mean` of one population first crosses the
/// threshold, walking outward from eta = 0 separately toward positive and
/// negative eta and interpolating linearly between the bracketing grid
/// points. Returns up to one onset per direction, ascending; a grid whose
/// innermost point already exceeds the threshold reports that point itself.
pub fn detect_onset_with_threshold(
    result: &SweepResult,
    population: usize,
    threshold: f64,
) -> Result<Vec<f64>, SimError> {
    let count = result.metadata.population_sizes.len();
    if population >= count {
        return Err(SimError::PopulationIndex { population, count });
    }
    let r = result
        .r_mean
        .get(population)
        .filter(|r| !r.is_empty())
        .ok_or(SimError::EmptyResult { population })?;
    if result.eta_values.is_empty() || r.len() != result.eta_values.len() {
        return Err(SimError::EmptyResult { population });
    }
    let mut pairs: Vec<(f64, f64)> = result
        .eta_values
        .iter()
        .copied()
        .zip(r.iter().copied())
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let positive: Vec<(f64, f64)> = pairs.iter().copied().filter(|&(e, _)| e >= 0.0).collect();
    let negative: Vec<(f64, f64)> = pairs
        .iter()
        .rev()
        .copied()
        .filter(|&(e, _)| e <= 0.0)
        .collect();
    let mut onsets = Vec::new();
    onsets.extend(first_crossing(&negative, threshold));
    onsets.extend(first_crossing(&positive, threshold));
    onsets.sort_by(f64::total_cmp);
    onsets.dedup(); // eta = 0 can only report once
    Ok(onsets)
}

fn first_crossing(path: &[(f64, f64)], threshold: f64) -> Option<f64> {
    let (&first, rest) = path.split_first()?;
    if first.1 >= threshold {
        return Some(first.0);
    }
    let mut prev = first;
    for &(eta, r) in rest {
        if r >= threshold {
            let frac = (threshold - prev.1) / (r - prev.1);
            return Some(prev.0 + frac * (eta - prev.0));
        }
        prev = (eta, r);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CouplingSpec, PopulationSpec, SystemConfig};
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn config(n: usize, k: Vec<Vec<f64>>, eta: f64) -> SystemConfig {
        let m = k.len();
        SystemConfig::new(
            (0..m).map(|_| PopulationSpec::new(n, 2.0, 1.0)).collect(),
            CouplingSpec::lag_free(k, eta),
        )
    }

    fn state(phases: Vec<Vec<f64>>, omegas: Vec<Vec<f64>>) -> EnsembleState {
        EnsembleState {
            phases,
            omegas,
            t: 0.0,
        }
    }

    #[test]
    fn order_parameter_of_aligned_and_balanced_states() {
        let s = state(
            vec![vec![0.0, 0.0, 0.0], vec![0.0, PI], vec![FRAC_PI_2; 4]],
            vec![vec![0.0; 3], vec![0.0; 2], vec![0.0; 4]],
        );
        let ops = compute_order_parameters(&s);
        assert_relative_eq!(ops[0].r, 1.0, epsilon = 1e-15);
        assert_relative_eq!(ops[0].psi, 0.0, epsilon = 1e-15);
        assert!(ops[1].r < 1e-15, "antipodal pair must cancel");
        assert_relative_eq!(ops[2].r, 1.0, epsilon = 1e-15);
        assert_relative_eq!(ops[2].psi, FRAC_PI_2, epsilon = 1e-15);
    }

    #[test]
    fn order_parameter_of_evenly_spread_phases_vanishes() {
        let n = 8;
        let phases: Vec<f64> = (0..n).map(|i| TAU * i as f64 / n as f64).collect();
        let s = state(vec![phases], vec![vec![0.0; n]]);
        let ops = compute_order_parameters(&s);
        assert!(ops[0].r < 1e-14, "r = {} for balanced ring", ops[0].r);
    }

    #[test]
    fn derivative_without_coupling_is_the_natural_frequency() {
        let cfg = config(3, vec![vec![0.0, 0.0], vec![0.0, 0.0]], 1.0);
        let s = state(
            vec![vec![0.1, 2.0, 4.0], vec![0.5, 5.5, 3.3]],
            vec![vec![1.0, -2.0, 0.3], vec![0.0, 8.0, -1.5]],
        );
        let d = derivative(&s, &cfg).unwrap();
        assert_eq!(d, s.omegas, "zero coupling leaves pure drift");
    }

    #[test]
    fn derivative_matches_pairwise_double_sum() {
        // Mean-field field form vs the literal O(N^2) definition, with lags.
        let cfg = SystemConfig::new(
            vec![PopulationSpec::new(3, 2.0, 1.0), PopulationSpec::new(2, 4.0, 0.5)],
            CouplingSpec {
                k: vec![vec![-1.0, 2.0], vec![0.7, 1.3]],
                alpha: vec![vec![0.0, 0.4], vec![-0.2, 1.1]],
                eta: 1.7,
            },
        );
        let s = state(
            vec![vec![0.3, 2.9, 5.1], vec![1.0, 4.4]],
            vec![vec![1.5, -0.4, 2.2], vec![3.9, 4.1]],
        );
        let fast = derivative(&s, &cfg).unwrap();
        for (p, (fast_p, phases_p)) in fast.iter().zip(&s.phases).enumerate() {
            for (i, (&rate, &theta_i)) in fast_p.iter().zip(phases_p).enumerate() {
                let mut acc = s.omegas[p][i];
                for (p2, phases2) in s.phases.iter().enumerate() {
                    let mut pair_sum = 0.0;
                    for &theta_j in phases2 {
                        pair_sum += (theta_j - theta_i - cfg.coupling.alpha[p][p2]).sin();
                    }
                    acc += cfg.coupling.eta * cfg.coupling.k[p][p2] * pair_sum
                        / phases2.len() as f64;
                }
                assert_relative_eq!(rate, acc, epsilon = 1e-12, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn rk4_is_exact_for_pure_drift() {
        let cfg = config(2, vec![vec![0.0]], 1.0);
        let s = state(vec![vec![0.25, 1.5]], vec![vec![1.3, -0.7]]);
        let stepped = step_rk4(&s, &cfg, 0.5).unwrap();
        assert_relative_eq!(stepped.phases[0][0], 0.25 + 0.5 * 1.3, epsilon = 1e-14);
        assert_relative_eq!(stepped.phases[0][1], 1.5 - 0.5 * 0.7, epsilon = 1e-14);
        assert_eq!(stepped.t, 0.5);
        assert_eq!(stepped.omegas, s.omegas);
    }

    #[test]
    fn step_rejects_mismatched_state() {
        let cfg = config(3, vec![vec![1.0]], 1.0);
        let s = state(vec![vec![0.0; 2]], vec![vec![0.0; 2]]);
        assert!(matches!(
            step_rk4(&s, &cfg, 0.02),
            Err(SimError::StateShapeMismatch(_))
        ));
        let good = state(vec![vec![0.0; 3]], vec![vec![0.0; 3]]);
        assert!(matches!(
            step_rk4(&good, &cfg, -0.1),
            Err(SimError::InvalidParams(_))
        ));
    }

    #[test]
    fn params_validation_enforces_minimum_averaging_window() {
        let mut p = SimParams {
            t_average: 0.19, // under ten steps of dt = 0.02
            ..SimParams::default()
        };
        assert!(matches!(p.validate(), Err(SimError::InvalidParams(_))));
        p.t_average = 0.2;
        p.validate().unwrap();
        p.dt = 0.0;
        assert!(matches!(p.validate(), Err(SimError::InvalidParams(_))));
    }

    #[test]
    fn initial_state_respects_given_phases_and_validates_shape() {
        let cfg = config(2, vec![vec![1.0, -1.0], vec![1.0, 0.0]], 1.0);
        let mut params = SimParams {
            initial_phase_mode: InitialPhaseMode::Given(vec![vec![0.1, -0.2], vec![7.0, 2.0]]),
            ..SimParams::default()
        };
        let s = EnsembleState::initial(&cfg, &params).unwrap();
        assert_relative_eq!(s.phases[0][0], 0.1);
        assert_relative_eq!(s.phases[0][1], TAU - 0.2, epsilon = 1e-15);
        assert_relative_eq!(s.phases[1][0], 7.0 - TAU, epsilon = 1e-15);

        params.initial_phase_mode = InitialPhaseMode::Given(vec![vec![0.1], vec![7.0, 2.0]]);
        assert!(matches!(
            EnsembleState::initial(&cfg, &params),
            Err(SimError::PhaseShapeMismatch {
                population: 0,
                given: 1,
                expected: 2
            })
        ));
    }

    #[test]
    fn trials_are_bit_reproducible_per_seed() {
        let cfg = config(40, vec![vec![1.0, -1.0], vec![1.0, 0.0]], 3.0);
        let params = SimParams {
            t_transient: 5.0,
            t_average: 5.0,
            seed: 42,
            sampling_mode: SamplingMode::Random,
            ..SimParams::default()
        };
        let a = run_trial(&cfg, &params).unwrap();
        let b = run_trial(&cfg, &params).unwrap();
        assert_eq!(a, b, "same seed must give bitwise-identical statistics");
        let c = run_trial(&cfg, &SimParams { seed: 43, ..params }).unwrap();
        assert_ne!(a, c, "different seed must change the draw");
    }

    #[test]
    fn single_point_sweep_equals_run_trial() {
        let cfg = config(30, vec![vec![1.0, -1.0], vec![1.0, 0.0]], 2.5);
        let params = SimParams {
            t_transient: 4.0,
            t_average: 4.0,
            seed: 9,
            ..SimParams::default()
        };
        let sweep = sweep_eta(&cfg, &[2.5], &params).unwrap();
        let trial = run_trial(&cfg, &params).unwrap();
        for p in 0..2 {
            assert_eq!(sweep.r_mean[p][0], trial.r_mean[p]);
            assert_eq!(sweep.r_std[p][0], trial.r_std[p]);
        }
        assert_eq!(sweep.metadata.population_sizes, vec![30, 30]);
        assert_eq!(sweep.metadata.rng_algorithm, "chacha8");
    }

    #[test]
    fn sweep_rejects_empty_or_nonfinite_grids() {
        let cfg = config(5, vec![vec![1.0]], 1.0);
        let params = SimParams {
            t_transient: 0.5,
            t_average: 0.5,
            ..SimParams::default()
        };
        assert!(matches!(
            sweep_eta(&cfg, &[], &params),
            Err(SimError::InvalidGrid)
        ));
        assert!(matches!(
            sweep_eta(&cfg, &[1.0, f64::NAN], &params),
            Err(SimError::InvalidGrid)
        ));
    }

    fn synthetic_sweep(eta: Vec<f64>, r: Vec<Vec<f64>>, sizes: Vec<usize>) -> SweepResult {
        let std = r.iter().map(|row| vec![0.0; row.len()]).collect();
        SweepResult {
            eta_values: eta,
            r_mean: r,
            r_std: std,
            metadata: SweepMetadata {
                seed: 0,
                dt: 0.02,
                t_transient: 1.0,
                t_average: 1.0,
                sampling_mode: SamplingMode::Deterministic,
                rng_algorithm: RNG_ALGORITHM,
                population_sizes: sizes,
            },
        }
    }

    #[test]
    fn onset_detection_interpolates_both_directions() {
        // n = 400 gives threshold 2/20 + 0.05 = 0.15.
        let sweep = synthetic_sweep(
            vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            vec![vec![0.90, 0.05, 0.02, 0.05, 0.90]],
            vec![400],
        );
        let onsets = detect_onset(&sweep, 0).unwrap();
        assert_eq!(onsets.len(), 2);
        let expected = 1.0 + (0.15 - 0.05) / (0.90 - 0.05);
        assert_relative_eq!(onsets[1], expected, epsilon = 1e-12);
        assert_relative_eq!(onsets[0], -expected, epsilon = 1e-12);
    }

    #[test]
    fn onset_detection_handles_flat_and_degenerate_grids() {
        let flat = synthetic_sweep(
            vec![0.0, 1.0, 2.0],
            vec![vec![0.02, 0.03, 0.04]],
            vec![400],
        );
        assert!(detect_onset(&flat, 0).unwrap().is_empty());

        // Innermost point already synchronized: report it directly.
        let hot = synthetic_sweep(vec![0.5, 1.0], vec![vec![0.70, 0.80]], vec![400]);
        assert_eq!(detect_onset(&hot, 0).unwrap(), vec![0.5]);

        // Unsorted input is sorted before scanning.
        let shuffled = synthetic_sweep(
            vec![2.0, 0.0, 1.0],
            vec![vec![0.90, 0.02, 0.05]],
            vec![400],
        );
        let onsets = detect_onset(&shuffled, 0).unwrap();
        assert_eq!(onsets.len(), 1);
        assert!(onsets[0] > 1.0 && onsets[0] < 2.0);
    }

    #[test]
    fn onset_detection_rejects_bad_population_and_empty_results() {
        let sweep = synthetic_sweep(vec![0.0, 1.0], vec![vec![0.0, 0.0]], vec![400]);
        assert!(matches!(
            detect_onset(&sweep, 1),
            Err(SimError::PopulationIndex {
                population: 1,
                count: 1
            })
        ));
        let mut empty = synthetic_sweep(vec![], vec![vec![]], vec![400]);
        assert!(matches!(
            detect_onset(&empty, 0),
            Err(SimError::EmptyResult { population: 0 })
        ));
        empty.r_mean.clear();
        assert!(matches!(
            detect_onset(&empty, 0),
            Err(SimError::EmptyResult { population: 0 })
        ));
    }

    #[test]
    fn onset_threshold_follows_population_size() {
        assert_relative_eq!(onset_threshold(400), 0.15, epsilon = 1e-15);
        assert_relative_eq!(onset_threshold(2000), 2.0 / 2000f64.sqrt() + 0.05, epsilon = 1e-15);
    }

    #[test]
    fn locked_state_keeps_high_order_parameter() {
        // Far above threshold (eta* = 4 for this coupling) the ensemble locks.
        let cfg = config(400, vec![vec![1.0, -1.0], vec![1.0, 0.0]], 8.0);
        let params = SimParams {
            t_transient: 30.0,
            t_average: 10.0,
            seed: 3,
            ..SimParams::default()
        };
        let res = run_trial(&cfg, &params).unwrap();
        for p in 0..2 {
            assert!(
                res.r_mean[p] > 0.5,
                "population {p}: r = {} should be locked",
                res.r_mean[p]
            );
            assert!(res.r_mean[p] <= 1.0);
        }
    }

    #[test]
    fn incoherent_state_keeps_low_order_parameter() {
        let cfg = config(400, vec![vec![1.0, -1.0], vec![1.0, 0.0]], 1.0);
        let params = SimParams {
            t_transient: 30.0,
            t_average: 10.0,
            seed: 3,
            ..SimParams::default()
        };
        let res = run_trial(&cfg, &params).unwrap();
        for p in 0..2 {
            assert!(
                res.r_mean[p] < onset_threshold(400),
                "population {p}: r = {} should stay incoherent",
                res.r_mean[p]
            );
        }
    }
}
