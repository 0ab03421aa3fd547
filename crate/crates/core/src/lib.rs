//! Synchronization thresholds for networks of interacting oscillator
//! populations.
//!
//! Each population is an ensemble of phase oscillators with Cauchy-Lorentz
//! distributed natural frequencies, coupled to every other population through
//! a matrix of signed strengths and phase lags scaled by a global knob `eta`.
//! The crate answers one question from two independent directions:
//!
//! * [`analyzer`] — at which critical values `eta*` does the incoherent state
//!   lose stability? Computed from a marginal-stability determinant condition,
//!   with closed forms for the identical-population special case.
//! * [`simulator`] — does a direct large-N integration of the full phase model
//!   actually synchronize there? Order-parameter sweeps over `eta` locate the
//!   onset empirically.
//!
//! [`model`] holds the shared domain types and [`distributions`] the
//! Cauchy-Lorentz helpers used by both sides.

pub mod analyzer;
pub mod distributions;
pub mod model;
pub mod simulator;

pub use model::{
    CouplingSpec, CriticalSet, CriticalSolution, GrowthPoint, LorentzianSpec, OrderParameter,
    PopulationSpec, SystemConfig, ValidationError,
};
