//! Filtering models and weighted-particle solvers of the Zakai and Kushner–Stratonovich equations.

mod builtins;
mod ks;
mod model;
mod moments;
mod simulate;
mod zakai;

pub use builtins::{brownian, builtin_model, default_params, linear_gauss, ou_bounded, MODEL_NAMES};
pub use ks::{ks_view, KsFlow};
pub(crate) use model::apply_b;
pub use model::{
    Bound, CoefficientMap, Coefficients, FilteringModel, GeneratorA, GeneratorB, HypothesisReport, LinearGaussian,
    ModelConstants, ObservedConstant,
};
pub use moments::{mass_moment_bounds, FlowMassSummary, MassMomentConfig, MassMomentReport};
pub use simulate::{gaussian_atoms, simulate_signal_observation, SignalObservation};
pub use zakai::{derivative_flow, FlowOptions, ParticleInit, StepRecord, ZakaiFlow};
