//! Calculus on spaces of finite measures and the Kolmogorov equations of nonlinear filtering.
//!
//! The crate is organised bottom-up:
//!
//! * [`measure`]: weighted-atom measures, integration and Wasserstein distances.
//! * [`calculus`]: measure functionals with flat and Lions derivatives, calculus rules and
//!   the three-stage approximation of C² functionals by cylindrical ones.
//! * [`noise`]: counter-based random streams shared between coupled simulations.
//! * [`filtering`]: filtering models, the weighted-particle Zakai flow and its normalised view.
//! * [`generator`]: the generators of the Zakai and Kushner–Stratonovich flows and pathwise
//!   Itô residuals.
//! * [`kolmogorov`]: Monte Carlo estimators of the value function and its derivatives.
//! * [`oracle`]: deterministic reference solvers used for cross-checks.

pub mod calculus;
pub mod error;
pub mod filtering;
pub mod generator;
pub mod kolmogorov;
pub mod linalg;
pub mod measure;
pub mod noise;
pub mod oracle;
pub mod stats;

pub use calculus::{CylindricalFunctional, MeasureFunctional, OuterFunction, PreparedFunctional, TestFunction};
pub use error::{CalculusError, FilterError, MeasureError, OracleError};
pub use filtering::{FilteringModel, KsFlow, ParticleInit, ZakaiFlow};
pub use generator::GeneratorEvaluation;
pub use kolmogorov::{KolmogorovEstimate, McConfig};
pub use linalg::Matrix;
pub use measure::ParticleMeasure;
pub use noise::NoisePath;
