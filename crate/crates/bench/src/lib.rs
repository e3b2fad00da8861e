//! Shared fixtures for the benchmarks.

use mkolmo_core::calculus::registry::builtin;
use mkolmo_core::calculus::CylindricalFunctional;
use mkolmo_core::filtering::{ou_bounded, FilteringModel};
use mkolmo_core::measure::{preset, ParticleMeasure};
use std::sync::Arc;

/// The default `ou_bounded` model in one dimension.
pub fn model() -> Arc<FilteringModel> {
    Arc::new(ou_bounded(1, 10.0, 1.0, 0.3, 1.0).expect("valid parameters"))
}

/// The eight-atom reference measure.
pub fn mix8() -> ParticleMeasure {
    preset("mix8", 1).expect("builtin preset")
}

pub fn functional(name: &str) -> Arc<CylindricalFunctional> {
    builtin(name, 1).expect("builtin functional")
}
