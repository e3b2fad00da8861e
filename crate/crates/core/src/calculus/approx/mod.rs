//! Approximation of C² functionals by cylindrical ones.
//!
//! The pipeline has three stages:
//!
//! 1. [`cutoff_stage`]: `ûᴺ(μ) = u(ρᴺμ)` with a C² bump `ρᴺ` equal to one on `K_N = [−N,N]ᵈ`
//!    and vanishing outside `K_{N+1}`;
//! 2. [`empirical_stage`]: `uⁿ(μ) = u(μ(ℝᵈ)/n · Σᵢ δ_{Xᵢ})` with `Xᵢ` i.i.d. from `μ/μ(ℝᵈ)`, whose
//!    expectation `φⁿ` has the form `⟨μ^{⊗n}/μ(ℝᵈ)ⁿ, φ(·, μ(ℝᵈ))⟩`;
//! 3. [`polynomial_stage`]: replaces a symmetric kernel `φ` by its tensor Bernstein approximant,
//!    which turns the functional into a cylindrical one.

mod cutoff;
mod empirical;
mod kernel;
mod polynomial;

pub use cutoff::{bump, bump_derivative, bump_second_derivative, CutoffFunctional};
pub use empirical::EmpiricalFunctional;
pub use kernel::{GaussianPairKernel, KernelFunction, KernelFunctional};
pub use polynomial::{bernstein, BernsteinOuter};

use super::{CylindricalFunctional, MeasureFunctional};
use crate::error::CalculusError;
use serde::Serialize;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageTag {
    Cutoff,
    Empirical,
    Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StageParams {
    pub box_radius: Option<f64>,
    pub ensemble_size: Option<usize>,
    pub degree: Option<usize>,
    pub mass_ratio: Option<f64>,
    pub seed: Option<u64>,
}

/// One stage of the approximation pipeline and the functional it produces.
#[derive(Clone)]
pub struct ApproximationStage {
    pub tag: StageTag,
    pub params: StageParams,
    pub functional: Arc<dyn MeasureFunctional>,
}

pub fn cutoff_stage(u: Arc<dyn MeasureFunctional>, box_radius: f64) -> Result<ApproximationStage, CalculusError> {
    let f = CutoffFunctional::new(u, box_radius)?;
    Ok(ApproximationStage {
        tag: StageTag::Cutoff,
        params: StageParams { box_radius: Some(box_radius), ..Default::default() },
        functional: Arc::new(f),
    })
}

pub fn empirical_stage(
    u: Arc<dyn MeasureFunctional>,
    n: usize,
    seed: u64,
) -> Result<ApproximationStage, CalculusError> {
    let f = EmpiricalFunctional::new(u, n, seed)?;
    Ok(ApproximationStage {
        tag: StageTag::Empirical,
        params: StageParams { ensemble_size: Some(n), seed: Some(seed), ..Default::default() },
        functional: Arc::new(f),
    })
}

pub fn polynomial_stage(
    phi: &KernelFunctional,
    degree: usize,
    box_radius: f64,
    mass_ratio: f64,
) -> Result<ApproximationStage, CalculusError> {
    let f: CylindricalFunctional = polynomial::bernstein_functional(phi, degree, box_radius, mass_ratio)?;
    Ok(ApproximationStage {
        tag: StageTag::Polynomial,
        params: StageParams {
            box_radius: Some(box_radius),
            degree: Some(degree),
            mass_ratio: Some(mass_ratio),
            ..Default::default()
        },
        functional: Arc::new(f),
    })
}
