//! Functionals on finite measures and their derivatives.
//!
//! Conventions, for `u: M⁺(ℝᵈ) → ℝ`:
//!
//! * `δu(μ,x)` is the linear functional (flat) derivative, `δ²u(μ,x,y)` its second order analogue;
//! * `D_μu(μ,x) = D_x δu(μ,x)` and `D²_μu(μ,x,y) = D_x D_yᵀ δ²u(μ,x,y)`;
//! * `D_x D_μu(μ,x)` is the spatial Jacobian of `D_μu`, and `D_x δ²u(μ,x,y)` the gradient of
//!   `δ²u` in its first spatial argument.
//!
//! No centering convention is imposed on `δu`.

pub mod approx;
mod cylindrical;
mod lift;
mod measure_map;
mod norm;
mod outer;
pub mod quadrature;
pub mod registry;
pub mod rules;
mod time_dependent;

pub use cylindrical::{CylindricalFunctional, CylindricalState};
pub use lift::HomogeneousLift;
pub use measure_map::MeasureMap;
pub use norm::{c2l_distance_sampled, C2lSampler};
pub use outer::{OuterFunction, ScalarFunction};
pub use rules::FlatDerivativeReport;
pub use time_dependent::TimeDependentFunctional;

pub use crate::measure::{TestFunction, TestFunctionBounds};

use crate::error::CalculusError;
use crate::linalg::Matrix;
use crate::measure::ParticleMeasure;

/// A real functional on finite measures with first and second order derivatives.
///
/// Implementations report [`CalculusError::Unsupported`] for derivatives they cannot provide.
pub trait MeasureFunctional: Send + Sync {
    fn name(&self) -> String;

    /// Spatial dimension of the measures the functional acts on.
    fn dim(&self) -> usize;

    fn value(&self, mu: &ParticleMeasure) -> Result<f64, CalculusError>;

    fn flat_derivative(&self, mu: &ParticleMeasure, x: &[f64]) -> Result<f64, CalculusError>;

    fn flat_derivative2(&self, mu: &ParticleMeasure, x: &[f64], y: &[f64]) -> Result<f64, CalculusError>;

    fn l_derivative(&self, mu: &ParticleMeasure, x: &[f64]) -> Result<Vec<f64>, CalculusError>;

    fn l_derivative2(&self, mu: &ParticleMeasure, x: &[f64], y: &[f64]) -> Result<Matrix, CalculusError>;

    fn x_l_derivative(&self, mu: &ParticleMeasure, x: &[f64]) -> Result<Matrix, CalculusError>;

    fn x_flat_derivative2(&self, mu: &ParticleMeasure, x: &[f64], y: &[f64]) -> Result<Vec<f64>, CalculusError>;

    /// An upper bound on `sup |u|`, when known.
    fn sup_bound(&self) -> Option<f64> {
        None
    }

    /// Freezes the functional at `mu` for repeated pairings with other measures.
    fn prepare<'a>(&'a self, mu: &ParticleMeasure) -> Result<Box<dyn PreparedFunctional + 'a>, CalculusError> {
        Ok(Box::new(GenericPrepared { u: self, mu: mu.clone(), value: self.value(mu)? }))
    }
}

/// A functional frozen at a measure `μ`.
///
/// `first(ν) = ⟨ν, δu(μ,·)⟩` and `second(ν₁,ν₂) = ⟨ν₁⊗ν₂, δ²u(μ,·,·)⟩`.
pub trait PreparedFunctional {
    fn value(&self) -> f64;
    fn first(&self, nu: &ParticleMeasure) -> Result<f64, CalculusError>;
    fn second(&self, nu1: &ParticleMeasure, nu2: &ParticleMeasure) -> Result<f64, CalculusError>;
}

struct GenericPrepared<'a, U: MeasureFunctional + ?Sized> {
    u: &'a U,
    mu: ParticleMeasure,
    value: f64,
}

impl<U: MeasureFunctional + ?Sized> PreparedFunctional for GenericPrepared<'_, U> {
    fn value(&self) -> f64 {
        self.value
    }

    fn first(&self, nu: &ParticleMeasure) -> Result<f64, CalculusError> {
        let mut acc = crate::stats::CompensatedSum::new();
        for (x, w) in nu.atoms() {
            acc.add(w * self.u.flat_derivative(&self.mu, x)?);
        }
        Ok(acc.value())
    }

    fn second(&self, nu1: &ParticleMeasure, nu2: &ParticleMeasure) -> Result<f64, CalculusError> {
        let mut acc = crate::stats::CompensatedSum::new();
        for (x, wx) in nu1.atoms() {
            for (y, wy) in nu2.atoms() {
                acc.add(wx * wy * self.u.flat_derivative2(&self.mu, x, y)?);
            }
        }
        Ok(acc.value())
    }
}

impl<T: MeasureFunctional + ?Sized> MeasureFunctional for Box<T> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, mu: &ParticleMeasure) -> Result<f64, CalculusError> {
        (**self).value(mu)
    }
    fn flat_derivative(&self, mu: &ParticleMeasure, x: &[f64]) -> Result<f64, CalculusError> {
        (**self).flat_derivative(mu, x)
    }
    fn flat_derivative2(&self, mu: &ParticleMeasure, x: &[f64], y: &[f64]) -> Result<f64, CalculusError> {
        (**self).flat_derivative2(mu, x, y)
    }
    fn l_derivative(&self, mu: &ParticleMeasure, x: &[f64]) -> Result<Vec<f64>, CalculusError> {
        (**self).l_derivative(mu, x)
    }
    fn l_derivative2(&self, mu: &ParticleMeasure, x: &[f64], y: &[f64]) -> Result<Matrix, CalculusError> {
        (**self).l_derivative2(mu, x, y)
    }
    fn x_l_derivative(&self, mu: &ParticleMeasure, x: &[f64]) -> Result<Matrix, CalculusError> {
        (**self).x_l_derivative(mu, x)
    }
    fn x_flat_derivative2(&self, mu: &ParticleMeasure, x: &[f64], y: &[f64]) -> Result<Vec<f64>, CalculusError> {
        (**self).x_flat_derivative2(mu, x, y)
    }
    fn sup_bound(&self) -> Option<f64> {
        (**self).sup_bound()
    }
    fn prepare<'a>(&'a self, mu: &ParticleMeasure) -> Result<Box<dyn PreparedFunctional + 'a>, CalculusError> {
        (**self).prepare(mu)
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<(), CalculusError> {
    if expected != found {
        return Err(CalculusError::Dimension { expected, found });
    }
    Ok(())
}
