//! Named builtin functionals and test functions, selectable from configuration files.

use super::outer::{BilinearOuter, ScalarFunction};
use super::CylindricalFunctional;
use crate::error::CalculusError;
use crate::measure::TestFunction;
use std::sync::Arc;

/// The four reference functionals.
pub const NAMES: [&str; 4] = ["linear", "quadratic_of_linear", "tanh_of_second_moment", "product_two_integrals"];

/// Further functionals used by the experiment configurations.
pub const EXTRA_NAMES: [&str; 4] = ["tanh_of_linear", "sin_of_linear", "mass", "constant"];

/// Named test functions accepted as `psi`/`psi2` parameters.
pub const TEST_FUNCTIONS: [&str; 6] = ["one", "x", "x2", "tanh", "sin", "bump"];

/// Parameters of a builtin functional. Unset fields fall back to per-functional defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FunctionalParams {
    pub psi: Option<String>,
    pub psi2: Option<String>,
    pub constant: Option<f64>,
}

pub fn test_function(name: &str, dim: usize) -> Result<TestFunction, CalculusError> {
    Ok(match name {
        "one" => TestFunction::constant(dim, 1.0),
        "x" => TestFunction::coordinate(dim, 0),
        "x2" => TestFunction::squared_norm(dim),
        "tanh" => TestFunction::tanh_coordinate(dim, 0),
        "sin" => TestFunction::sine(dim, 0, 1.0, 0.0),
        "bump" => TestFunction::gaussian_bump(vec![0.0; dim], 1.0),
        other => return Err(CalculusError::UnknownBuiltin(format!("test function {other}"))),
    })
}

pub fn builtin(name: &str, dim: usize) -> Result<Arc<CylindricalFunctional>, CalculusError> {
    builtin_with(name, dim, &FunctionalParams::default())
}

pub fn builtin_with(name: &str, dim: usize, p: &FunctionalParams) -> Result<Arc<CylindricalFunctional>, CalculusError> {
    let psi = |default: &str| test_function(p.psi.as_deref().unwrap_or(default), dim);
    let u = match name {
        "linear" => CylindricalFunctional::linear(psi("x")?),
        "quadratic_of_linear" => CylindricalFunctional::scalar(ScalarFunction::square(), psi("x")?),
        "tanh_of_second_moment" => {
            CylindricalFunctional::scalar(ScalarFunction::tanh(), TestFunction::squared_norm(dim))
        }
        "product_two_integrals" => CylindricalFunctional::new(
            dim,
            Arc::new(BilinearOuter),
            vec![psi("x")?, test_function(p.psi2.as_deref().unwrap_or("x2"), dim)?],
        )?,
        "tanh_of_linear" => CylindricalFunctional::scalar(ScalarFunction::tanh(), psi("x")?),
        "sin_of_linear" => CylindricalFunctional::scalar(ScalarFunction::sin(), psi("x")?),
        "mass" => CylindricalFunctional::linear(TestFunction::constant(dim, 1.0)),
        "constant" => CylindricalFunctional::constant(dim, p.constant.unwrap_or(1.0)),
        other => return Err(CalculusError::UnknownBuiltin(other.to_string())),
    };
    Ok(Arc::new(u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::MeasureFunctional;
    use crate::measure::ParticleMeasure;

    #[test]
    fn all_names_resolve() {
        for n in NAMES.iter().chain(EXTRA_NAMES.iter()) {
            assert!(builtin(n, 1).is_ok(), "{n}");
        }
        for t in TEST_FUNCTIONS {
            assert!(test_function(t, 2).is_ok());
        }
        assert!(matches!(builtin("nope", 1), Err(CalculusError::UnknownBuiltin(_))));
    }

    #[test]
    fn product_two_integrals_example() {
        let u = builtin("product_two_integrals", 1).unwrap();
        let mu = ParticleMeasure::from_pairs(&[(2.0, 1.0)]).unwrap();
        assert_eq!(u.value(&mu).unwrap(), 8.0);
    }
}
