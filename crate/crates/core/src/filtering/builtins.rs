//! Named models selectable from configuration files.

use super::model::{Bound, FilteringModel, LinearGaussian, ModelConstants};
use crate::error::FilterError;
use std::collections::BTreeMap;
use std::sync::Arc;

pub const MODEL_NAMES: [&str; 3] = ["ou_bounded", "linear_gauss", "brownian"];

/// Default parameters of each builtin model, in a stable order.
pub fn default_params(name: &str) -> Result<BTreeMap<String, f64>, FilterError> {
    let pairs: &[(&str, f64)] = match name {
        "ou_bounded" => &[("dim", 1.0), ("clip", 10.0), ("sigma", 1.0), ("sigma_bar", 0.3), ("h_scale", 1.0)],
        "linear_gauss" => &[("a", -1.0), ("b", 1.0), ("c", 1.0)],
        "brownian" => &[("sigma", 1.0), ("sigma_bar", 0.0), ("h", 0.0)],
        other => return Err(FilterError::UnknownModel(other.to_string())),
    };
    Ok(pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect())
}

/// Builds a named model; `overrides` may only contain that model's parameter names.
pub fn builtin_model(name: &str, overrides: &BTreeMap<String, f64>) -> Result<FilteringModel, FilterError> {
    let mut p = default_params(name)?;
    for (k, v) in overrides {
        match p.get_mut(k) {
            Some(slot) => *slot = *v,
            None => {
                return Err(FilterError::InvalidConfig(format!(
                    "model {name} has no parameter {k} (known: {})",
                    p.keys().cloned().collect::<Vec<_>>().join(", ")
                )))
            }
        }
    }
    let model = match name {
        "ou_bounded" => {
            let dim = p["dim"];
            if dim < 1.0 || dim.fract() != 0.0 {
                return Err(FilterError::InvalidConfig(format!("dim must be a positive integer, got {dim}")));
            }
            ou_bounded(dim as usize, p["clip"], p["sigma"], p["sigma_bar"], p["h_scale"])?
        }
        "linear_gauss" => linear_gauss(p["a"], p["b"], p["c"]),
        "brownian" => brownian(p["sigma"], p["sigma_bar"], p["h"]),
        _ => unreachable!("validated by default_params"),
    };
    Ok(model.with_params(p))
}

/// `f(x) = −clip(x)`, `σ = s·I`, `σ̄ = ε·I`, `h(x) = κ·tanh(x)` componentwise.
pub fn ou_bounded(dim: usize, clip: f64, s: f64, eps: f64, kappa: f64) -> Result<FilteringModel, FilterError> {
    if !(clip > 0.0) || s == 0.0 {
        return Err(FilterError::InvalidConfig("ou_bounded needs clip > 0 and sigma != 0".into()));
    }
    let rd = (dim as f64).sqrt();
    let constants = ModelConstants {
        drift: Bound::new(clip * rd, 1.0),
        sigma: Bound::new(s.abs() * rd, 0.0),
        sigma_bar: Bound::new(eps.abs() * rd, 0.0),
        obs: Bound::new(kappa.abs() * rd, kappa.abs()),
        ellipticity: Some(s * s),
    };
    let diag = move |c: f64| {
        move |_: &[f64], o: &mut [f64]| {
            o.fill(0.0);
            for i in 0..dim {
                o[i * dim + i] = c;
            }
        }
    };
    Ok(FilteringModel::new(
        "ou_bounded",
        dim,
        Arc::new(move |x, o| {
            for (oi, xi) in o.iter_mut().zip(x) {
                *oi = -xi.clamp(-clip, clip);
            }
        }),
        Arc::new(diag(s)),
        Arc::new(diag(eps)),
        Arc::new(move |x, o| {
            for (oi, xi) in o.iter_mut().zip(x) {
                *oi = kappa * xi.tanh();
            }
        }),
        constants,
    ))
}

/// `f(x) = a x`, `σ = b`, `σ̄ = 0`, `h(x) = c x`. The drift and observation are unbounded.
pub fn linear_gauss(a: f64, b: f64, c: f64) -> FilteringModel {
    let constants = ModelConstants {
        drift: Bound::lipschitz_only(a.abs()),
        sigma: Bound::new(b.abs(), 0.0),
        sigma_bar: Bound::new(0.0, 0.0),
        obs: Bound::lipschitz_only(c.abs()),
        ellipticity: (b != 0.0).then_some(b * b),
    };
    FilteringModel::scalar("linear_gauss", move |x| a * x, move |_| b, |_| 0.0, move |x| c * x, constants)
        .with_linear_gaussian(LinearGaussian { a, b, c })
}

/// Driftless signal with constant coefficients and constant observation function.
pub fn brownian(s: f64, eps: f64, h: f64) -> FilteringModel {
    let constants = ModelConstants {
        drift: Bound::new(0.0, 0.0),
        sigma: Bound::new(s.abs(), 0.0),
        sigma_bar: Bound::new(eps.abs(), 0.0),
        obs: Bound::new(h.abs(), 0.0),
        ellipticity: (s != 0.0).then_some(s * s),
    };
    FilteringModel::scalar("brownian", |_| 0.0, move |_| s, move |_| eps, move |_| h, constants)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::TestFunction;

    #[test]
    fn builtins_resolve_and_reject_unknown_parameters() {
        for n in MODEL_NAMES {
            assert!(builtin_model(n, &BTreeMap::new()).is_ok());
        }
        let bad: BTreeMap<String, f64> = [("nope".to_string(), 1.0)].into();
        assert!(matches!(builtin_model("ou_bounded", &bad), Err(FilterError::InvalidConfig(_))));
        assert!(matches!(builtin_model("x", &BTreeMap::new()), Err(FilterError::UnknownModel(_))));
    }

    #[test]
    fn declared_constants_hold_on_samples() {
        let m = builtin_model("ou_bounded", &BTreeMap::new()).unwrap();
        assert!(m.satisfies_hypotheses());
        let rep = m.check_hypotheses(12.0, 2000, 3);
        assert!(rep.consistent(), "{:?}", rep.violations);
        let m2 = ou_bounded(2, 3.0, 0.8, 0.2, 0.5).unwrap();
        assert!(m2.check_hypotheses(5.0, 2000, 4).consistent());
    }

    #[test]
    fn linear_gauss_is_flagged() {
        let m = builtin_model("linear_gauss", &BTreeMap::new()).unwrap();
        assert!(!m.satisfies_hypotheses());
        assert!(m.linear_gaussian().is_some());
    }

    #[test]
    fn understated_constants_are_detected() {
        let mut c = *ou_bounded(1, 10.0, 1.0, 0.3, 1.0).unwrap().constants();
        c.obs = Bound::new(0.5, 0.5);
        let m = FilteringModel::scalar("bad", |x| -x, |_| 1.0, |_| 0.3, f64::tanh, c);
        assert!(!m.check_hypotheses(3.0, 500, 1).consistent());
    }

    #[test]
    fn generators_annihilate_constants() {
        let m = builtin_model("ou_bounded", &BTreeMap::new()).unwrap();
        let one = TestFunction::constant(1, 1.0);
        assert_eq!(m.generator_a().apply(&one, &[0.7]).unwrap(), 0.0);
        assert_eq!(m.generator_b().apply(&one, &[0.7]), vec![0.0]);
        let x2 = TestFunction::squared_norm(1);
        let a = m.generator_a().apply(&x2, &[0.7]).unwrap();
        assert!((a - (-0.7 * 1.4 + 0.5 * (1.0 + 0.09) * 2.0)).abs() < 1e-14);
        assert!((m.generator_b().apply(&x2, &[0.7])[0] - 0.3 * 1.4).abs() < 1e-15);
    }
}
