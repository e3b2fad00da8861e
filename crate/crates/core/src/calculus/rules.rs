//! Calculus rules and finite-difference cross-checks for measure functionals.

use super::outer::{ClosureOuter, ScalarFunction};
use super::quadrature::gauss_legendre_unit;
use super::{CylindricalFunctional, MeasureFunctional};
use crate::error::CalculusError;
use crate::linalg::{max_abs_diff, Matrix};
use crate::measure::ParticleMeasure;
use serde::Serialize;
use std::sync::Arc;

/// Default number of Gauss–Legendre nodes for the flat-derivative identity.
pub const DEFAULT_QUAD_NODES: usize = 16;
/// Mass perturbation used in measure-direction finite differences.
pub const MASS_EPS: f64 = 1e-4;

/// Both sides of `u(μ′) − u(μ) = ∫₀¹ ∫ δu(tμ′ + (1−t)μ, x) (μ′ − μ)(dx) dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlatDerivativeReport {
    pub lhs: f64,
    pub rhs: f64,
    pub abs_error: f64,
    pub nodes: usize,
}

/// The `t`-integrand `⟨μ′ − μ, δu(tμ′ + (1−t)μ, ·)⟩`.
pub fn flat_identity_integrand(
    u: &dyn MeasureFunctional,
    mu: &ParticleMeasure,
    mu_prime: &ParticleMeasure,
    t: f64,
) -> Result<f64, CalculusError> {
    let mt = mu_prime.convex_combine(mu, t)?;
    let p = u.prepare(&mt)?;
    Ok(p.first(mu_prime)? - p.first(mu)?)
}

pub fn verify_flat_identity(
    u: &dyn MeasureFunctional,
    mu: &ParticleMeasure,
    mu_prime: &ParticleMeasure,
    nodes: usize,
) -> Result<FlatDerivativeReport, CalculusError> {
    if nodes < 1 {
        return Err(CalculusError::InvalidParameter("at least one quadrature node required".into()));
    }
    let lhs = u.value(mu_prime)? - u.value(mu)?;
    let (t, w) = gauss_legendre_unit(nodes);
    let mut rhs = 0.0;
    for (ti, wi) in t.iter().zip(&w) {
        rhs += wi * flat_identity_integrand(u, mu, mu_prime, *ti)?;
    }
    Ok(FlatDerivativeReport { lhs, rhs, abs_error: (lhs - rhs).abs(), nodes })
}

/// The chain rule `δ(h∘g) = h′(g)·δg` evaluated two ways, with a finite-difference confirmation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainRuleReport {
    pub composed: f64,
    pub product_form: f64,
    pub residual: f64,
    pub finite_difference: f64,
}

pub fn chain_rule_check(
    h: &ScalarFunction,
    g: &CylindricalFunctional,
    mu: &ParticleMeasure,
    x: &[f64],
) -> Result<ChainRuleReport, CalculusError> {
    let composed_fn = g.compose(h.clone());
    let composed = composed_fn.flat_derivative(mu, x)?;
    let product_form = h.d1(g.value(mu)?) * g.flat_derivative(mu, x)?;
    let finite_difference = fd_flat_derivative(&composed_fn, mu, x, MASS_EPS)?;
    Ok(ChainRuleReport { composed, product_form, residual: (composed - product_form).abs(), finite_difference })
}

/// `|δ(fg)(μ,x) − f(μ)δg(μ,x) − g(μ)δf(μ,x)|`.
pub fn product_rule_residual(
    f: &CylindricalFunctional,
    g: &CylindricalFunctional,
    mu: &ParticleMeasure,
    x: &[f64],
) -> Result<f64, CalculusError> {
    let fg = f.product(g)?;
    let lhs = fg.flat_derivative(mu, x)?;
    let rhs = f.value(mu)? * g.flat_derivative(mu, x)? + g.value(mu)? * f.flat_derivative(mu, x)?;
    Ok((lhs - rhs).abs())
}

/// `|δ²u(μ,x,y) − δ²u(μ,y,x)|`.
pub fn symmetry_residual(
    u: &dyn MeasureFunctional,
    mu: &ParticleMeasure,
    x: &[f64],
    y: &[f64],
) -> Result<f64, CalculusError> {
    Ok((u.flat_derivative2(mu, x, y)? - u.flat_derivative2(mu, y, x)?).abs())
}

/// Compares `D_x δ²u(μ,x,y)` with the flat derivative at `y` of `μ ↦ D_μu(μ,x)`, the latter
/// built as a new cylindrical functional per component.
pub fn mixed_derivative_residual(
    u: &CylindricalFunctional,
    mu: &ParticleMeasure,
    x: &[f64],
    y: &[f64],
) -> Result<f64, CalculusError> {
    let d = u.dim();
    let n = u.arity();
    let grads = u.inner_gradients(x);
    let mut via_flat = vec![0.0; d];
    for (j, slot) in via_flat.iter_mut().enumerate() {
        let c: Vec<f64> = grads.iter().map(|g| g[j]).collect();
        let outer = u.outer().clone();
        let outer2 = u.outer().clone();
        let c2 = c.clone();
        let component = ClosureOuter {
            name: format!("D_mu component {j}"),
            arity: n,
            f: Arc::new(move |r| {
                let mut g = vec![0.0; r.len()];
                outer.gradient(r, &mut g);
                g.iter().zip(&c).map(|(a, b)| a * b).sum()
            }),
            grad: Arc::new(move |r, out| {
                let k = r.len();
                let mut h = vec![0.0; k * k];
                outer2.hessian(r, &mut h);
                for l in 0..k {
                    out[l] = (0..k).map(|m| c2[m] * h[m * k + l]).sum();
                }
            }),
            hess: Arc::new(|_, out| out.fill(f64::NAN)),
            sup: None,
        };
        let fj = CylindricalFunctional::new(d, Arc::new(component), u.inner().to_vec())?;
        *slot = fj.flat_derivative(mu, y)?;
    }
    Ok(max_abs_diff(&u.x_flat_derivative2(mu, x, y)?, &via_flat))
}

/// Second-order forward difference of `ε ↦ F(μ + εδₓ)` at `ε = 0`, which keeps weights nonnegative.
fn forward_mass_difference<F>(mu: &ParticleMeasure, x: &[f64], eps: f64, mut f: F) -> Result<f64, CalculusError>
where
    F: FnMut(&ParticleMeasure) -> Result<f64, CalculusError>,
{
    let bump = |e: f64| -> Result<ParticleMeasure, CalculusError> { Ok(mu.concat(&ParticleMeasure::dirac(x, e)?)?) };
    let f0 = f(mu)?;
    let f1 = f(&bump(eps)?)?;
    let f2 = f(&bump(2.0 * eps)?)?;
    Ok((-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * eps))
}

pub fn fd_flat_derivative(
    u: &dyn MeasureFunctional,
    mu: &ParticleMeasure,
    x: &[f64],
    eps: f64,
) -> Result<f64, CalculusError> {
    forward_mass_difference(mu, x, eps, |m| u.value(m))
}

pub fn fd_flat_derivative2(
    u: &dyn MeasureFunctional,
    mu: &ParticleMeasure,
    x: &[f64],
    y: &[f64],
    eps: f64,
) -> Result<f64, CalculusError> {
    forward_mass_difference(mu, y, eps, |m| u.flat_derivative(m, x))
}

/// Default spatial step `10⁻⁴·(1 + |x|)`.
pub fn spatial_step(x: &[f64]) -> f64 {
    1e-4 * (1.0 + crate::linalg::norm(x))
}

/// Central difference of a vector-valued spatial map; column `k` holds `∂ₖ`.
fn central_jacobian<F>(x: &[f64], h: f64, len: usize, mut f: F) -> Result<Vec<Vec<f64>>, CalculusError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, CalculusError>,
{
    let mut cols = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += h;
        xm[k] -= h;
        let (fp, fm) = (f(&xp)?, f(&xm)?);
        debug_assert_eq!(fp.len(), len);
        cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect());
    }
    Ok(cols)
}

/// Absolute differences between analytic derivatives and finite differences at one probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeFdReport {
    pub flat: f64,
    pub flat2: f64,
    pub l: f64,
    pub x_l: f64,
    pub x_flat2: f64,
    pub l2: f64,
}

impl DerivativeFdReport {
    pub fn max(&self) -> f64 {
        [self.flat, self.flat2, self.l, self.x_l, self.x_flat2, self.l2].into_iter().fold(0.0, f64::max)
    }
}

/// Checks all six derivative evaluators against finite differences: mass perturbations of size
/// `eps` in measure directions and central differences with step `h` in space.
pub fn derivative_fd_check(
    u: &dyn MeasureFunctional,
    mu: &ParticleMeasure,
    x: &[f64],
    y: &[f64],
    eps: f64,
    h: Option<f64>,
) -> Result<DerivativeFdReport, CalculusError> {
    let d = u.dim();
    let hx = h.unwrap_or_else(|| spatial_step(x));
    let hy = h.unwrap_or_else(|| spatial_step(y));

    let flat = (u.flat_derivative(mu, x)? - fd_flat_derivative(u, mu, x, eps)?).abs();
    let flat2 = (u.flat_derivative2(mu, x, y)? - fd_flat_derivative2(u, mu, x, y, eps)?).abs();

    let l_fd = central_jacobian(x, hx, 1, |z| Ok(vec![u.flat_derivative(mu, z)?]))?;
    let l_fd: Vec<f64> = l_fd.iter().map(|c| c[0]).collect();
    let l = max_abs_diff(&u.l_derivative(mu, x)?, &l_fd);

    let xl_cols = central_jacobian(x, hx, d, |z| u.l_derivative(mu, z))?;
    let xl = u.x_l_derivative(mu, x)?;
    let x_l = jacobian_diff(&xl, &xl_cols);

    let xf_fd = central_jacobian(x, hx, 1, |z| Ok(vec![u.flat_derivative2(mu, z, y)?]))?;
    let xf_fd: Vec<f64> = xf_fd.iter().map(|c| c[0]).collect();
    let x_flat2 = max_abs_diff(&u.x_flat_derivative2(mu, x, y)?, &xf_fd);

    let l2_cols = central_jacobian(y, hy, d, |z| u.x_flat_derivative2(mu, x, z))?;
    let l2m = u.l_derivative2(mu, x, y)?;
    let l2 = jacobian_diff(&l2m, &l2_cols);

    Ok(DerivativeFdReport { flat, flat2, l, x_l, x_flat2, l2 })
}

/// `max |M[i][k] − cols[k][i]|`.
fn jacobian_diff(m: &Matrix, cols: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0_f64;
    for (k, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            worst = worst.max((m[(i, k)] - v).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::registry;
    use crate::measure::TestFunction;

    fn mu8() -> ParticleMeasure {
        ParticleMeasure::from_pairs(&[
            (-1.3, 0.1),
            (-0.6, 0.2),
            (0.1, 0.05),
            (0.4, 0.15),
            (0.9, 0.1),
            (1.2, 0.2),
            (1.8, 0.1),
            (2.2, 0.1),
        ])
        .unwrap()
    }

    #[test]
    fn flat_identity_exact_cases() {
        let mu = ParticleMeasure::from_pairs(&[(0.3, 0.7), (-1.0, 0.2)]).unwrap();
        let mp = ParticleMeasure::from_pairs(&[(1.1, 0.4), (2.0, 0.9), (-0.2, 0.1)]).unwrap();
        let lin = CylindricalFunctional::linear(TestFunction::tanh_coordinate(1, 0));
        assert!(verify_flat_identity(&lin, &mu, &mp, 2).unwrap().abs_error <= 1e-14);
        let quad = CylindricalFunctional::scalar(ScalarFunction::square(), TestFunction::coordinate(1, 0));
        assert!(verify_flat_identity(&quad, &mu, &mp, 2).unwrap().abs_error <= 1e-14);
    }

    #[test]
    fn flat_identity_error_decreases_with_nodes() {
        let u = registry::builtin("tanh_of_second_moment", 1).unwrap();
        let mu = mu8();
        let mp = ParticleMeasure::from_pairs(&[(0.5, 0.3), (-1.5, 0.4), (1.0, 0.6)]).unwrap();
        let errs: Vec<f64> =
            [2, 4, 8, 16].iter().map(|&n| verify_flat_identity(u.as_ref(), &mu, &mp, n).unwrap().abs_error).collect();
        for w in errs.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "{errs:?}");
        }
        assert!(errs[3] < 1e-12);
    }

    #[test]
    fn chain_and_product_rules() {
        let g = CylindricalFunctional::scalar(ScalarFunction::square(), TestFunction::sine(1, 0, 1.0, 0.2));
        let mu = mu8();
        for x in [-0.8, 0.3, 1.9] {
            let poly = chain_rule_check(&ScalarFunction::polynomial(vec![1.0, -2.0, 0.5]), &g, &mu, &[x]).unwrap();
            assert!(poly.residual <= 1e-12);
            let t = chain_rule_check(&ScalarFunction::tanh(), &g, &mu, &[x]).unwrap();
            assert!(t.residual <= 1e-12);
            assert!((t.composed - t.finite_difference).abs() <= 1e-6);
            let f = CylindricalFunctional::linear(TestFunction::tanh_coordinate(1, 0));
            assert!(product_rule_residual(&f, &g, &mu, &[x]).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn mixed_derivative_identity() {
        let u = CylindricalFunctional::scalar(ScalarFunction::tanh(), TestFunction::squared_norm(2))
            .product(&CylindricalFunctional::linear(TestFunction::sine(2, 1, 0.7, 0.1)))
            .unwrap();
        let mu = ParticleMeasure::new(2, vec![0.1, 0.2, -0.5, 1.0, 1.2, -0.3], vec![0.3, 0.5, 0.4]).unwrap();
        let r = mixed_derivative_residual(&u, &mu, &[0.4, -0.6], &[1.1, 0.2]).unwrap();
        assert!(r <= 1e-12, "{r}");
        assert_eq!(symmetry_residual(&u, &mu, &[0.4, -0.6], &[1.1, 0.2]).unwrap(), 0.0);
    }

    #[test]
    fn derivatives_agree_with_finite_differences() {
        let mu = mu8();
        for name in registry::NAMES {
            let u = registry::builtin(name, 1).unwrap();
            let rep = derivative_fd_check(u.as_ref(), &mu, &[0.7], &[-0.4], MASS_EPS, None).unwrap();
            assert!(rep.max() <= 1e-6, "{name}: {rep:?}");
        }
    }

    #[test]
    fn l_derivative_at_fine_step() {
        let u = registry::builtin("tanh_of_second_moment", 1).unwrap();
        let mu = mu8();
        let x = [0.37];
        let h = 1e-5;
        let fd =
            (u.flat_derivative(&mu, &[x[0] + h]).unwrap() - u.flat_derivative(&mu, &[x[0] - h]).unwrap()) / (2.0 * h);
        assert!((u.l_derivative(&mu, &x).unwrap()[0] - fd).abs() <= 1e-8);
    }
}
