use super::outer::{ComposedOuter, OuterFunction, ProductOuter, ScalarFunction, SeparableSum};
use super::{check_dim, MeasureFunctional, PreparedFunctional};
use crate::error::CalculusError;
use crate::linalg::Matrix;
use crate::measure::{ParticleMeasure, TestFunction};
use std::sync::Arc;

/// `u(μ) = g(⟨μ,ψ₁⟩, …, ⟨μ,ψₙ⟩)` with closed-form derivatives of every order up to two.
#[derive(Clone)]
pub struct CylindricalFunctional {
    dim: usize,
    outer: Arc<dyn OuterFunction>,
    inner: Vec<TestFunction>,
}

impl std::fmt::Debug for CylindricalFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// The integrals `rₖ = ⟨μ,ψₖ⟩` together with `∇g(r)` and `∇²g(r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CylindricalState {
    pub r: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

impl CylindricalFunctional {
    pub fn new(dim: usize, outer: Arc<dyn OuterFunction>, inner: Vec<TestFunction>) -> Result<Self, CalculusError> {
        if outer.arity() != inner.len() {
            return Err(CalculusError::Arity { outer: outer.arity(), inner: inner.len() });
        }
        for psi in &inner {
            check_dim(dim, psi.dim())?;
        }
        Ok(Self { dim, outer, inner })
    }

    /// `u(μ) = ⟨μ,ψ⟩`.
    pub fn linear(psi: TestFunction) -> Self {
        let dim = psi.dim();
        Self { dim, outer: Arc::new(ScalarFunction::identity()), inner: vec![psi] }
    }

    /// `u(μ) = s(⟨μ,ψ⟩)`.
    pub fn scalar(s: ScalarFunction, psi: TestFunction) -> Self {
        let dim = psi.dim();
        Self { dim, outer: Arc::new(s), inner: vec![psi] }
    }

    /// The constant functional.
    pub fn constant(dim: usize, c: f64) -> Self {
        Self { dim, outer: Arc::new(super::outer::ConstantOuter(c)), inner: Vec::new() }
    }

    pub fn outer(&self) -> &Arc<dyn OuterFunction> {
        &self.outer
    }

    pub fn inner(&self) -> &[TestFunction] {
        &self.inner
    }

    pub fn arity(&self) -> usize {
        self.inner.len()
    }

    pub fn label(&self) -> String {
        let names: Vec<&str> = self.inner.iter().map(|p| p.name()).collect();
        format!("{}[{}]", self.outer.name(), names.join(", "))
    }

    /// `h ∘ u`, again cylindrical.
    pub fn compose(&self, h: ScalarFunction) -> Self {
        Self { dim: self.dim, outer: Arc::new(ComposedOuter { h, g: self.outer.clone() }), inner: self.inner.clone() }
    }

    /// `u · v` as a cylindrical functional on the concatenated inner functions.
    pub fn product(&self, other: &Self) -> Result<Self, CalculusError> {
        check_dim(self.dim, other.dim)?;
        let mut inner = self.inner.clone();
        inner.extend(other.inner.iter().cloned());
        Self::new(self.dim, Arc::new(ProductOuter { left: self.outer.clone(), right: other.outer.clone() }), inner)
    }

    /// `a·u + b·v`.
    pub fn linear_combination(a: f64, u: &Self, b: f64, v: &Self) -> Result<Self, CalculusError> {
        check_dim(u.dim, v.dim)?;
        let mut inner = u.inner.clone();
        inner.extend(v.inner.iter().cloned());
        Self::new(u.dim, Arc::new(SeparableSum { parts: vec![(a, u.outer.clone()), (b, v.outer.clone())] }), inner)
    }

    /// Integrals and outer derivatives at `μ`.
    pub fn state(&self, mu: &ParticleMeasure) -> Result<CylindricalState, CalculusError> {
        check_dim(self.dim, mu.dim())?;
        let r: Vec<f64> = self.inner.iter().map(|psi| mu.integrate_fn(|x| psi.value(x))).collect();
        Ok(self.state_from_integrals(r))
    }

    /// Builds the state from precomputed integrals `rₖ`.
    pub fn state_from_integrals(&self, r: Vec<f64>) -> CylindricalState {
        let n = self.arity();
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n * n];
        self.outer.gradient(&r, &mut grad);
        self.outer.hessian(&r, &mut hess);
        CylindricalState { value: self.outer.value(&r), r, grad, hess }
    }

    /// Values `ψₖ(x)`.
    pub fn inner_values(&self, x: &[f64]) -> Vec<f64> {
        self.inner.iter().map(|p| p.value(x)).collect()
    }

    /// Gradients `Dψₖ(x)`, one row per inner function.
    pub fn inner_gradients(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.inner.iter().map(|p| p.gradient(x)).collect()
    }

    fn inner_hessians(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, CalculusError> {
        self.inner
            .iter()
            .map(|p| {
                p.hessian(x).ok_or_else(|| CalculusError::Unsupported {
                    functional: self.label(),
                    capability: "second spatial derivatives (inner function has no Hessian)",
                })
            })
            .collect()
    }

    pub fn flat_at(&self, s: &CylindricalState, x: &[f64]) -> f64 {
        self.inner.iter().zip(&s.grad).map(|(p, g)| g * p.value(x)).sum()
    }

    pub fn flat2_at(&self, s: &CylindricalState, x: &[f64], y: &[f64]) -> f64 {
        let px = self.inner_values(x);
        let py = self.inner_values(y);
        bilinear(&s.hess, &px, &py)
    }

    pub fn l_at(&self, s: &CylindricalState, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        let mut g = vec![0.0; self.dim];
        for (p, dk) in self.inner.iter().zip(&s.grad) {
            p.gradient_into(x, &mut g);
            crate::linalg::axpy(*dk, &g, &mut out);
        }
        out
    }

    pub fn l2_at(&self, s: &CylindricalState, x: &[f64], y: &[f64]) -> Matrix {
        let n = self.arity();
        let gx = self.inner_gradients(x);
        let gy = self.inner_gradients(y);
        let mut m = Matrix::zeros(self.dim);
        for k in 0..n {
            for l in 0..n {
                let c = s.hess[k * n + l];
                if c != 0.0 {
                    m += &Matrix::outer(&gx[k], &gy[l]).scale(c);
                }
            }
        }
        m
    }

    pub fn x_l_at(&self, s: &CylindricalState, x: &[f64]) -> Result<Matrix, CalculusError> {
        let d = self.dim;
        let hs = self.inner_hessians(x)?;
        let mut data = vec![0.0; d * d];
        for (h, dk) in hs.iter().zip(&s.grad) {
            crate::linalg::axpy(*dk, h, &mut data);
        }
        Ok(Matrix::from_row_major(d, data))
    }

    pub fn x_flat2_at(&self, s: &CylindricalState, x: &[f64], y: &[f64]) -> Vec<f64> {
        let n = self.arity();
        let gx = self.inner_gradients(x);
        let py = self.inner_values(y);
        let mut out = vec![0.0; self.dim];
        for k in 0..n {
            let c: f64 = (0..n).map(|l| s.hess[k * n + l] * py[l]).sum();
            crate::linalg::axpy(c, &gx[k], &mut out);
        }
        out
    }
}

pub(crate) fn bilinear(h: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut s = 0.0;
    for k in 0..n {
        for l in 0..n {
            s += h[k * n + l] * a[k] * b[l];
        }
    }
    s
}

impl MeasureFunctional for CylindricalFunctional {
    fn name(&self) -> String {
        self.label()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, mu: &ParticleMeasure) -> Result<f64, CalculusError> {
        Ok(self.state(mu)?.value)
    }

    fn flat_derivative(&self, mu: &ParticleMeasure, x: &[f64]) -> Result<f64, CalculusError> {
        check_dim(self.dim, x.len())?;
        Ok(self.flat_at(&self.state(mu)?, x))
    }

    fn flat_derivative2(&self, mu: &ParticleMeasure, x: &[f64], y: &[f64]) -> Result<f64, CalculusError> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, y.len())?;
        Ok(self.flat2_at(&self.state(mu)?, x, y))
    }

    fn l_derivative(&self, mu: &ParticleMeasure, x: &[f64]) -> Result<Vec<f64>, CalculusError> {
        check_dim(self.dim, x.len())?;
        Ok(self.l_at(&self.state(mu)?, x))
    }

    fn l_derivative2(&self, mu: &ParticleMeasure, x: &[f64], y: &[f64]) -> Result<Matrix, CalculusError> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, y.len())?;
        Ok(self.l2_at(&self.state(mu)?, x, y))
    }

    fn x_l_derivative(&self, mu: &ParticleMeasure, x: &[f64]) -> Result<Matrix, CalculusError> {
        check_dim(self.dim, x.len())?;
        self.x_l_at(&self.state(mu)?, x)
    }

    fn x_flat_derivative2(&self, mu: &ParticleMeasure, x: &[f64], y: &[f64]) -> Result<Vec<f64>, CalculusError> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, y.len())?;
        Ok(self.x_flat2_at(&self.state(mu)?, x, y))
    }

    fn sup_bound(&self) -> Option<f64> {
        self.outer.sup_bound()
    }

    fn prepare<'a>(&'a self, mu: &ParticleMeasure) -> Result<Box<dyn PreparedFunctional + 'a>, CalculusError> {
        Ok(Box::new(PreparedCylindrical { u: self, state: self.state(mu)? }))
    }
}

struct PreparedCylindrical<'a> {
    u: &'a CylindricalFunctional,
    state: CylindricalState,
}

impl PreparedCylindrical<'_> {
    fn integrals(&self, nu: &ParticleMeasure) -> Result<Vec<f64>, CalculusError> {
        check_dim(self.u.dim, nu.dim())?;
        Ok(self.u.inner.iter().map(|p| nu.integrate_fn(|x| p.value(x))).collect())
    }
}

impl PreparedFunctional for PreparedCylindrical<'_> {
    fn value(&self) -> f64 {
        self.state.value
    }

    fn first(&self, nu: &ParticleMeasure) -> Result<f64, CalculusError> {
        let z = self.integrals(nu)?;
        Ok(self.state.grad.iter().zip(&z).map(|(g, v)| g * v).sum())
    }

    fn second(&self, nu1: &ParticleMeasure, nu2: &ParticleMeasure) -> Result<f64, CalculusError> {
        let z1 = self.integrals(nu1)?;
        let z2 = self.integrals(nu2)?;
        Ok(bilinear(&self.state.hess, &z1, &z2))
    }
}

#[cfg(test)]
mod tests {
    use super::super::outer::BilinearOuter;
    use super::*;

    fn quad_x() -> CylindricalFunctional {
        CylindricalFunctional::scalar(ScalarFunction::square(), TestFunction::coordinate(1, 0))
    }

    #[test]
    fn evaluation_examples() {
        let mu = ParticleMeasure::from_pairs(&[(3.0, 1.0)]).unwrap();
        assert_eq!(quad_x().value(&mu).unwrap(), 9.0);
        let mass = CylindricalFunctional::linear(TestFunction::constant(1, 1.0));
        let mu2 = ParticleMeasure::from_pairs(&[(3.0, 1.5), (-1.0, 0.25)]).unwrap();
        assert_eq!(mass.value(&mu2).unwrap(), 1.75);
        let prod = CylindricalFunctional::new(
            1,
            Arc::new(BilinearOuter),
            vec![TestFunction::coordinate(1, 0), TestFunction::squared_norm(1)],
        )
        .unwrap();
        let mu3 = ParticleMeasure::from_pairs(&[(2.0, 1.0)]).unwrap();
        assert_eq!(prod.value(&mu3).unwrap(), 8.0);
    }

    #[test]
    fn derivative_examples() {
        let mu = ParticleMeasure::from_pairs(&[(1.0, 1.0)]).unwrap();
        let u = quad_x();
        assert_eq!(u.flat_derivative(&mu, &[3.0]).unwrap(), 6.0);
        assert_eq!(u.flat_derivative2(&mu, &[2.0], &[5.0]).unwrap(), 20.0);
        assert_eq!(u.l_derivative2(&mu, &[0.3], &[-7.0]).unwrap()[(0, 0)], 2.0);
        let lin = CylindricalFunctional::linear(TestFunction::tanh_coordinate(1, 0));
        assert_eq!(lin.flat_derivative(&mu, &[0.4]).unwrap(), 0.4f64.tanh());
        assert_eq!(lin.l_derivative2(&mu, &[0.1], &[0.2]).unwrap().max_abs(), 0.0);
        let t = 0.4f64.tanh();
        assert_eq!(lin.l_derivative(&mu, &[0.4]).unwrap(), vec![1.0 - t * t]);
    }

    #[test]
    fn arity_is_checked() {
        let e = CylindricalFunctional::new(1, Arc::new(BilinearOuter), vec![TestFunction::coordinate(1, 0)]);
        assert!(matches!(e, Err(CalculusError::Arity { outer: 2, inner: 1 })));
    }

    #[test]
    fn missing_hessian_is_a_capability_error() {
        let psi = TestFunction::without_hessian("x", 1, |x| x[0], |_, g| g[0] = 1.0, Default::default());
        let u = CylindricalFunctional::linear(psi);
        let mu = ParticleMeasure::from_pairs(&[(1.0, 1.0)]).unwrap();
        assert!(matches!(u.x_l_derivative(&mu, &[0.0]), Err(CalculusError::Unsupported { .. })));
    }

    #[test]
    fn prepared_pairings_match_pointwise_sums() {
        let u = quad_x().compose(ScalarFunction::tanh());
        let mu = ParticleMeasure::from_pairs(&[(0.3, 0.4), (-1.0, 0.7)]).unwrap();
        let nu1 = ParticleMeasure::from_pairs(&[(2.0, 0.5), (0.1, 1.5)]).unwrap();
        let nu2 = ParticleMeasure::from_pairs(&[(-0.4, 0.9)]).unwrap();
        let p = u.prepare(&mu).unwrap();
        let first: f64 = nu1.atoms().map(|(x, w)| w * u.flat_derivative(&mu, x).unwrap()).sum();
        assert!((p.first(&nu1).unwrap() - first).abs() < 1e-14);
        let mut second = 0.0;
        for (x, wx) in nu1.atoms() {
            for (y, wy) in nu2.atoms() {
                second += wx * wy * u.flat_derivative2(&mu, x, y).unwrap();
            }
        }
        assert!((p.second(&nu1, &nu2).unwrap() - second).abs() < 1e-14);
    }
}
