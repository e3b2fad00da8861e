use crate::calculus::{check_dim, MeasureFunctional};
use crate::error::{CalculusError, MeasureError};
use crate::linalg::Matrix;
use crate::measure::ParticleMeasure;
use std::sync::Arc;

/// A kernel `φ(x₁,…,x_r, z)` on `ℝʳ × (0,∞)`, symmetric in the `x` arguments, with partial
/// derivatives up to order two. Slots are one-dimensional.
pub trait KernelFunction: Send + Sync {
    fn order(&self) -> usize;
    fn value(&self, xs: &[f64], z: f64) -> f64;
    fn d_z(&self, xs: &[f64], z: f64) -> f64;
    fn d_zz(&self, xs: &[f64], z: f64) -> f64;
    fn d_slot(&self, xs: &[f64], z: f64, i: usize) -> f64;
    fn d_slot2(&self, xs: &[f64], z: f64, i: usize, j: usize) -> f64;
    fn d_slot_z(&self, xs: &[f64], z: f64, i: usize) -> f64;
}

/// `φ(x₁,x₂,z) = exp(−(x₁−x₂)²/2) / (1+z)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianPairKernel;

impl GaussianPairKernel {
    fn parts(xs: &[f64]) -> (f64, f64) {
        let d = xs[0] - xs[1];
        (d, (-0.5 * d * d).exp())
    }
}

impl KernelFunction for GaussianPairKernel {
    fn order(&self) -> usize {
        2
    }
    fn value(&self, xs: &[f64], z: f64) -> f64 {
        Self::parts(xs).1 / (1.0 + z)
    }
    fn d_z(&self, xs: &[f64], z: f64) -> f64 {
        -Self::parts(xs).1 / ((1.0 + z) * (1.0 + z))
    }
    fn d_zz(&self, xs: &[f64], z: f64) -> f64 {
        2.0 * Self::parts(xs).1 / (1.0 + z).powi(3)
    }
    fn d_slot(&self, xs: &[f64], z: f64, i: usize) -> f64 {
        let (d, e) = Self::parts(xs);
        let s = if i == 0 { -d } else { d };
        s * e / (1.0 + z)
    }
    fn d_slot2(&self, xs: &[f64], z: f64, i: usize, j: usize) -> f64 {
        let (d, e) = Self::parts(xs);
        let v = if i == j { (d * d - 1.0) * e } else { (1.0 - d * d) * e };
        v / (1.0 + z)
    }
    fn d_slot_z(&self, xs: &[f64], z: f64, i: usize) -> f64 {
        let (d, e) = Self::parts(xs);
        let s = if i == 0 { -d } else { d };
        -s * e / ((1.0 + z) * (1.0 + z))
    }
}

/// `f(μ) = ⟨(μ/m)^{⊗r}, φ(·, m)⟩` with `m = μ(ℝ)`, on one-dimensional measures.
#[derive(Clone)]
pub struct KernelFunctional {
    kernel: Arc<dyn KernelFunction>,
}

/// `E[F(X₁,…,X_q)]` for i.i.d. `Xᵢ ~ π`, by enumeration of atom tuples.
fn expect<F: FnMut(&[f64]) -> f64>(
    pi: &ParticleMeasure,
    q: usize,
    prefix: &mut Vec<f64>,
    tail: &[f64],
    f: &mut F,
) -> f64 {
    if prefix.len() == q {
        let mut xs = prefix.clone();
        xs.extend_from_slice(tail);
        return f(&xs);
    }
    let mut s = 0.0;
    for (x, w) in pi.atoms() {
        prefix.push(x[0]);
        s += w * expect(pi, q, prefix, tail, f);
        prefix.pop();
    }
    s
}

impl KernelFunctional {
    pub fn new(kernel: Arc<dyn KernelFunction>) -> Result<Self, CalculusError> {
        let r = kernel.order();
        if !(1..=3).contains(&r) {
            return Err(CalculusError::InvalidParameter(format!("kernel order must be 1, 2 or 3, got {r}")));
        }
        Ok(Self { kernel })
    }

    pub fn kernel(&self) -> &Arc<dyn KernelFunction> {
        &self.kernel
    }

    pub fn order(&self) -> usize {
        self.kernel.order()
    }

    fn split(&self, mu: &ParticleMeasure) -> Result<(f64, ParticleMeasure), CalculusError> {
        check_dim(1, mu.dim())?;
        let m = mu.total_mass();
        if !(m > 0.0) {
            return Err(MeasureError::ZeroMass.into());
        }
        Ok((m, mu.scaled(1.0 / m)))
    }

    /// `E[G(X₁,…,X_{r−|tail|}, tail)]`.
    fn e<G: FnMut(&[f64]) -> f64>(&self, pi: &ParticleMeasure, tail: &[f64], mut g: G) -> f64 {
        let q = self.order() - tail.len();
        expect(pi, q, &mut Vec::with_capacity(q), tail, &mut g)
    }
}

impl MeasureFunctional for KernelFunctional {
    fn name(&self) -> String {
        format!("kernel(r={})", self.order())
    }

    fn dim(&self) -> usize {
        1
    }

    fn value(&self, mu: &ParticleMeasure) -> Result<f64, CalculusError> {
        let (m, pi) = self.split(mu)?;
        Ok(self.e(&pi, &[], |xs| self.kernel.value(xs, m)))
    }

    fn flat_derivative(&self, mu: &ParticleMeasure, x: &[f64]) -> Result<f64, CalculusError> {
        let (m, pi) = self.split(mu)?;
        let r = self.order() as f64;
        let k = &self.kernel;
        let a1 = self.e(&pi, x, |xs| k.value(xs, m));
        let s = self.e(&pi, &[], |xs| k.value(xs, m));
        let b = self.e(&pi, &[], |xs| k.d_z(xs, m));
        Ok(r / m * (a1 - s) + b)
    }

    fn flat_derivative2(&self, mu: &ParticleMeasure, x: &[f64], y: &[f64]) -> Result<f64, CalculusError> {
        let (m, pi) = self.split(mu)?;
        let r = self.order() as f64;
        let k = &self.kernel;
        let s = self.e(&pi, &[], |xs| k.value(xs, m));
        let b = self.e(&pi, &[], |xs| k.d_z(xs, m));
        let bz = self.e(&pi, &[], |xs| k.d_zz(xs, m));
        let a1x = self.e(&pi, x, |xs| k.value(xs, m));
        let a1y = self.e(&pi, y, |xs| k.value(xs, m));
        let a1zx = self.e(&pi, x, |xs| k.d_z(xs, m));
        let a1zy = self.e(&pi, y, |xs| k.d_z(xs, m));
        let a2 = if self.order() >= 2 { self.e(&pi, &[x[0], y[0]], |xs| k.value(xs, m)) } else { 0.0 };
        Ok(-r / m * (r / m * a1x + b)
            + r * (r - 1.0) / (m * m) * a2
            + r / m * (a1zx + a1zy)
            + bz
            + r * (r + 1.0) / (m * m) * s
            - r / m * (r / m * a1y + b))
    }

    fn l_derivative(&self, mu: &ParticleMeasure, x: &[f64]) -> Result<Vec<f64>, CalculusError> {
        let (m, pi) = self.split(mu)?;
        let r = self.order();
        let k = &self.kernel;
        Ok(vec![r as f64 / m * self.e(&pi, x, |xs| k.d_slot(xs, m, r - 1))])
    }

    fn l_derivative2(&self, mu: &ParticleMeasure, x: &[f64], y: &[f64]) -> Result<Matrix, CalculusError> {
        let (m, pi) = self.split(mu)?;
        let r = self.order();
        if r < 2 {
            return Ok(Matrix::zeros(1));
        }
        let k = &self.kernel;
        let v = self.e(&pi, &[x[0], y[0]], |xs| k.d_slot2(xs, m, r - 2, r - 1));
        Ok(Matrix::from_row_major(1, vec![(r * (r - 1)) as f64 / (m * m) * v]))
    }

    fn x_l_derivative(&self, mu: &ParticleMeasure, x: &[f64]) -> Result<Matrix, CalculusError> {
        let (m, pi) = self.split(mu)?;
        let r = self.order();
        let k = &self.kernel;
        let v = self.e(&pi, x, |xs| k.d_slot2(xs, m, r - 1, r - 1));
        Ok(Matrix::from_row_major(1, vec![r as f64 / m * v]))
    }

    fn x_flat_derivative2(&self, mu: &ParticleMeasure, x: &[f64], y: &[f64]) -> Result<Vec<f64>, CalculusError> {
        let (m, pi) = self.split(mu)?;
        let r = self.order();
        let rf = r as f64;
        let k = &self.kernel;
        let da1 = self.e(&pi, x, |xs| k.d_slot(xs, m, r - 1));
        let da1z = self.e(&pi, x, |xs| k.d_slot_z(xs, m, r - 1));
        let da2 = if r >= 2 { self.e(&pi, &[x[0], y[0]], |xs| k.d_slot(xs, m, r - 2)) } else { 0.0 };
        Ok(vec![-(rf / m) * (rf / m) * da1 + rf * (rf - 1.0) / (m * m) * da2 + rf / m * da1z])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::rules::{derivative_fd_check, MASS_EPS};

    #[test]
    fn kernel_functional_derivatives_match_finite_differences() {
        let f = KernelFunctional::new(Arc::new(GaussianPairKernel)).unwrap();
        let mu = ParticleMeasure::from_pairs(&[(-0.4, 0.5), (0.3, 0.8), (0.9, 0.4)]).unwrap();
        for (x, y) in [(0.2, -0.6), (0.8, 0.8), (-0.9, 0.1)] {
            let rep = derivative_fd_check(&f, &mu, &[x], &[y], MASS_EPS, None).unwrap();
            assert!(rep.max() < 1e-6, "{rep:?}");
        }
    }

    #[test]
    fn value_matches_direct_double_sum() {
        let f = KernelFunctional::new(Arc::new(GaussianPairKernel)).unwrap();
        let mu = ParticleMeasure::from_pairs(&[(-0.4, 0.5), (0.3, 1.5)]).unwrap();
        let m = 2.0;
        let direct = mu.product_integrate(|x, y| (-0.5 * (x[0] - y[0]).powi(2)).exp()) / (m * m) / (1.0 + m);
        assert!((f.value(&mu).unwrap() - direct).abs() < 1e-15);
    }
}
