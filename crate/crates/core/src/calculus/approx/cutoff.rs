use crate::calculus::{check_dim, MeasureFunctional, PreparedFunctional};
use crate::error::CalculusError;
use crate::linalg::Matrix;
use crate::measure::ParticleMeasure;
use std::sync::Arc;

/// One-dimensional bump: `1` on `[−N,N]`, `0` outside `[−N−1,N+1]`, quintic smoothstep between.
pub fn bump(t: f64, n: f64) -> f64 {
    let s = t.abs() - n;
    if s <= 0.0 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

pub fn bump_derivative(t: f64, n: f64) -> f64 {
    let s = t.abs() - n;
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        -30.0 * s * s * (1.0 - s) * (1.0 - s) * t.signum()
    }
}

pub fn bump_second_derivative(t: f64, n: f64) -> f64 {
    let s = t.abs() - n;
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        -60.0 * s * (1.0 - s) * (1.0 - 2.0 * s)
    }
}

/// `ûᴺ(μ) = u(ρᴺμ)` with `ρᴺ(x) = Πₖ bump(xₖ, N)`.
#[derive(Clone)]
pub struct CutoffFunctional {
    base: Arc<dyn MeasureFunctional>,
    n: f64,
}

struct Rho {
    value: f64,
    grad: Vec<f64>,
    hess: Matrix,
}

impl CutoffFunctional {
    pub fn new(base: Arc<dyn MeasureFunctional>, box_radius: f64) -> Result<Self, CalculusError> {
        if !(box_radius > 0.0) {
            return Err(CalculusError::InvalidParameter(format!("box radius must be positive, got {box_radius}")));
        }
        Ok(Self { base, n: box_radius })
    }

    pub fn box_radius(&self) -> f64 {
        self.n
    }

    pub fn rho(&self, x: &[f64]) -> f64 {
        x.iter().map(|&t| bump(t, self.n)).product()
    }

    fn rho_full(&self, x: &[f64]) -> Rho {
        let d = x.len();
        let b: Vec<f64> = x.iter().map(|&t| bump(t, self.n)).collect();
        let b1: Vec<f64> = x.iter().map(|&t| bump_derivative(t, self.n)).collect();
        let b2: Vec<f64> = x.iter().map(|&t| bump_second_derivative(t, self.n)).collect();
        let prod_except = |skip: &[usize]| -> f64 { (0..d).filter(|i| !skip.contains(i)).map(|i| b[i]).product() };
        let grad = (0..d).map(|i| b1[i] * prod_except(&[i])).collect();
        let mut hess = Matrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                hess[(i, j)] = if i == j { b2[i] * prod_except(&[i]) } else { b1[i] * b1[j] * prod_except(&[i, j]) };
            }
        }
        Rho { value: b.iter().product(), grad, hess }
    }

    /// `ρᴺ·μ`.
    pub fn cut(&self, mu: &ParticleMeasure) -> Result<ParticleMeasure, CalculusError> {
        Ok(mu.reweighted(|x| self.rho(x))?)
    }
}

impl MeasureFunctional for CutoffFunctional {
    fn name(&self) -> String {
        format!("cutoff[N={}]({})", self.n, self.base.name())
    }

    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn value(&self, mu: &ParticleMeasure) -> Result<f64, CalculusError> {
        self.base.value(&self.cut(mu)?)
    }

    fn flat_derivative(&self, mu: &ParticleMeasure, x: &[f64]) -> Result<f64, CalculusError> {
        check_dim(self.dim(), x.len())?;
        Ok(self.rho(x) * self.base.flat_derivative(&self.cut(mu)?, x)?)
    }

    fn flat_derivative2(&self, mu: &ParticleMeasure, x: &[f64], y: &[f64]) -> Result<f64, CalculusError> {
        Ok(self.rho(x) * self.rho(y) * self.base.flat_derivative2(&self.cut(mu)?, x, y)?)
    }

    fn l_derivative(&self, mu: &ParticleMeasure, x: &[f64]) -> Result<Vec<f64>, CalculusError> {
        let nu = self.cut(mu)?;
        let r = self.rho_full(x);
        let du = self.base.flat_derivative(&nu, x)?;
        let dmu = self.base.l_derivative(&nu, x)?;
        Ok(r.grad.iter().zip(&dmu).map(|(g, l)| g * du + r.value * l).collect())
    }

    fn l_derivative2(&self, mu: &ParticleMeasure, x: &[f64], y: &[f64]) -> Result<Matrix, CalculusError> {
        let nu = self.cut(mu)?;
        let (rx, ry) = (self.rho_full(x), self.rho_full(y));
        let d2 = self.base.flat_derivative2(&nu, x, y)?;
        let dx_xy = self.base.x_flat_derivative2(&nu, x, y)?;
        let dy_xy = self.base.x_flat_derivative2(&nu, y, x)?;
        let l2 = self.base.l_derivative2(&nu, x, y)?;
        let mut m = Matrix::outer(&rx.grad, &ry.grad).scale(d2);
        m += &Matrix::outer(&rx.grad, &dy_xy).scale(ry.value);
        m += &Matrix::outer(&dx_xy, &ry.grad).scale(rx.value);
        m += &l2.scale(rx.value * ry.value);
        Ok(m)
    }

    fn x_l_derivative(&self, mu: &ParticleMeasure, x: &[f64]) -> Result<Matrix, CalculusError> {
        let nu = self.cut(mu)?;
        let r = self.rho_full(x);
        let du = self.base.flat_derivative(&nu, x)?;
        let dmu = self.base.l_derivative(&nu, x)?;
        let xl = self.base.x_l_derivative(&nu, x)?;
        let mut m = r.hess.scale(du);
        m += &Matrix::outer(&r.grad, &dmu);
        m += &Matrix::outer(&dmu, &r.grad);
        m += &xl.scale(r.value);
        Ok(m)
    }

    fn x_flat_derivative2(&self, mu: &ParticleMeasure, x: &[f64], y: &[f64]) -> Result<Vec<f64>, CalculusError> {
        let nu = self.cut(mu)?;
        let rx = self.rho_full(x);
        let ry = self.rho(y);
        let d2 = self.base.flat_derivative2(&nu, x, y)?;
        let dx = self.base.x_flat_derivative2(&nu, x, y)?;
        Ok(rx.grad.iter().zip(&dx).map(|(g, v)| ry * (g * d2 + rx.value * v)).collect())
    }

    fn sup_bound(&self) -> Option<f64> {
        self.base.sup_bound()
    }

    fn prepare<'a>(&'a self, mu: &ParticleMeasure) -> Result<Box<dyn PreparedFunctional + 'a>, CalculusError> {
        Ok(Box::new(PreparedCutoff { f: self, inner: self.base.prepare(&self.cut(mu)?)? }))
    }
}

struct PreparedCutoff<'a> {
    f: &'a CutoffFunctional,
    inner: Box<dyn PreparedFunctional + 'a>,
}

impl PreparedFunctional for PreparedCutoff<'_> {
    fn value(&self) -> f64 {
        self.inner.value()
    }
    fn first(&self, nu: &ParticleMeasure) -> Result<f64, CalculusError> {
        self.inner.first(&self.f.cut(nu)?)
    }
    fn second(&self, nu1: &ParticleMeasure, nu2: &ParticleMeasure) -> Result<f64, CalculusError> {
        self.inner.second(&self.f.cut(nu1)?, &self.f.cut(nu2)?)
    }
}
