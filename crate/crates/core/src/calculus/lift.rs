use super::{check_dim, MeasureFunctional, PreparedFunctional};
use crate::error::{CalculusError, MeasureError};
use crate::linalg::{axpy, Matrix};
use crate::measure::ParticleMeasure;
use std::sync::Arc;

/// The 1-homogeneous extension `Ψ(μ) = μ(ℝᵈ)·Φ(μ/μ(ℝᵈ))` of a functional on probability measures.
///
/// `Ψ` agrees with `Φ` on probability measures, satisfies `Ψ(λμ) = λΨ(μ)`, and its flat derivative
/// restricted to probabilities differs from `δΦ` only by an additive constant.
#[derive(Clone)]
pub struct HomogeneousLift {
    pub phi: Arc<dyn MeasureFunctional>,
}

impl HomogeneousLift {
    pub fn new(phi: Arc<dyn MeasureFunctional>) -> Self {
        Self { phi }
    }

    fn split(&self, mu: &ParticleMeasure) -> Result<(f64, ParticleMeasure), CalculusError> {
        check_dim(self.phi.dim(), mu.dim())?;
        let m = mu.total_mass();
        if !(m > 0.0) {
            return Err(MeasureError::ZeroMass.into());
        }
        Ok((m, mu.scaled(1.0 / m)))
    }
}

fn dirac(x: &[f64]) -> ParticleMeasure {
    ParticleMeasure::dirac(x, 1.0).expect("finite point")
}

impl MeasureFunctional for HomogeneousLift {
    fn name(&self) -> String {
        format!("lift({})", self.phi.name())
    }

    fn dim(&self) -> usize {
        self.phi.dim()
    }

    fn value(&self, mu: &ParticleMeasure) -> Result<f64, CalculusError> {
        let (m, pi) = self.split(mu)?;
        Ok(m * self.phi.value(&pi)?)
    }

    fn flat_derivative(&self, mu: &ParticleMeasure, x: &[f64]) -> Result<f64, CalculusError> {
        let (_, pi) = self.split(mu)?;
        let p = self.phi.prepare(&pi)?;
        Ok(p.value() + self.phi.flat_derivative(&pi, x)? - p.first(&pi)?)
    }

    fn flat_derivative2(&self, mu: &ParticleMeasure, x: &[f64], y: &[f64]) -> Result<f64, CalculusError> {
        let (m, pi) = self.split(mu)?;
        let p = self.phi.prepare(&pi)?;
        let (dx, dy) = (dirac(x), dirac(y));
        let v =
            self.phi.flat_derivative2(&pi, x, y)? - p.second(&dx, &pi)? - p.second(&pi, &dy)? + p.second(&pi, &pi)?;
        Ok(v / m)
    }

    fn l_derivative(&self, mu: &ParticleMeasure, x: &[f64]) -> Result<Vec<f64>, CalculusError> {
        let (_, pi) = self.split(mu)?;
        self.phi.l_derivative(&pi, x)
    }

    fn l_derivative2(&self, mu: &ParticleMeasure, x: &[f64], y: &[f64]) -> Result<Matrix, CalculusError> {
        let (m, pi) = self.split(mu)?;
        Ok(self.phi.l_derivative2(&pi, x, y)?.scale(1.0 / m))
    }

    fn x_l_derivative(&self, mu: &ParticleMeasure, x: &[f64]) -> Result<Matrix, CalculusError> {
        let (_, pi) = self.split(mu)?;
        self.phi.x_l_derivative(&pi, x)
    }

    fn x_flat_derivative2(&self, mu: &ParticleMeasure, x: &[f64], y: &[f64]) -> Result<Vec<f64>, CalculusError> {
        let (m, pi) = self.split(mu)?;
        let mut v = self.phi.x_flat_derivative2(&pi, x, y)?;
        for (z, w) in pi.atoms() {
            let g = self.phi.x_flat_derivative2(&pi, x, z)?;
            axpy(-w, &g, &mut v);
        }
        Ok(v.iter().map(|c| c / m).collect())
    }

    fn sup_bound(&self) -> Option<f64> {
        None
    }

    fn prepare<'a>(&'a self, mu: &ParticleMeasure) -> Result<Box<dyn PreparedFunctional + 'a>, CalculusError> {
        let (m, pi) = self.split(mu)?;
        let p = self.phi.prepare(&pi)?;
        let centre = p.value() - p.first(&pi)?;
        let pi_pi = p.second(&pi, &pi)?;
        Ok(Box::new(PreparedLift { m, pi, p, centre, pi_pi }))
    }
}

struct PreparedLift<'a> {
    m: f64,
    pi: ParticleMeasure,
    p: Box<dyn PreparedFunctional + 'a>,
    centre: f64,
    pi_pi: f64,
}

impl PreparedFunctional for PreparedLift<'_> {
    fn value(&self) -> f64 {
        self.m * self.p.value()
    }

    fn first(&self, nu: &ParticleMeasure) -> Result<f64, CalculusError> {
        Ok(nu.total_mass() * self.centre + self.p.first(nu)?)
    }

    fn second(&self, nu1: &ParticleMeasure, nu2: &ParticleMeasure) -> Result<f64, CalculusError> {
        let (a, b) = (nu1.total_mass(), nu2.total_mass());
        let v = self.p.second(nu1, nu2)? - b * self.p.second(nu1, &self.pi)? - a * self.p.second(&self.pi, nu2)?
            + a * b * self.pi_pi;
        Ok(v / self.m)
    }
}
