use super::{CylindricalFunctional, MeasureFunctional};
use crate::error::CalculusError;
use crate::measure::ParticleMeasure;
use std::sync::Arc;

type Density = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type Transport = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
type Forward = Arc<dyn Fn(&ParticleMeasure) -> ParticleMeasure + Send + Sync>;

/// A map `m: M⁺(ℝᵈ) → M⁺(ℝᵈ)` with its kernel derivative `δ̃m(μ,x)`.
#[derive(Clone)]
pub enum MeasureMap {
    /// `m(μ) = ρ·μ`, with `δ̃m(μ,x) = ρ(x)δₓ`.
    DensityMultiply(Density),
    /// `m(μ) = μ ∘ f⁻¹`, with `δ̃m(μ,x) = δ_{f(x)}`.
    PushForward(Transport),
    /// A map known only through its forward action.
    Opaque(Forward),
}

impl MeasureMap {
    pub fn density<F: Fn(&[f64]) -> f64 + Send + Sync + 'static>(rho: F) -> Self {
        Self::DensityMultiply(Arc::new(rho))
    }

    pub fn push_forward<F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static>(f: F) -> Self {
        Self::PushForward(Arc::new(f))
    }

    pub fn forward(&self, mu: &ParticleMeasure) -> Result<ParticleMeasure, CalculusError> {
        Ok(match self {
            Self::DensityMultiply(rho) => mu.reweighted(|x| rho(x))?,
            Self::PushForward(f) => mu.push_forward(|x, out| f(x, out))?,
            Self::Opaque(m) => m(mu),
        })
    }

    /// The single-atom measure `δ̃m(μ,x)`.
    pub fn kernel_derivative(&self, _mu: &ParticleMeasure, x: &[f64]) -> Result<ParticleMeasure, CalculusError> {
        match self {
            Self::DensityMultiply(rho) => Ok(ParticleMeasure::dirac(x, rho(x))?),
            Self::PushForward(f) => {
                let mut y = vec![0.0; x.len()];
                f(x, &mut y);
                Ok(ParticleMeasure::dirac(&y, 1.0)?)
            }
            Self::Opaque(_) => Err(CalculusError::Unsupported {
                functional: "opaque measure map".into(),
                capability: "kernel derivative",
            }),
        }
    }

    /// `|⟨δ̃m(μ,x), δg(m(μ),·)⟩ − δ(g∘m)(μ,x)|` where the right-hand side is computed directly
    /// from the cylindrical structure of `g∘m`.
    pub fn composite_rule_residual(
        &self,
        g: &CylindricalFunctional,
        mu: &ParticleMeasure,
        x: &[f64],
    ) -> Result<f64, CalculusError> {
        let image = self.forward(mu)?;
        let kernel = self.kernel_derivative(mu, x)?;
        let via_rule = g.prepare(&image)?.first(&kernel)?;
        let direct = match self {
            Self::DensityMultiply(rho) => {
                let r: Vec<f64> = g.inner().iter().map(|p| mu.integrate_fn(|z| rho(z) * p.value(z))).collect();
                let s = g.state_from_integrals(r);
                let rx = rho(x);
                g.inner().iter().zip(&s.grad).map(|(p, dk)| dk * rx * p.value(x)).sum::<f64>()
            }
            Self::PushForward(f) => {
                let mut buf = vec![0.0; x.len()];
                let mut comp = |p: &crate::measure::TestFunction, z: &[f64]| {
                    f(z, &mut buf);
                    p.value(&buf)
                };
                let r: Vec<f64> = g.inner().iter().map(|p| mu.integrate_fn(|z| comp(p, z))).collect();
                let s = g.state_from_integrals(r);
                g.inner().iter().zip(&s.grad).map(|(p, dk)| dk * comp(p, x)).sum::<f64>()
            }
            Self::Opaque(_) => unreachable!("kernel_derivative already failed"),
        };
        Ok((via_rule - direct).abs())
    }
}
