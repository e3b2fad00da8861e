//! Generators of the Zakai and Kushner–Stratonovich flows on measure functionals, and
//! pathwise checks of the corresponding Itô formulas.
//!
//! For a model with coefficients `f, σ, σ̄, h` the Zakai generator is
//!
//! ```text
//! 𝓛u(μ) = μ(D_μu·f) + ½μ(tr{D_xD_μu σσᵀ}) + ½μ(tr{D_xD_μu σ̄σ̄ᵀ})
//!        + ½μ⊗μ(δ²u h·h) + μ⊗μ(h·σ̄ᵀD_xδ²u) + ½μ⊗μ(tr{D²_μu σ̄σ̄ᵀ})
//! ```
//!
//! and `𝓛^KS u(π) = π(Aδu) + ½π⊗π((h + B − π(h))·(h + B − π(h)) δ²u)`, which adds three terms
//! involving `π(h)` to the six above. Product integrals include the diagonal.

mod assemble;
mod ito;

pub use assemble::{
    apply_l, apply_l_cylindrical, apply_lks, apply_lks_cylindrical, assemble, AnalyticProvider, DerivativeProvider,
    FirstOrderAt, SecondOrderAt,
};
pub use ito::{
    ito_residual_ks, ito_residual_time_dependent, ito_residual_zakai, ito_residuals, Equation, ItoResidualReport,
    NamedTerm, ResidualTarget,
};

use crate::measure::ParticleMeasure;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Zakai,
    KushnerStratonovich,
}

/// The three terms of `𝓛^KS` that involve `c = π(h)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct KsCorrections {
    /// `½|c|² π⊗π(δ²u)`.
    pub pi_h_squared: f64,
    /// `−π⊗π(δ²u h)·c`.
    pub h_correction: f64,
    /// `−π⊗π(σ̄ᵀD_xδ²u)·c`.
    pub sigma_bar_correction: f64,
}

/// Per-term values of a generator.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct GeneratorTerms {
    /// `μ(D_μu·f)`.
    pub drift: f64,
    /// `½μ(tr{D_xD_μu σσᵀ})`.
    pub sigma_trace: f64,
    /// `½μ(tr{D_xD_μu σ̄σ̄ᵀ})`.
    pub sigma_bar_trace: f64,
    /// `½μ⊗μ(δ²u h·h)`.
    pub hh: f64,
    /// `μ⊗μ(h·σ̄ᵀD_xδ²u)`.
    pub cross: f64,
    /// `½μ⊗μ(tr{D²_μu σ̄σ̄ᵀ})`.
    pub sigma_bar_second: f64,
    pub ks: Option<KsCorrections>,
}

impl GeneratorTerms {
    /// `self + c·other`, term by term.
    pub fn add_scaled(&self, other: &Self, c: f64) -> Self {
        let ks = match (self.ks, other.ks) {
            (None, None) => None,
            (a, b) => {
                let a = a.unwrap_or_default();
                let b = b.unwrap_or_default();
                Some(KsCorrections {
                    pi_h_squared: a.pi_h_squared + c * b.pi_h_squared,
                    h_correction: a.h_correction + c * b.h_correction,
                    sigma_bar_correction: a.sigma_bar_correction + c * b.sigma_bar_correction,
                })
            }
        };
        Self {
            drift: self.drift + c * other.drift,
            sigma_trace: self.sigma_trace + c * other.sigma_trace,
            sigma_bar_trace: self.sigma_bar_trace + c * other.sigma_bar_trace,
            hh: self.hh + c * other.hh,
            cross: self.cross + c * other.cross,
            sigma_bar_second: self.sigma_bar_second + c * other.sigma_bar_second,
            ks,
        }
    }

    pub fn sum(&self) -> f64 {
        let mut s = self.drift + self.sigma_trace + self.sigma_bar_trace + self.hh + self.cross + self.sigma_bar_second;
        if let Some(k) = self.ks {
            s += k.pi_h_squared + k.h_correction + k.sigma_bar_correction;
        }
        s
    }

    /// Terms as `(name, value)` pairs in display order.
    pub fn named(&self) -> Vec<(&'static str, f64)> {
        let mut v = vec![
            ("drift", self.drift),
            ("sigma_trace", self.sigma_trace),
            ("sigma_bar_trace", self.sigma_bar_trace),
            ("hh", self.hh),
            ("cross", self.cross),
            ("sigma_bar_second", self.sigma_bar_second),
        ];
        if let Some(k) = self.ks {
            v.push(("pi_h_squared", k.pi_h_squared));
            v.push(("h_correction", k.h_correction));
            v.push(("sigma_bar_correction", k.sigma_bar_correction));
        }
        v
    }
}

/// `𝓛u(μ)` or `𝓛^KS u(π)` with its breakdown; `value` is the sum of the terms.
#[derive(Debug, Clone, Serialize)]
pub struct GeneratorEvaluation {
    pub kind: GeneratorKind,
    pub value: f64,
    pub terms: GeneratorTerms,
    #[serde(skip)]
    pub mu: ParticleMeasure,
}

impl GeneratorEvaluation {
    pub(crate) fn new(kind: GeneratorKind, terms: GeneratorTerms, mu: ParticleMeasure) -> Self {
        Self { kind, value: terms.sum(), terms, mu }
    }
}
