//! Monte Carlo estimators of the value functions
//! `u(μ,s) = E^Q[Φ(ρ_T^{s,μ})]` and `u(π,s) = E^{P^π}[Φ(Π_T^{s,π})]`, of their flat
//! derivatives through derivative flows, and residuals of the backward Kolmogorov equations.
//!
//! Replica `r` is driven by the noise path `(seed, r)`; replicas run in parallel and are
//! reduced in index order, so results do not depend on the number of worker threads.

mod derivative;
mod markov;
mod residual;

pub use derivative::{
    finite_difference_check, flat_derivative_u, flat_identity_check, DerivativeEstimate, FiniteDifferenceCheck,
    FlatIdentityReport,
};
pub use markov::{markov_consistency, MarkovReport};
pub use residual::{pde_residual, pde_residuals, PdeResidualReport, TableProvider};

use crate::calculus::MeasureFunctional;
use crate::error::FilterError;
use crate::filtering::{ks_view, FilteringModel, FlowOptions, ZakaiFlow};
use crate::measure::ParticleMeasure;
use crate::noise::NoisePath;
use crate::stats::SampleSummary;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Monte Carlo parameters shared by the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub replicas: usize,
    /// Total particle budget of the flow started at the input measure; every atom receives
    /// `⌈particles / atoms⌉` particles, and each derivative flow receives the same number.
    pub particles: usize,
    pub dt: f64,
    pub seed: u64,
    /// Terminal time `T`.
    pub horizon: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { replicas: 400, particles: 2000, dt: 1e-3, seed: 0, horizon: 1.0 }
    }
}

impl McConfig {
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn per_atom(&self, atoms: usize) -> usize {
        self.particles.div_ceil(atoms.max(1)).max(1)
    }

    fn validate(&self) -> Result<(), FilterError> {
        let steps = self.horizon / self.dt;
        if !(self.dt > 0.0) || !(self.horizon > 0.0) || (steps - steps.round()).abs() > 1e-6 {
            return Err(FilterError::InvalidConfig(format!(
                "horizon {} must be a positive multiple of dt {}",
                self.horizon, self.dt
            )));
        }
        if self.replicas == 0 || self.particles == 0 {
            return Err(FilterError::InvalidConfig("replicas and particles must be positive".into()));
        }
        Ok(())
    }

    /// Noise path of replica `r` on `[0, T]`.
    pub fn path(&self, replica: u64, dim: usize) -> Arc<NoisePath> {
        Arc::new(NoisePath::generate(self.seed, replica, dim, self.dt, self.steps()))
    }

    /// Grid step of time `s`.
    pub fn step_of(&self, s: f64) -> Result<usize, FilterError> {
        let x = s / self.dt;
        if s < 0.0 || s > self.horizon + 1e-12 || (x - x.round()).abs() > 1e-6 {
            return Err(FilterError::OffGrid { time: s, dt: self.dt });
        }
        Ok(x.round() as usize)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }
}

/// Estimate of a value function at `(μ, s)`.
#[derive(Debug, Clone, Serialize)]
pub struct KolmogorovEstimate {
    pub s: f64,
    pub value: f64,
    pub std_error: f64,
    pub replicas: usize,
    /// Particles in the flow started at the input measure.
    pub particles: usize,
    pub dt: f64,
    pub per_replica: Vec<f64>,
    pub derivatives: Vec<DerivativeEstimate>,
}

impl KolmogorovEstimate {
    fn from_samples(s: f64, cfg: &McConfig, particles: usize, per_replica: Vec<f64>) -> Self {
        let sum = SampleSummary::from_slice(&per_replica);
        Self {
            s,
            value: sum.mean,
            std_error: sum.std_error,
            replicas: per_replica.len(),
            particles,
            dt: cfg.dt,
            per_replica,
            derivatives: Vec::new(),
        }
    }

    pub fn summary(&self) -> SampleSummary {
        SampleSummary::from_slice(&self.per_replica)
    }
}

/// Runs `f` on every replica index in parallel and returns the results in index order.
pub(crate) fn par_replicas<T, F>(replicas: usize, f: F) -> Result<Vec<T>, FilterError>
where
    T: Send,
    F: Fn(u64) -> Result<T, FilterError> + Sync + Send,
{
    (0..replicas as u64).into_par_iter().map(f).collect()
}

/// Runs the flow started at `μ` at step `start` to `T` and returns `ρ_T`.
pub(crate) fn terminal_measure(
    model: &Arc<FilteringModel>,
    path: &Arc<NoisePath>,
    start: usize,
    mu: &ParticleMeasure,
    per_atom: usize,
    key_base: u64,
) -> Result<ParticleMeasure, FilterError> {
    let opts = FlowOptions::replicated(per_atom).with_key_base(key_base);
    let mut flow = ZakaiFlow::new(Arc::clone(model), Arc::clone(path), start, mu, opts)?;
    flow.run_to_end()?;
    Ok(flow.measure())
}

fn check_inputs(
    model: &FilteringModel,
    phi: &dyn MeasureFunctional,
    mu: &ParticleMeasure,
    cfg: &McConfig,
) -> Result<(), FilterError> {
    cfg.validate()?;
    for found in [phi.dim(), mu.dim()] {
        if found != model.dim() {
            return Err(FilterError::Dimension { expected: model.dim(), found });
        }
    }
    if mu.is_empty() {
        return Err(FilterError::InvalidConfig("initial measure has no atoms".into()));
    }
    Ok(())
}

/// `u(μ,s) = E^Q[Φ(ρ_T^{s,μ})]`. At `s = T` this is `Φ(μ)` for every replica.
pub fn solve_zakai_kolmogorov(
    model: &Arc<FilteringModel>,
    phi: &dyn MeasureFunctional,
    mu: &ParticleMeasure,
    s: f64,
    cfg: &McConfig,
) -> Result<KolmogorovEstimate, FilterError> {
    check_inputs(model, phi, mu, cfg)?;
    let start = cfg.step_of(s)?;
    let per_atom = cfg.per_atom(mu.len());
    let samples = if start == cfg.steps() {
        vec![phi.value(mu)?; cfg.replicas]
    } else {
        par_replicas(cfg.replicas, |r| {
            let path = cfg.path(r, model.dim());
            let rho = terminal_measure(model, &path, start, mu, per_atom, 0)?;
            Ok(phi.value(&rho)?)
        })?
    };
    Ok(KolmogorovEstimate::from_samples(s, cfg, per_atom * mu.len(), samples))
}

/// `u(π,s) = E^{P^π}[Φ(Π_T^{s,π})]`, estimated as `E^Q[Φ(ρ_T/ρ_T(ℝᵈ)) ξ_T]` where
/// `log ξ_T = ∫Π(h)·dY − ½∫|Π(h)|²dt`.
pub fn solve_ks_kolmogorov(
    model: &Arc<FilteringModel>,
    phi: &dyn MeasureFunctional,
    pi: &ParticleMeasure,
    s: f64,
    cfg: &McConfig,
) -> Result<KolmogorovEstimate, FilterError> {
    check_inputs(model, phi, pi, cfg)?;
    if !pi.is_probability() {
        return Err(FilterError::NotProbability(pi.total_mass()));
    }
    let start = cfg.step_of(s)?;
    let per_atom = cfg.per_atom(pi.len());
    let samples = if start == cfg.steps() {
        vec![phi.value(pi)?; cfg.replicas]
    } else {
        par_replicas(cfg.replicas, |r| {
            let path = cfg.path(r, model.dim());
            let flow = ZakaiFlow::new(Arc::clone(model), path, start, pi, FlowOptions::replicated(per_atom))?;
            let mut ks = ks_view(flow)?;
            ks.run_to_end()?;
            Ok(phi.value(&ks.normalized())? * ks.xi())
        })?
    };
    Ok(KolmogorovEstimate::from_samples(s, cfg, per_atom * pi.len(), samples))
}
