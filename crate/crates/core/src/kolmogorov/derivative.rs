use super::{check_inputs, par_replicas, terminal_measure, KolmogorovEstimate, McConfig};
use crate::calculus::quadrature::gauss_legendre_unit;
use crate::calculus::MeasureFunctional;
use crate::error::FilterError;
use crate::filtering::FilteringModel;
use crate::measure::ParticleMeasure;
use crate::stats::SampleSummary;
use serde::Serialize;
use std::sync::Arc;

/// Estimate of `δ_μu(μ, x, s)` at one point.
#[derive(Debug, Clone, Serialize)]
pub struct DerivativeEstimate {
    pub x: Vec<f64>,
    pub value: f64,
    pub std_error: f64,
}

/// `δ_μu(μ, x, s) = E^Q[⟨Z_T^s(x), δΦ(ρ_T^{s,μ})⟩]` for every `x` in `xs`.
///
/// All flows of one replica share its observation path. The derivative flows `Z(x)` also
/// share particle noise with each other, and with the atom that `μ + εδₓ` appends to `μ`.
/// The returned `value` is `u(μ, s)` on the same replicas.
pub fn flat_derivative_u(
    model: &Arc<FilteringModel>,
    phi: &dyn MeasureFunctional,
    mu: &ParticleMeasure,
    s: f64,
    xs: &[Vec<f64>],
    cfg: &McConfig,
) -> Result<KolmogorovEstimate, FilterError> {
    check_inputs(model, phi, mu, cfg)?;
    let start = cfg.step_of(s)?;
    let per_atom = cfg.per_atom(mu.len());
    let z_base = (mu.len() * per_atom) as u64;
    let rows = par_replicas(cfg.replicas, |r| {
        let path = cfg.path(r, model.dim());
        let rho = terminal_measure(model, &path, start, mu, per_atom, 0)?;
        let prepared = phi.prepare(&rho)?;
        let mut row = vec![prepared.value()];
        for x in xs {
            let delta = ParticleMeasure::dirac(x, 1.0)?;
            let z = terminal_measure(model, &path, start, &delta, per_atom, z_base)?;
            row.push(prepared.first(&z)?);
        }
        Ok(row)
    })?;
    let column = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let mut est = KolmogorovEstimate::from_samples(s, cfg, per_atom * mu.len(), column(0));
    est.derivatives = xs
        .iter()
        .enumerate()
        .map(|(j, x)| {
            let sum = SampleSummary::from_slice(&column(j + 1));
            DerivativeEstimate { x: x.clone(), value: sum.mean, std_error: sum.std_error }
        })
        .collect();
    Ok(est)
}

/// Comparison of `u(μ′,s) − u(μ,s)` with `∫₀¹⟨μ′ − μ, δ_μu(μₜ, ·, s)⟩dt`, `μₜ = tμ′ + (1−t)μ`,
/// where both sides are estimated on the same replicas.
#[derive(Debug, Clone, Serialize)]
pub struct FlatIdentityReport {
    pub lhs: SampleSummary,
    pub rhs: SampleSummary,
    /// Per-replica `lhs − rhs`.
    pub difference: SampleSummary,
    pub nodes: usize,
}

impl FlatIdentityReport {
    pub fn consistent(&self, z: f64) -> bool {
        self.difference.covers(0.0, z)
    }
}

/// Estimates both sides of the flat-derivative identity for the value function with a
/// Gauss–Legendre rule in `t`.
pub fn flat_identity_check(
    model: &Arc<FilteringModel>,
    phi: &dyn MeasureFunctional,
    mu: &ParticleMeasure,
    mu2: &ParticleMeasure,
    s: f64,
    nodes: usize,
    cfg: &McConfig,
) -> Result<FlatIdentityReport, FilterError> {
    check_inputs(model, phi, mu, cfg)?;
    check_inputs(model, phi, mu2, cfg)?;
    let start = cfg.step_of(s)?;
    // Per-atom counts are fixed by the larger support so that every measure below uses the
    // same particle budget per atom.
    let per_atom = cfg.per_atom(mu.len().max(mu2.len()));
    let combined = mu.scaled(0.0).concat(mu2)?;
    let z_base = (combined.len() * per_atom) as u64;
    let (tq, wq) = gauss_legendre_unit(nodes);
    let rows = par_replicas(cfg.replicas, |r| {
        let path = cfg.path(r, model.dim());
        // μ and μ′ are run as measures on the joint support so that atom keys coincide.
        let on_support = |a: f64, b: f64| -> Result<ParticleMeasure, FilterError> {
            let w: Vec<f64> = mu.weights().iter().map(|w| a * w).chain(mu2.weights().iter().map(|w| b * w)).collect();
            Ok(ParticleMeasure::new(mu.dim(), combined.locations().to_vec(), w)?)
        };
        let value = |m: &ParticleMeasure| -> Result<f64, FilterError> {
            Ok(phi.value(&terminal_measure(model, &path, start, m, per_atom, 0)?)?)
        };
        let lhs = value(&on_support(0.0, 1.0)?)? - value(&on_support(1.0, 0.0)?)?;
        let mut zs = Vec::with_capacity(combined.len());
        for (x, _) in combined.atoms() {
            let delta = ParticleMeasure::dirac(x, 1.0)?;
            zs.push(terminal_measure(model, &path, start, &delta, per_atom, z_base)?);
        }
        let mut rhs = 0.0;
        for (t, w) in tq.iter().zip(&wq) {
            let rho = terminal_measure(model, &path, start, &on_support(1.0 - t, *t)?, per_atom, 0)?;
            let p = phi.prepare(&rho)?;
            for (i, z) in zs.iter().enumerate() {
                let signed = if i < mu.len() { -mu.weight(i) } else { mu2.weight(i - mu.len()) };
                rhs += w * signed * p.first(z)?;
            }
        }
        Ok([lhs, rhs])
    })?;
    let col = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let diff: Vec<f64> = rows.iter().map(|r| r[0] - r[1]).collect();
    Ok(FlatIdentityReport {
        lhs: SampleSummary::from_slice(&col(0)),
        rhs: SampleSummary::from_slice(&col(1)),
        difference: SampleSummary::from_slice(&diff),
        nodes,
    })
}

/// Paired comparison of `[u(μ + εδₓ, s) − u(μ, s)]/ε` with the derivative-flow estimator of
/// `δ_μu(μ, x, s)` on the same replicas.
#[derive(Debug, Clone, Serialize)]
pub struct FiniteDifferenceCheck {
    pub x: Vec<f64>,
    pub epsilon: f64,
    pub finite_difference: SampleSummary,
    pub estimator: SampleSummary,
    pub difference: SampleSummary,
}

impl FiniteDifferenceCheck {
    /// `|FD − estimator| ≤ max(z·SE, rel·|estimator|)`.
    pub fn agrees(&self, z: f64, rel: f64) -> bool {
        let gap = (self.finite_difference.mean - self.estimator.mean).abs();
        gap <= (z * self.difference.std_error).max(rel * self.estimator.mean.abs())
    }
}

pub fn finite_difference_check(
    model: &Arc<FilteringModel>,
    phi: &dyn MeasureFunctional,
    mu: &ParticleMeasure,
    s: f64,
    x: &[f64],
    epsilon: f64,
    cfg: &McConfig,
) -> Result<FiniteDifferenceCheck, FilterError> {
    check_inputs(model, phi, mu, cfg)?;
    if !(epsilon > 0.0) {
        return Err(FilterError::InvalidConfig(format!("epsilon must be positive, got {epsilon}")));
    }
    let start = cfg.step_of(s)?;
    let per_atom = cfg.per_atom(mu.len());
    let z_base = (mu.len() * per_atom) as u64;
    let mut bumped = mu.clone();
    bumped.push(x, epsilon)?;
    let delta = ParticleMeasure::dirac(x, 1.0)?;
    let rows = par_replicas(cfg.replicas, |r| {
        let path = cfg.path(r, model.dim());
        let rho = terminal_measure(model, &path, start, mu, per_atom, 0)?;
        let rho_eps = terminal_measure(model, &path, start, &bumped, per_atom, 0)?;
        let z = terminal_measure(model, &path, start, &delta, per_atom, z_base)?;
        let fd = (phi.value(&rho_eps)? - phi.value(&rho)?) / epsilon;
        Ok([fd, phi.prepare(&rho)?.first(&z)?])
    })?;
    let col = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let diff: Vec<f64> = rows.iter().map(|r| r[0] - r[1]).collect();
    Ok(FiniteDifferenceCheck {
        x: x.to_vec(),
        epsilon,
        finite_difference: SampleSummary::from_slice(&col(0)),
        estimator: SampleSummary::from_slice(&col(1)),
        difference: SampleSummary::from_slice(&diff),
    })
}
