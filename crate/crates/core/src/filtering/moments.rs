use super::model::FilteringModel;
use super::zakai::{FlowOptions, ZakaiFlow};
use crate::error::FilterError;
use crate::measure::ParticleMeasure;
use crate::noise::NoisePath;
use crate::stats::SampleSummary;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

/// Pathwise mass statistics of one simulated flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowMassSummary {
    pub sup_mass: f64,
    pub min_mass: f64,
    pub terminal_mass: f64,
    /// `⟨ρ_T, |x|²⟩`.
    pub terminal_second_moment: f64,
}

impl FlowMassSummary {
    pub fn of(flow: &ZakaiFlow) -> Self {
        let mut sup = flow.total_mass();
        let mut min = sup;
        let terminal = sup;
        for r in flow.records() {
            sup = sup.max(r.mass);
            min = min.min(r.mass);
        }
        Self {
            sup_mass: sup,
            min_mass: min,
            terminal_mass: terminal,
            terminal_second_moment: flow.measure().second_moment(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MassMomentConfig {
    pub replicas: usize,
    pub dt: f64,
    pub steps: usize,
    pub seed: u64,
    pub alpha: f64,
    pub flow: FlowOptions,
}

/// Monte Carlo estimates of `E[sup_t ρ_t(ℝᵈ)^α]`, `E[ρ_T(ℝᵈ)²]` and `E[⟨ρ_T,|x|²⟩]`,
/// with the bound `2μ(ℝᵈ)² exp(2T‖h‖²_∞)` on the second mass moment.
#[derive(Debug, Clone, Serialize)]
pub struct MassMomentReport {
    pub alpha: f64,
    pub replicas: usize,
    pub sup_mass_alpha: SampleSummary,
    pub terminal_mass_sq: SampleSummary,
    pub terminal_second_moment: SampleSummary,
    pub min_mass: f64,
    pub bound: Option<f64>,
    pub terminal_below_bound: Option<bool>,
    pub sup_below_bound: Option<bool>,
}

impl MassMomentReport {
    pub fn from_summaries(
        summaries: &[FlowMassSummary],
        alpha: f64,
        initial_mass: f64,
        horizon: f64,
        h_sup: Option<f64>,
    ) -> Self {
        let col = |f: &dyn Fn(&FlowMassSummary) -> f64| summaries.iter().map(f).collect::<Vec<_>>();
        let sup_a = SampleSummary::from_slice(&col(&|s| s.sup_mass.powf(alpha)));
        let term_sq = SampleSummary::from_slice(&col(&|s| s.terminal_mass * s.terminal_mass));
        let bound = h_sup.map(|h| 2.0 * initial_mass * initial_mass * (2.0 * horizon * h * h).exp());
        Self {
            alpha,
            replicas: summaries.len(),
            sup_mass_alpha: sup_a,
            terminal_mass_sq: term_sq,
            terminal_second_moment: SampleSummary::from_slice(&col(&|s| s.terminal_second_moment)),
            min_mass: summaries.iter().map(|s| s.min_mass).fold(f64::INFINITY, f64::min),
            bound,
            terminal_below_bound: bound.map(|b| term_sq.mean < b),
            sup_below_bound: (alpha == 2.0).then_some(()).and(bound).map(|b| sup_a.mean < b),
        }
    }
}

/// Runs `replicas` independent flows from `mu` over `steps` steps and summarises their mass.
pub fn mass_moment_bounds(
    model: Arc<FilteringModel>,
    mu: &ParticleMeasure,
    cfg: &MassMomentConfig,
) -> Result<MassMomentReport, FilterError> {
    let summaries: Vec<FlowMassSummary> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let path = Arc::new(NoisePath::generate(cfg.seed, r, model.dim(), cfg.dt, cfg.steps));
            let mut flow = ZakaiFlow::new(model.clone(), path, 0, mu, cfg.flow)?;
            flow.run_to_end()?;
            Ok(FlowMassSummary::of(&flow))
        })
        .collect::<Result<_, FilterError>>()?;
    Ok(MassMomentReport::from_summaries(
        &summaries,
        cfg.alpha,
        mu.total_mass(),
        cfg.dt * cfg.steps as f64,
        model.obs_sup(),
    ))
}
