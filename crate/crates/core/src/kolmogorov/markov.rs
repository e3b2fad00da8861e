use super::{check_inputs, par_replicas, terminal_measure, McConfig};
use crate::calculus::MeasureFunctional;
use crate::error::FilterError;
use crate::filtering::{FilteringModel, FlowOptions, ZakaiFlow};
use crate::measure::ParticleMeasure;
use crate::stats::SampleSummary;
use serde::Serialize;
use std::sync::Arc;

#[derive(Debug, Clone, Serialize)]
pub struct MarkovReport {
    pub s: f64,
    pub h: f64,
    pub inner: usize,
    /// `u(μ,s)` estimated directly.
    pub direct: SampleSummary,
    /// `E^Q[u(ρ_{s+h}^{s,μ}, s+h)]` with the inner value from `inner` replicas per outer one.
    pub nested: SampleSummary,
    pub difference: f64,
    pub std_error: f64,
}

impl MarkovReport {
    pub fn consistent(&self, z: f64) -> bool {
        self.difference.abs() <= z * self.std_error
    }
}

/// Compares `u(μ,s)` against `E[u(ρ_{s+h}, s+h)]` evaluated by nested simulation.
///
/// The direct estimate uses `cfg.seed`, outer flows use `cfg.seed + 1`, and the inner
/// replicas `j` of outer replica `r` use path `(cfg.seed + 2, r·inner + j)` started from the
/// particles of `ρ_{s+h}` with one particle per atom.
pub fn markov_consistency(
    model: &Arc<FilteringModel>,
    phi: &dyn MeasureFunctional,
    mu: &ParticleMeasure,
    s: f64,
    h: f64,
    inner: usize,
    cfg: &McConfig,
) -> Result<MarkovReport, FilterError> {
    check_inputs(model, phi, mu, cfg)?;
    let start = cfg.step_of(s)?;
    let mid = cfg.step_of(s + h)?;
    if mid <= start || inner == 0 {
        return Err(FilterError::InvalidConfig(format!("need h > 0 and inner > 0 (h = {h}, inner = {inner})")));
    }
    let per_atom = cfg.per_atom(mu.len());
    let direct = par_replicas(cfg.replicas, |r| {
        let path = cfg.path(r, model.dim());
        Ok(phi.value(&terminal_measure(model, &path, start, mu, per_atom, 0)?)?)
    })?;
    let outer_cfg = cfg.with_seed(cfg.seed.wrapping_add(1));
    let inner_cfg = cfg.with_seed(cfg.seed.wrapping_add(2));
    let nested = par_replicas(cfg.replicas, |r| {
        let path = outer_cfg.path(r, model.dim());
        let mut flow = ZakaiFlow::new(Arc::clone(model), path, start, mu, FlowOptions::replicated(per_atom))?;
        flow.run_to(mid)?;
        let rho = flow.measure();
        let mut acc = 0.0;
        for j in 0..inner as u64 {
            let path = inner_cfg.path(r * inner as u64 + j, model.dim());
            let mut f = ZakaiFlow::new(Arc::clone(model), path, mid, &rho, FlowOptions::default())?;
            f.run_to_end()?;
            acc += phi.value(&f.measure())?;
        }
        Ok(acc / inner as f64)
    })?;
    let direct = SampleSummary::from_slice(&direct);
    let nested = SampleSummary::from_slice(&nested);
    Ok(MarkovReport {
        s,
        h,
        inner,
        direct,
        nested,
        difference: nested.mean - direct.mean,
        std_error: direct.std_error.hypot(nested.std_error),
    })
}
