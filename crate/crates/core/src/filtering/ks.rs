use super::zakai::{StepRecord, ZakaiFlow};
use crate::error::{FilterError, MeasureError};
use crate::measure::ParticleMeasure;

/// Normalised view `Πₜ = ρₜ/ρₜ(ℝᵈ)` of a Zakai flow, with the innovation increments
/// `ΔIₘ = ΔYₘ − Πₜₘ(h)Δt` and the density `ξ` of the filter's law with respect to the
/// reference measure.
pub struct KsFlow {
    flow: ZakaiFlow,
    innovations: Vec<f64>,
    log_xi: Vec<f64>,
}

impl KsFlow {
    pub fn new(flow: ZakaiFlow) -> Result<Self, FilterError> {
        if !(flow.total_mass() > 0.0) {
            return Err(MeasureError::ZeroMass.into());
        }
        let mut ks = Self { flow, innovations: Vec::new(), log_xi: vec![0.0] };
        for k in 0..ks.flow.records().len() {
            ks.absorb(k)?;
        }
        Ok(ks)
    }

    fn absorb(&mut self, k: usize) -> Result<(), FilterError> {
        let rec: &StepRecord = &self.flow.records()[k];
        if !(rec.mass > 0.0) {
            return Err(MeasureError::ZeroMass.into());
        }
        let path = self.flow.path();
        let dt = path.dt();
        let dy = path.dy(self.flow.start_step() + k);
        let mut dlx = 0.0;
        for (j, &rh) in rec.rho_h.iter().enumerate() {
            let pih = rh / rec.mass;
            self.innovations.push(dy[j] - pih * dt);
            dlx += pih * dy[j] - 0.5 * pih * pih * dt;
        }
        let last = *self.log_xi.last().expect("log_xi starts at 0");
        self.log_xi.push(last + dlx);
        Ok(())
    }

    pub fn step(&mut self) -> Result<(), FilterError> {
        self.flow.step()?;
        self.absorb(self.flow.records().len() - 1)
    }

    pub fn run_to(&mut self, target: usize) -> Result<(), FilterError> {
        while self.flow.current_step() < target {
            self.step()?;
        }
        Ok(())
    }

    pub fn run_to_end(&mut self) -> Result<(), FilterError> {
        self.run_to(self.flow.path().steps())
    }

    pub fn zakai(&self) -> &ZakaiFlow {
        &self.flow
    }

    pub fn into_zakai(self) -> ZakaiFlow {
        self.flow
    }

    /// `Πₜ` at the current time.
    pub fn normalized(&self) -> ParticleMeasure {
        self.flow.measure().normalize().expect("positive mass")
    }

    /// Normalised weights `wᵢ/Σwⱼ` at the current time.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let w = self.flow.weights();
        let m = crate::stats::compensated_sum(w.iter().copied());
        w.iter().map(|v| v / m).collect()
    }

    /// Innovation increments of the steps taken, row-major `steps×d`.
    pub fn innovations(&self) -> &[f64] {
        &self.innovations
    }

    pub fn innovation(&self, k: usize) -> &[f64] {
        let d = self.flow.dim();
        &self.innovations[k * d..(k + 1) * d]
    }

    /// `log ξ` at each grid time from the start, with `log ξ = 0` initially.
    pub fn log_xi_path(&self) -> &[f64] {
        &self.log_xi
    }

    pub fn xi(&self) -> f64 {
        self.log_xi.last().expect("nonempty").exp()
    }

    /// `Πₜₘ(h)` for the `k`-th step taken.
    pub fn pi_h(&self, k: usize) -> Vec<f64> {
        let r = &self.flow.records()[k];
        r.rho_h.iter().map(|v| v / r.mass).collect()
    }
}

/// Builds the normalised view of `flow`, including the steps already taken.
pub fn ks_view(flow: ZakaiFlow) -> Result<KsFlow, FilterError> {
    KsFlow::new(flow)
}
