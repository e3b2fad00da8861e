use super::model::{Coefficients, FilteringModel};
use crate::error::FilterError;
use crate::measure::ParticleMeasure;
use crate::noise::{NoisePath, ParticleNoise, Stream, AUX_STREAM, RESAMPLE_STREAM};
use crate::stats::CompensatedSum;
use serde::Serialize;
use std::sync::Arc;

/// How the atoms of the initial measure become particles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ParticleInit {
    /// One particle per atom, carrying the atom's weight.
    Atoms,
    /// `per_atom` particles per atom, each with weight `wᵢ/per_atom`.
    Replicated { per_atom: usize },
    /// `count` particles drawn i.i.d. from the normalised measure, each with weight `m/count`.
    Sampled { count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowOptions {
    pub init: ParticleInit,
    /// Offset added to particle keys, so that several flows on one path use distinct noise.
    pub key_base: u64,
    /// Store a snapshot every `k` steps (and at the start).
    pub snapshot_stride: Option<usize>,
    /// Multinomial resampling whenever the effective sample size drops below this fraction of
    /// the particle count. Resampling keeps the total mass but breaks linearity in the initial
    /// weights.
    pub resample_below: Option<f64>,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { init: ParticleInit::Atoms, key_base: 0, snapshot_stride: None, resample_below: None }
    }
}

impl FlowOptions {
    pub fn replicated(per_atom: usize) -> Self {
        Self { init: ParticleInit::Replicated { per_atom }, ..Self::default() }
    }

    pub fn with_key_base(mut self, key_base: u64) -> Self {
        self.key_base = key_base;
        self
    }
}

/// Left-point summary of the flow at one grid time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub time: f64,
    pub mass: f64,
    pub ess: f64,
    /// `ρ_t(h)`.
    pub rho_h: Vec<f64>,
}

/// Weighted-particle solution of the Zakai equation under the reference measure.
///
/// Each particle follows `dX = (f − σ̄h)(X)dt + σ(X)dW + σ̄(X)dY` with its own `W` and the
/// common `Y` of the attached [`NoisePath`], and carries the log-likelihood
/// `dℓ = h(X)·dY − ½|h(X)|²dt`. The snapshot `ρ_t` has weights `wᵢ(0)·exp(ℓᵢ(t))`.
pub struct ZakaiFlow {
    model: Arc<FilteringModel>,
    path: Arc<NoisePath>,
    dim: usize,
    start: usize,
    step: usize,
    states: Vec<f64>,
    w0: Vec<f64>,
    log_w: Vec<f64>,
    noise: Vec<ParticleNoise>,
    dw: Vec<f64>,
    coef: Coefficients,
    records: Vec<StepRecord>,
    snapshots: Vec<(f64, ParticleMeasure)>,
    opts: FlowOptions,
    resampler: Option<Stream>,
    resample_events: usize,
}

impl ZakaiFlow {
    /// Starts a flow at grid step `start` from `mu`.
    pub fn new(
        model: Arc<FilteringModel>,
        path: Arc<NoisePath>,
        start: usize,
        mu: &ParticleMeasure,
        opts: FlowOptions,
    ) -> Result<Self, FilterError> {
        let d = model.dim();
        for found in [mu.dim(), path.dim()] {
            if found != d {
                return Err(FilterError::Dimension { expected: d, found });
            }
        }
        if start > path.steps() {
            return Err(FilterError::PathExhausted);
        }
        let (states, w0, keys) = initial_particles(mu, &path, &opts)?;
        let noise = keys.iter().map(|&k| path.particle_noise(k, start)).collect();
        let n = w0.len();
        let resampler = opts.resample_below.map(|_| Stream::new(path.seed(), path.replica(), RESAMPLE_STREAM));
        let mut flow = Self {
            dim: d,
            start,
            step: start,
            states,
            log_w: vec![0.0; n],
            w0,
            noise,
            dw: vec![0.0; n * d],
            coef: Coefficients::new(d),
            records: Vec::new(),
            snapshots: Vec::new(),
            opts,
            resampler,
            resample_events: 0,
            model,
            path,
        };
        if flow.opts.snapshot_stride.is_some() {
            flow.snapshots.push((flow.time(), flow.measure()));
        }
        Ok(flow)
    }

    /// Starts a flow at time `s`, which must be a grid time of `path`.
    pub fn starting_at(
        model: Arc<FilteringModel>,
        path: Arc<NoisePath>,
        s: f64,
        mu: &ParticleMeasure,
        opts: FlowOptions,
    ) -> Result<Self, FilterError> {
        let start = path.step_of(s).ok_or(FilterError::OffGrid { time: s, dt: path.dt() })?;
        Self::new(model, path, start, mu, opts)
    }

    /// One Euler–Maruyama step of states and log-weights.
    pub fn step(&mut self) -> Result<(), FilterError> {
        if self.step >= self.path.steps() {
            return Err(FilterError::PathExhausted);
        }
        let d = self.dim;
        let step = self.step;
        let path = Arc::clone(&self.path);
        let dt = path.dt();
        let dy = path.dy(step);
        let Self { model, states, w0, log_w, noise, dw, coef, .. } = self;
        let mut mass = CompensatedSum::new();
        let mut mass2 = CompensatedSum::new();
        let mut rho_h = vec![CompensatedSum::new(); d];
        for (i, x) in states.chunks_exact_mut(d).enumerate() {
            model.coefficients_into(x, coef);
            let w = w0[i] * log_w[i].exp();
            mass.add(w);
            mass2.add(w * w);
            let mut hdy = 0.0;
            let mut hh = 0.0;
            for k in 0..d {
                rho_h[k].add(w * coef.h[k]);
                hdy += coef.h[k] * dy[k];
                hh += coef.h[k] * coef.h[k];
            }
            log_w[i] += hdy - 0.5 * hh * dt;
            let dwi = &mut dw[i * d..(i + 1) * d];
            noise[i].next_increment(dwi);
            for a in 0..d {
                let mut inc = coef.f[a] * dt;
                for k in 0..d {
                    let sb = coef.sigma_bar[a * d + k];
                    inc += coef.sigma[a * d + k] * dwi[k] + sb * (dy[k] - coef.h[k] * dt);
                }
                x[a] += inc;
            }
            if x.iter().any(|v| !v.is_finite()) || !log_w[i].is_finite() {
                return Err(FilterError::NonFinite { step, particle: i });
            }
        }
        let m = mass.value();
        self.records.push(StepRecord {
            time: self.path.time(self.step),
            mass: m,
            ess: m * m / mass2.value(),
            rho_h: rho_h.iter().map(|s| s.value()).collect(),
        });
        self.step += 1;
        if let Some(k) = self.opts.snapshot_stride {
            if (self.step - self.start).is_multiple_of(k.max(1)) {
                self.snapshots.push((self.time(), self.measure()));
            }
        }
        if let Some(frac) = self.opts.resample_below {
            self.maybe_resample(frac);
        }
        Ok(())
    }

    fn maybe_resample(&mut self, frac: f64) {
        let w = self.weights();
        let n = w.len();
        let total: f64 = crate::stats::compensated_sum(w.iter().copied());
        let ess = total * total / crate::stats::compensated_sum(w.iter().map(|v| v * v));
        if ess >= frac * n as f64 {
            return;
        }
        let rng = self.resampler.as_mut().expect("resampler exists when resampling is enabled");
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for v in &w {
            acc += v / total;
            cdf.push(acc);
        }
        let d = self.dim;
        let mut states = Vec::with_capacity(self.states.len());
        for _ in 0..n {
            let u = rng.uniform();
            let j = cdf.partition_point(|&c| c <= u).min(n - 1);
            states.extend_from_slice(&self.states[j * d..(j + 1) * d]);
        }
        self.states = states;
        self.w0 = vec![total / n as f64; n];
        self.log_w = vec![0.0; n];
        self.resample_events += 1;
    }

    /// Advances to grid step `target`.
    pub fn run_to(&mut self, target: usize) -> Result<(), FilterError> {
        if target > self.path.steps() {
            return Err(FilterError::PathExhausted);
        }
        while self.step < target {
            self.step()?;
        }
        Ok(())
    }

    pub fn run_to_end(&mut self) -> Result<(), FilterError> {
        self.run_to(self.path.steps())
    }

    pub fn model(&self) -> &Arc<FilteringModel> {
        &self.model
    }

    pub fn path(&self) -> &Arc<NoisePath> {
        &self.path
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.w0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w0.is_empty()
    }

    pub fn start_step(&self) -> usize {
        self.start
    }

    pub fn current_step(&self) -> usize {
        self.step
    }

    pub fn is_finished(&self) -> bool {
        self.step == self.path.steps()
    }

    pub fn time(&self) -> f64 {
        self.path.time(self.step)
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_w
    }

    pub fn initial_weights(&self) -> &[f64] {
        &self.w0
    }

    pub fn weights(&self) -> Vec<f64> {
        self.w0.iter().zip(&self.log_w).map(|(w, l)| w * l.exp()).collect()
    }

    /// Signal increments `ΔWᵢ` used by the most recent step, row-major `N×d`.
    pub fn last_increments(&self) -> &[f64] {
        &self.dw
    }

    /// Snapshot `ρ_t` at the current time.
    pub fn measure(&self) -> ParticleMeasure {
        ParticleMeasure::new(self.dim, self.states.clone(), self.weights()).expect("finite particle states")
    }

    pub fn total_mass(&self) -> f64 {
        crate::stats::compensated_sum(self.weights())
    }

    /// Records of the grid times already left, one per step taken.
    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    /// Record of the current time.
    pub fn current_record(&self) -> StepRecord {
        let d = self.dim;
        let w = self.weights();
        let mut rho_h = vec![CompensatedSum::new(); d];
        let mut h = vec![0.0; d];
        for (i, x) in self.states.chunks_exact(d).enumerate() {
            self.model.obs_into(x, &mut h);
            for k in 0..d {
                rho_h[k].add(w[i] * h[k]);
            }
        }
        let m = crate::stats::compensated_sum(w.iter().copied());
        let m2 = crate::stats::compensated_sum(w.iter().map(|v| v * v));
        StepRecord { time: self.time(), mass: m, ess: m * m / m2, rho_h: rho_h.iter().map(|s| s.value()).collect() }
    }

    pub fn snapshots(&self) -> &[(f64, ParticleMeasure)] {
        &self.snapshots
    }

    pub fn resample_events(&self) -> usize {
        self.resample_events
    }

    pub fn options(&self) -> &FlowOptions {
        &self.opts
    }
}

type Particles = (Vec<f64>, Vec<f64>, Vec<u64>);

fn initial_particles(mu: &ParticleMeasure, path: &NoisePath, opts: &FlowOptions) -> Result<Particles, FilterError> {
    let d = mu.dim();
    let base = opts.key_base;
    match opts.init {
        ParticleInit::Atoms => {
            let keys = (0..mu.len() as u64).map(|i| base + i).collect();
            Ok((mu.locations().to_vec(), mu.weights().to_vec(), keys))
        }
        ParticleInit::Replicated { per_atom } => {
            if per_atom == 0 {
                return Err(FilterError::InvalidConfig("per_atom must be positive".into()));
            }
            let n = mu.len() * per_atom;
            let mut states = Vec::with_capacity(n * d);
            let mut w0 = Vec::with_capacity(n);
            let mut keys = Vec::with_capacity(n);
            for (i, (x, w)) in mu.atoms().enumerate() {
                for j in 0..per_atom {
                    states.extend_from_slice(x);
                    w0.push(w / per_atom as f64);
                    keys.push(base + (i * per_atom + j) as u64);
                }
            }
            Ok((states, w0, keys))
        }
        ParticleInit::Sampled { count } => {
            if count == 0 {
                return Err(FilterError::InvalidConfig("particle count must be positive".into()));
            }
            let m = mu.total_mass();
            if !(m > 0.0) {
                return Err(crate::error::MeasureError::ZeroMass.into());
            }
            let mut cdf = Vec::with_capacity(mu.len());
            let mut acc = 0.0;
            for &w in mu.weights() {
                acc += w / m;
                cdf.push(acc);
            }
            let mut rng = Stream::new(path.seed(), path.replica(), AUX_STREAM);
            let mut states = Vec::with_capacity(count * d);
            for _ in 0..count {
                let u = rng.uniform();
                let j = cdf.partition_point(|&c| c <= u).min(mu.len() - 1);
                states.extend_from_slice(mu.location(j));
            }
            Ok((states, vec![m / count as f64; count], (0..count as u64).map(|i| base + i).collect()))
        }
    }
}

/// The flow `Z^s(x)` started at `δₓ`, which realises the flat derivative of `μ ↦ ρ^{s,μ}`.
pub fn derivative_flow(
    model: Arc<FilteringModel>,
    start: usize,
    x: &[f64],
    path: Arc<NoisePath>,
    opts: FlowOptions,
) -> Result<ZakaiFlow, FilterError> {
    let delta = ParticleMeasure::dirac(x, 1.0)?;
    ZakaiFlow::new(model, path, start, &delta, opts)
}
