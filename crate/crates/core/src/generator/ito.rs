use super::assemble::{accumulate, InnerScratch, Moments};
use super::GeneratorKind;
use crate::calculus::{CylindricalFunctional, TimeDependentFunctional};
use crate::error::FilterError;
use crate::filtering::{Coefficients, ZakaiFlow};
use crate::linalg::dot;
use crate::measure::TestFunction;
use serde::Serialize;

/// Which flow the residual is taken along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    /// `u(ρ_t)` for the unnormalized flow.
    Zakai,
    /// `u(π_t)` for the normalized flow `π = ρ/ρ(1)`.
    Ks,
}

/// A functional tracked along a flow.
#[derive(Clone)]
pub struct ResidualTarget {
    pub u: TimeDependentFunctional,
    pub equation: Equation,
}

impl ResidualTarget {
    pub fn new(u: TimeDependentFunctional, equation: Equation) -> Self {
        Self { u, equation }
    }

    pub fn zakai(u: CylindricalFunctional) -> Self {
        Self::new(TimeDependentFunctional::stationary(u), Equation::Zakai)
    }

    pub fn ks(u: CylindricalFunctional) -> Self {
        Self::new(TimeDependentFunctional::stationary(u), Equation::Ks)
    }
}

/// One summand of the discretized Itô formula: its accumulated value and the accumulated
/// absolute size of its increments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedTerm {
    pub name: String,
    pub value: f64,
    pub magnitude: f64,
}

/// Pathwise comparison of `u(T) − u(t₀)` with the discretized right-hand side of the Itô
/// formula.
///
/// `ensemble_first` and `ensemble_second` are the martingale and bracket contributions of the
/// particles' own signal noise, which vanish as the number of particles grows.
/// `corrected_residual` removes them from `residual`.
#[derive(Debug, Clone, Serialize)]
pub struct ItoResidualReport {
    pub equation: Equation,
    pub functional: String,
    pub dt: f64,
    pub steps: usize,
    pub initial: f64,
    pub terminal: f64,
    pub lhs: f64,
    pub terms: Vec<NamedTerm>,
    pub rhs: f64,
    pub residual: f64,
    pub ensemble_first: f64,
    pub ensemble_second: f64,
    pub corrected_residual: f64,
}

impl ItoResidualReport {
    pub fn term(&self, name: &str) -> Option<&NamedTerm> {
        self.terms.iter().find(|t| t.name == name)
    }

    /// Sum of term magnitudes, a scale against which the residual can be judged.
    pub fn scale(&self) -> f64 {
        self.terms.iter().map(|t| t.magnitude).sum()
    }
}

const ZAKAI_NOISE: [&str; 2] = ["h_dy", "b_dy"];
const KS_NOISE: [&str; 3] = ["h_di", "b_di", "pi_h_di"];

struct Tracker<'a> {
    target: &'a ResidualTarget,
    names: Vec<&'static str>,
    values: Vec<f64>,
    magnitudes: Vec<f64>,
    time_term: f64,
    time_magnitude: f64,
    initial: Option<f64>,
    /// Positions of this target's inner functions in the shared list.
    idx: Vec<usize>,
    first: f64,
    second: f64,
}

impl<'a> Tracker<'a> {
    fn new(target: &'a ResidualTarget, idx: Vec<usize>) -> Self {
        let kind = kind_of(target.equation);
        let mut names: Vec<&'static str> = super::GeneratorTerms {
            ks: (kind == GeneratorKind::KushnerStratonovich).then(Default::default),
            ..Default::default()
        }
        .named()
        .into_iter()
        .map(|(n, _)| n)
        .collect();
        match target.equation {
            Equation::Zakai => names.extend(ZAKAI_NOISE),
            Equation::Ks => names.extend(KS_NOISE),
        }
        Self {
            target,
            values: vec![0.0; names.len()],
            magnitudes: vec![0.0; names.len()],
            names,
            time_term: 0.0,
            time_magnitude: 0.0,
            initial: None,
            idx,
            first: 0.0,
            second: 0.0,
        }
    }

    fn add(&mut self, i: usize, x: f64) {
        self.values[i] += x;
        self.magnitudes[i] += x.abs();
    }
}

fn kind_of(eq: Equation) -> GeneratorKind {
    match eq {
        Equation::Zakai => GeneratorKind::Zakai,
        Equation::Ks => GeneratorKind::KushnerStratonovich,
    }
}

fn validate(flow: &ZakaiFlow, targets: &[ResidualTarget]) -> Result<(), FilterError> {
    if flow.options().resample_below.is_some() {
        return Err(FilterError::InvalidConfig("Itô residuals need a flow without resampling".into()));
    }
    if flow.is_finished() {
        return Err(FilterError::PathExhausted);
    }
    for t in targets {
        let dim = t.u.base.inner().first().map_or(flow.dim(), |p| p.dim());
        if dim != flow.dim() {
            return Err(FilterError::Dimension { expected: flow.dim(), found: dim });
        }
        if t.u.base.inner().iter().any(|p| !p.has_hessian()) {
            return Err(FilterError::InvalidConfig(format!("{} needs inner Hessians", t.u.base.label())));
        }
    }
    Ok(())
}

/// Inner functions shared by all targets, each listed once, with their moments and the
/// per-particle vectors `σᵀDψ(Xₚ)`.
struct Shared {
    inner: Vec<TestFunction>,
    moments: Moments,
    v: Vec<f64>,
}

impl Shared {
    fn new(targets: &[ResidualTarget], n_particles: usize, d: usize) -> (Self, Vec<Vec<usize>>) {
        let mut inner: Vec<TestFunction> = Vec::new();
        let mut maps = Vec::with_capacity(targets.len());
        for t in targets {
            let idx =
                t.u.base
                    .inner()
                    .iter()
                    .map(|psi| match inner.iter().position(|q| q.same_function(psi)) {
                        Some(k) => k,
                        None => {
                            inner.push(psi.clone());
                            inner.len() - 1
                        }
                    })
                    .collect();
            maps.push(idx);
        }
        let n = inner.len();
        (Self { moments: Moments::zeros(n, d), v: vec![0.0; n_particles * n * d], inner }, maps)
    }

    /// Fills the moments at the flow's current state and returns the weights and the total mass.
    fn gather(&mut self, flow: &ZakaiFlow, with_v: bool) -> Result<(Vec<f64>, f64), FilterError> {
        let d = flow.dim();
        let n = self.inner.len();
        let w = flow.weights();
        let mass = crate::stats::compensated_sum(w.iter().copied());
        let mut cf = Coefficients::new(d);
        let mut scratch = InnerScratch::new(d);
        let model = flow.model();
        self.moments = Moments::zeros(n, d);
        for (p, x) in flow.states().chunks_exact(d).enumerate() {
            model.coefficients_into(x, &mut cf);
            let v = with_v.then(|| &mut self.v[p * n * d..(p + 1) * n * d]);
            accumulate(&self.inner, x, w[p], &cf, &mut self.moments, &mut scratch, v)?;
        }
        Ok((w, mass))
    }

    /// `Fₖ = Σₚ wₚ vₚₖ·ΔWₚ` and `Qₖₗ = Σₚ wₚ² vₚₖ·vₚₗ` for the stored vectors.
    fn ensemble(&self, w: &[f64], dw: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.inner.len();
        let mut f = vec![0.0; n];
        let mut q = vec![0.0; n * n];
        for (p, &wp) in w.iter().enumerate() {
            let vp = &self.v[p * n * d..(p + 1) * n * d];
            let dwp = &dw[p * d..(p + 1) * d];
            for k in 0..n {
                let vk = &vp[k * d..(k + 1) * d];
                f[k] += wp * dot(vk, dwp);
                for l in k..n {
                    q[k * n + l] += wp * wp * dot(vk, &vp[l * d..(l + 1) * d]);
                }
            }
        }
        for k in 0..n {
            for l in 0..k {
                q[k * n + l] = q[l * n + k];
            }
        }
        (f, q)
    }
}

/// Advances `flow` to the end of its noise path and evaluates the discretized Itô formula for
/// each target along the way.
///
/// Every summand is evaluated at the left end of each step, so the residual measures the
/// discretization error of the particle scheme together with the particles' own signal noise.
pub fn ito_residuals(flow: &mut ZakaiFlow, targets: &[ResidualTarget]) -> Result<Vec<ItoResidualReport>, FilterError> {
    validate(flow, targets)?;
    let d = flow.dim();
    let np = flow.len();
    let dt = flow.path().dt();
    let first_step = flow.current_step();
    let (mut shared, maps) = Shared::new(targets, np, d);
    let nu = shared.inner.len();
    let mut trackers: Vec<Tracker<'_>> = targets.iter().zip(maps).map(|(t, idx)| Tracker::new(t, idx)).collect();

    while !flow.is_finished() {
        let t_now = flow.time();
        let (w, mass) = shared.gather(flow, true)?;
        let step = flow.current_step();
        flow.step()?;
        let dy = flow.path().dy(step).to_vec();
        let (ens_f, ens_q) = shared.ensemble(&w, flow.last_increments(), d);
        for tr in trackers.iter_mut() {
            let scale = match tr.target.equation {
                Equation::Zakai => 1.0,
                Equation::Ks => 1.0 / mass,
            };
            let m = shared.moments.select(&tr.idx);
            let m = if scale == 1.0 { m } else { m.scaled(scale) };
            let u = &tr.target.u;
            let s = u.base.state_from_integrals(m.r.clone());
            let a = u.scale(t_now);
            let g1: Vec<f64> = s.grad.iter().map(|g| a * g).collect();
            let g2: Vec<f64> = s.hess.iter().map(|g| a * g).collect();
            if tr.initial.is_none() {
                tr.initial = Some(a * s.value + u.offset(t_now));
            }
            let kind = kind_of(tr.target.equation);
            let gen = m.terms(&g1, &g2, kind).named();
            for (i, (_, v)) in gen.iter().enumerate() {
                tr.add(i, v * dt);
            }
            let dtime = (u.scale_derivative(t_now) * s.value + u.offset_derivative(t_now)) * dt;
            tr.time_term += dtime;
            tr.time_magnitude += dtime.abs();

            let n = m.n;
            let base = gen.len();
            let mut hn = vec![0.0; d];
            let mut sn = vec![0.0; d];
            for k in 0..n {
                for c in 0..d {
                    hn[c] += g1[k] * m.hk[k * d + c];
                    sn[c] += g1[k] * m.sk[k * d + c];
                }
            }
            match tr.target.equation {
                Equation::Zakai => {
                    tr.add(base, dot(&hn, &dy));
                    tr.add(base + 1, dot(&sn, &dy));
                }
                Equation::Ks => {
                    let di: Vec<f64> = (0..d).map(|c| dy[c] - m.rho_h[c] * dt).collect();
                    let gr = dot(&g1, &m.r);
                    tr.add(base, dot(&hn, &di));
                    tr.add(base + 1, dot(&sn, &di));
                    tr.add(base + 2, -gr * dot(&m.rho_h, &di));
                }
            }

            let mut first = 0.0;
            let mut second = 0.0;
            for k in 0..n {
                let ik = tr.idx[k];
                first += scale * g1[k] * ens_f[ik];
                for l in 0..n {
                    second += 0.5 * g2[k * n + l] * scale * scale * ens_q[ik * nu + tr.idx[l]] * dt;
                }
            }
            tr.first += first;
            tr.second += second;
        }
    }

    let t_end = flow.time();
    let (_, mass) = shared.gather(flow, false)?;
    let steps = flow.current_step() - first_step;
    Ok(trackers
        .into_iter()
        .map(|tr| {
            let u = &tr.target.u;
            let r0 = shared.moments.select(&tr.idx).r;
            let r = match tr.target.equation {
                Equation::Zakai => r0,
                Equation::Ks => r0.iter().map(|v| v / mass).collect(),
            };
            let terminal = u.scale(t_end) * u.base.state_from_integrals(r).value + u.offset(t_end);
            let initial = tr.initial.unwrap_or(terminal);
            let mut terms: Vec<NamedTerm> = tr
                .names
                .iter()
                .zip(tr.values.iter().zip(&tr.magnitudes))
                .map(|(n, (v, m))| NamedTerm { name: (*n).to_string(), value: *v, magnitude: *m })
                .collect();
            if tr.time_magnitude > 0.0 {
                terms.push(NamedTerm {
                    name: "time_derivative".into(),
                    value: tr.time_term,
                    magnitude: tr.time_magnitude,
                });
            }
            let rhs: f64 = crate::stats::compensated_sum(terms.iter().map(|t| t.value));
            let lhs = terminal - initial;
            let residual = lhs - rhs;
            ItoResidualReport {
                equation: tr.target.equation,
                functional: u.base.label(),
                dt,
                steps,
                initial,
                terminal,
                lhs,
                terms,
                rhs,
                residual,
                ensemble_first: tr.first,
                ensemble_second: tr.second,
                corrected_residual: residual - tr.first - tr.second,
            }
        })
        .collect())
}

fn single(flow: &mut ZakaiFlow, target: ResidualTarget) -> Result<ItoResidualReport, FilterError> {
    Ok(ito_residuals(flow, std::slice::from_ref(&target))?.remove(0))
}

/// Itô residual of `u(ρ_t)` along the unnormalized flow.
pub fn ito_residual_zakai(flow: &mut ZakaiFlow, u: &CylindricalFunctional) -> Result<ItoResidualReport, FilterError> {
    single(flow, ResidualTarget::zakai(u.clone()))
}

/// Itô residual of `u(π_t)` along the normalized flow, driven by the innovation.
pub fn ito_residual_ks(flow: &mut ZakaiFlow, u: &CylindricalFunctional) -> Result<ItoResidualReport, FilterError> {
    single(flow, ResidualTarget::ks(u.clone()))
}

/// Itô residual of `u(t, ·)` with explicit time dependence.
pub fn ito_residual_time_dependent(
    flow: &mut ZakaiFlow,
    u: &TimeDependentFunctional,
    equation: Equation,
) -> Result<ItoResidualReport, FilterError> {
    single(flow, ResidualTarget::new(u.clone(), equation))
}
