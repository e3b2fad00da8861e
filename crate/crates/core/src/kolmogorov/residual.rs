use super::{check_inputs, par_replicas, terminal_measure, McConfig};
use crate::calculus::{HomogeneousLift, MeasureFunctional, PreparedFunctional};
use crate::error::FilterError;
use crate::filtering::FilteringModel;
use crate::generator::{assemble, DerivativeProvider, FirstOrderAt, GeneratorKind, GeneratorTerms, SecondOrderAt};
use crate::linalg::Matrix;
use crate::measure::ParticleMeasure;
use crate::noise::NoisePath;
use crate::stats::{control_variate_adjust, SampleSummary};
use serde::Serialize;
use std::sync::Arc;

/// Derivative objects at the atoms of a measure, stored in full.
#[derive(Debug, Clone)]
pub struct TableProvider {
    pub mu: ParticleMeasure,
    pub first: Vec<FirstOrderAt>,
    /// Row-major over atom pairs `(i, j)`.
    pub second: Vec<SecondOrderAt>,
}

impl DerivativeProvider for TableProvider {
    fn measure(&self) -> &ParticleMeasure {
        &self.mu
    }

    fn first(&self, i: usize) -> Result<FirstOrderAt, FilterError> {
        Ok(self.first[i].clone())
    }

    fn second(&self, i: usize, j: usize) -> Result<SecondOrderAt, FilterError> {
        Ok(self.second[i * self.mu.len() + j].clone())
    }
}

/// `∂_s u + 𝓛u` (or `∂_s u + 𝓛^KS u`) at `(μ, s)`.
#[derive(Debug, Clone, Serialize)]
pub struct PdeResidualReport {
    pub kind: GeneratorKind,
    pub s: f64,
    pub fd_step: f64,
    pub spatial_step: f64,
    pub dt: f64,
    pub particles_per_atom: usize,
    /// `∂_s u` after the observation-increment control variates.
    pub time_derivative: SampleSummary,
    pub time_derivative_raw: SampleSummary,
    pub generator: SampleSummary,
    /// `∂_s u + 𝓛u` after the observation-increment control variates.
    pub residual: SampleSummary,
    pub residual_raw: SampleSummary,
    /// Replica means of the generator terms.
    pub terms: GeneratorTerms,
    pub per_replica: Vec<f64>,
    pub raw_per_replica: Vec<f64>,
    /// Control variates of each replica: `ΔY` over `[s − fd_step, s + fd_step]` and its
    /// products with the value of the flow started at `s + fd_step`.
    #[serde(skip)]
    pub features: Vec<Vec<f64>>,
}

impl PdeResidualReport {
    /// `|∂_s u| + |𝓛u|` of the means.
    pub fn scale(&self) -> f64 {
        self.time_derivative.mean.abs() + self.generator.mean.abs()
    }

    /// `|residual| ≤ max(z·SE, rel·scale)`.
    pub fn within(&self, z: f64, rel: f64) -> bool {
        self.residual.mean.abs() <= (z * self.residual.std_error).max(rel * self.scale())
    }

    /// Residual summary over the first `n` replicas, with the control variates refitted on them.
    pub fn prefix(&self, n: usize) -> SampleSummary {
        let n = n.min(self.raw_per_replica.len());
        SampleSummary::from_slice(&control_variate_adjust(&self.raw_per_replica[..n], &self.features[..n]))
    }
}

/// Spatial stencil around one atom: the atom itself, `x ± h eₐ`, and `x ± h eₐ ± h e_b` for
/// `a < b`, each with the terminal measure of its derivative flow.
struct Stencil {
    centre: ParticleMeasure,
    plus: Vec<ParticleMeasure>,
    minus: Vec<ParticleMeasure>,
    /// For each `a < b`: `(++, +−, −+, −−)`.
    mixed: Vec<[ParticleMeasure; 4]>,
}

fn shifted(x: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut y = x.to_vec();
    for &(a, v) in moves {
        y[a] += v;
    }
    y
}

struct FlowRunner<'a> {
    model: &'a Arc<FilteringModel>,
    path: Arc<NoisePath>,
    start: usize,
    per_atom: usize,
}

impl FlowRunner<'_> {
    fn z(&self, x: &[f64], key_base: u64) -> Result<ParticleMeasure, FilterError> {
        terminal_measure(self.model, &self.path, self.start, &ParticleMeasure::dirac(x, 1.0)?, self.per_atom, key_base)
    }

    fn stencil(&self, x: &[f64], h: f64, key_base: u64) -> Result<Stencil, FilterError> {
        let d = x.len();
        let mut plus = Vec::with_capacity(d);
        let mut minus = Vec::with_capacity(d);
        for a in 0..d {
            plus.push(self.z(&shifted(x, &[(a, h)]), key_base)?);
            minus.push(self.z(&shifted(x, &[(a, -h)]), key_base)?);
        }
        let mut mixed = Vec::new();
        for a in 0..d {
            for b in a + 1..d {
                let m = |sa: f64, sb: f64| self.z(&shifted(x, &[(a, sa * h), (b, sb * h)]), key_base);
                mixed.push([m(1.0, 1.0)?, m(1.0, -1.0)?, m(-1.0, 1.0)?, m(-1.0, -1.0)?]);
            }
        }
        Ok(Stencil { centre: self.z(x, key_base)?, plus, minus, mixed })
    }
}

/// Pathwise derivative objects of one replica from its stencils and the prepared terminal
/// functional.
fn replica_table(
    mu: &ParticleMeasure,
    st: &[Stencil],
    p: &dyn PreparedFunctional,
    h: f64,
) -> Result<TableProvider, FilterError> {
    let d = mu.dim();
    let k = mu.len();
    let mut first = Vec::with_capacity(k);
    for s in st {
        let f0 = p.first(&s.centre)?;
        let fp: Vec<f64> = s.plus.iter().map(|z| p.first(z)).collect::<Result<_, _>>()?;
        let fm: Vec<f64> = s.minus.iter().map(|z| p.first(z)).collect::<Result<_, _>>()?;
        let l: Vec<f64> = (0..d).map(|a| (fp[a] - fm[a]) / (2.0 * h)).collect();
        let mut x_l = Matrix::zeros(d);
        let mut idx = 0;
        for a in 0..d {
            x_l[(a, a)] = (fp[a] - 2.0 * f0 + fm[a]) / (h * h);
            for b in a + 1..d {
                let m = &s.mixed[idx];
                let v = (p.first(&m[0])? - p.first(&m[1])? - p.first(&m[2])? + p.first(&m[3])?) / (4.0 * h * h);
                x_l[(a, b)] = v;
                x_l[(b, a)] = v;
                idx += 1;
            }
        }
        first.push(FirstOrderAt { l, x_l });
    }
    let mut second = Vec::with_capacity(k * k);
    for si in st {
        for sj in st {
            let flat2 = p.second(&si.centre, &sj.centre)?;
            let mut x_flat2 = vec![0.0; d];
            let mut l2 = Matrix::zeros(d);
            for a in 0..d {
                x_flat2[a] = (p.second(&si.plus[a], &sj.centre)? - p.second(&si.minus[a], &sj.centre)?) / (2.0 * h);
                for b in 0..d {
                    l2[(a, b)] = (p.second(&si.plus[a], &sj.plus[b])?
                        - p.second(&si.plus[a], &sj.minus[b])?
                        - p.second(&si.minus[a], &sj.plus[b])?
                        + p.second(&si.minus[a], &sj.minus[b])?)
                        / (4.0 * h * h);
                }
            }
            second.push(SecondOrderAt { flat2, x_flat2, l2 });
        }
    }
    Ok(TableProvider { mu: mu.clone(), first, second })
}

/// Residual of the backward Kolmogorov equation for each requested generator, sharing flows.
///
/// Per replica, `∂_s u` is the central difference of `Φ(ρ_T)` between flows started at
/// `s ± fd_step` from `μ` on the same noise path. Observation increments on
/// `[s − fd_step, s + fd_step]` are independent of the later flow and have mean zero, so they and
/// their products with `Φ(ρ_T^{s+fd_step,μ})` are regressed out of the per-replica residuals.
/// The generator is assembled from pathwise derivative objects:
/// `δu`, `D_μu` and `D_xD_μu` at each atom from derivative flows started at the atom and at
/// `x ± h eₐ` (with shared particle noise), and `δ²u`, `D_xδ²u`, `D²_μu` from pairs of those
/// flows. The second flat derivative of the flow itself is the null measure, so nothing else
/// enters. For the Kushner–Stratonovich equation the same flows are used with the
/// 1-homogeneous extension of `Φ`, and `μ` must be a probability measure.
#[allow(clippy::too_many_arguments)]
pub fn pde_residuals(
    model: &Arc<FilteringModel>,
    phi: Arc<dyn MeasureFunctional>,
    mu: &ParticleMeasure,
    s: f64,
    fd_step: f64,
    spatial_step: f64,
    kinds: &[GeneratorKind],
    cfg: &McConfig,
) -> Result<Vec<PdeResidualReport>, FilterError> {
    check_inputs(model, phi.as_ref(), mu, cfg)?;
    let start = cfg.step_of(s)?;
    let lo = cfg.step_of(s - fd_step).ok();
    let hi = cfg.step_of(s + fd_step).ok();
    let (lo, hi) = match (lo, hi) {
        (Some(a), Some(b)) if fd_step > 0.0 && a < start && b > start && b <= cfg.steps() => (a, b),
        _ => {
            return Err(FilterError::InvalidConfig(format!(
                "s ± fd_step = {s} ± {fd_step} must be distinct grid times in [0, {}]",
                cfg.horizon
            )))
        }
    };
    if kinds.contains(&GeneratorKind::KushnerStratonovich) && !mu.is_probability() {
        return Err(FilterError::NotProbability(mu.total_mass()));
    }
    let lift: Arc<dyn MeasureFunctional> = Arc::new(HomogeneousLift::new(Arc::clone(&phi)));
    let functional = |k: GeneratorKind| match k {
        GeneratorKind::Zakai => Arc::clone(&phi),
        GeneratorKind::KushnerStratonovich => Arc::clone(&lift),
    };
    let per_atom = cfg.per_atom(mu.len());
    let k = mu.len();
    let h = spatial_step;
    let rows = par_replicas(cfg.replicas, |r| {
        let path = cfg.path(r, model.dim());
        let run = FlowRunner { model, path: Arc::clone(&path), start, per_atom };
        let rho = terminal_measure(model, &path, start, mu, per_atom, 0)?;
        let rho_lo = terminal_measure(model, &path, lo, mu, per_atom, 0)?;
        let rho_hi = terminal_measure(model, &path, hi, mu, per_atom, 0)?;
        let stencils: Vec<Stencil> = mu
            .atoms()
            .enumerate()
            .map(|(i, (x, _))| run.stencil(x, h, ((k + i) * per_atom) as u64))
            .collect::<Result<_, _>>()?;
        let mut window = vec![0.0; path.dim()];
        for m in lo..hi {
            for (acc, v) in window.iter_mut().zip(path.dy(m)) {
                *acc += v;
            }
        }
        let mut out = Vec::with_capacity(kinds.len());
        for &kind in kinds {
            let f = functional(kind);
            let at_hi = f.value(&rho_hi)?;
            let dt_u = (at_hi - f.value(&rho_lo)?) / (cfg.dt * (hi - lo) as f64);
            let p = f.prepare(&rho)?;
            let table = replica_table(mu, &stencils, p.as_ref(), h)?;
            let ev = assemble(model, &table, kind)?;
            let mut features = window.clone();
            features.extend(window.iter().map(|w| w * at_hi));
            out.push((dt_u, ev.value, ev.terms, features));
        }
        Ok(out)
    })?;
    Ok(kinds
        .iter()
        .enumerate()
        .map(|(j, &kind)| {
            let dt_u: Vec<f64> = rows.iter().map(|r| r[j].0).collect();
            let gen: Vec<f64> = rows.iter().map(|r| r[j].1).collect();
            let raw: Vec<f64> = dt_u.iter().zip(&gen).map(|(a, b)| a + b).collect();
            let features: Vec<Vec<f64>> = rows.iter().map(|r| r[j].3.clone()).collect();
            let res = control_variate_adjust(&raw, &features);
            let n = rows.len() as f64;
            let mean_terms = rows.iter().fold(GeneratorTerms::default(), |acc, r| acc.add_scaled(&r[j].2, 1.0 / n));
            PdeResidualReport {
                kind,
                s,
                fd_step,
                spatial_step,
                dt: cfg.dt,
                particles_per_atom: per_atom,
                time_derivative: SampleSummary::from_slice(&control_variate_adjust(&dt_u, &features)),
                time_derivative_raw: SampleSummary::from_slice(&dt_u),
                generator: SampleSummary::from_slice(&gen),
                residual: SampleSummary::from_slice(&res),
                residual_raw: SampleSummary::from_slice(&raw),
                terms: mean_terms,
                per_replica: res,
                raw_per_replica: raw,
                features,
            }
        })
        .collect())
}

/// [`pde_residuals`] for a single generator.
#[allow(clippy::too_many_arguments)]
pub fn pde_residual(
    model: &Arc<FilteringModel>,
    phi: Arc<dyn MeasureFunctional>,
    mu: &ParticleMeasure,
    s: f64,
    fd_step: f64,
    spatial_step: f64,
    kind: GeneratorKind,
    cfg: &McConfig,
) -> Result<PdeResidualReport, FilterError> {
    Ok(pde_residuals(model, phi, mu, s, fd_step, spatial_step, &[kind], cfg)?.remove(0))
}
