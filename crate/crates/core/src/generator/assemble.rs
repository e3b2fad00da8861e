use super::{GeneratorEvaluation, GeneratorKind, GeneratorTerms, KsCorrections};
use crate::calculus::{CylindricalFunctional, MeasureFunctional};
use crate::error::{CalculusError, FilterError};
use crate::filtering::{apply_b, Coefficients, FilteringModel};
use crate::linalg::{dot, Matrix};
use crate::measure::{ParticleMeasure, TestFunction};
use crate::stats::CompensatedSum;

/// First-order derivative objects at one atom `xᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderAt {
    /// `D_μu(μ, xᵢ)`.
    pub l: Vec<f64>,
    /// `D_xD_μu(μ, xᵢ)`.
    pub x_l: Matrix,
}

/// Second-order derivative objects at a pair of atoms `(xᵢ, xⱼ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderAt {
    /// `δ²u(μ, xᵢ, xⱼ)`.
    pub flat2: f64,
    /// `D_xδ²u(μ, xᵢ, xⱼ)`, gradient in the first point.
    pub x_flat2: Vec<f64>,
    /// `D²_μu(μ, xᵢ, xⱼ)`.
    pub l2: Matrix,
}

/// Source of the derivatives of a functional at the atoms of a measure.
///
/// [`AnalyticProvider`] evaluates them exactly; Monte Carlo estimators of the value function
/// implement the same trait, so both go through [`assemble`].
pub trait DerivativeProvider {
    fn measure(&self) -> &ParticleMeasure;
    fn first(&self, i: usize) -> Result<FirstOrderAt, FilterError>;
    fn second(&self, i: usize, j: usize) -> Result<SecondOrderAt, FilterError>;
}

/// Exact derivatives from a [`MeasureFunctional`].
pub struct AnalyticProvider<'a> {
    pub u: &'a dyn MeasureFunctional,
    pub mu: &'a ParticleMeasure,
}

impl DerivativeProvider for AnalyticProvider<'_> {
    fn measure(&self) -> &ParticleMeasure {
        self.mu
    }

    fn first(&self, i: usize) -> Result<FirstOrderAt, FilterError> {
        let x = self.mu.location(i);
        Ok(FirstOrderAt { l: self.u.l_derivative(self.mu, x)?, x_l: self.u.x_l_derivative(self.mu, x)? })
    }

    fn second(&self, i: usize, j: usize) -> Result<SecondOrderAt, FilterError> {
        let (x, y) = (self.mu.location(i), self.mu.location(j));
        Ok(SecondOrderAt {
            flat2: self.u.flat_derivative2(self.mu, x, y)?,
            x_flat2: self.u.x_flat_derivative2(self.mu, x, y)?,
            l2: self.u.l_derivative2(self.mu, x, y)?,
        })
    }
}

fn coefficients_at_atoms(model: &FilteringModel, mu: &ParticleMeasure) -> Vec<Coefficients> {
    mu.atoms().map(|(x, _)| model.coefficients(x)).collect()
}

fn check_model_dim(model: &FilteringModel, mu: &ParticleMeasure) -> Result<(), FilterError> {
    if model.dim() != mu.dim() {
        return Err(FilterError::Dimension { expected: model.dim(), found: mu.dim() });
    }
    Ok(())
}

fn check_probability(pi: &ParticleMeasure) -> Result<(), FilterError> {
    if !pi.is_probability() {
        return Err(FilterError::NotProbability(pi.total_mass()));
    }
    Ok(())
}

/// Assembles `𝓛u(μ)` (or `𝓛^KS u(μ)`) from derivative objects at the atoms of `μ` by exact
/// summation over atoms and pairs of atoms.
pub fn assemble(
    model: &FilteringModel,
    provider: &dyn DerivativeProvider,
    kind: GeneratorKind,
) -> Result<GeneratorEvaluation, FilterError> {
    let mu = provider.measure();
    check_model_dim(model, mu)?;
    let d = mu.dim();
    let k = mu.len();
    let coefs = coefficients_at_atoms(model, mu);
    let w = mu.weights();
    let c: Vec<f64> = (0..d).map(|a| (0..k).map(|i| w[i] * coefs[i].h[a]).sum()).collect();

    let mut drift = CompensatedSum::new();
    let mut sig = CompensatedSum::new();
    let mut sigb = CompensatedSum::new();
    for i in 0..k {
        let fo = provider.first(i)?;
        let cf = &coefs[i];
        drift.add(w[i] * dot(&fo.l, &cf.f));
        let s = Matrix::from_row_major(d, cf.sigma.clone());
        let sb = Matrix::from_row_major(d, cf.sigma_bar.clone());
        sig.add(0.5 * w[i] * fo.x_l.trace_product(&s.matmul(&s.transpose())));
        sigb.add(0.5 * w[i] * fo.x_l.trace_product(&sb.matmul(&sb.transpose())));
    }

    let mut hh = CompensatedSum::new();
    let mut cross = CompensatedSum::new();
    let mut barbar = CompensatedSum::new();
    let mut pipi = CompensatedSum::new();
    let mut hcorr = CompensatedSum::new();
    let mut bcorr = CompensatedSum::new();
    let mut bx = vec![0.0; d];
    for i in 0..k {
        let sbi = Matrix::from_row_major(d, coefs[i].sigma_bar.clone());
        for j in 0..k {
            let so = provider.second(i, j)?;
            let ww = w[i] * w[j];
            let (hi, hj) = (&coefs[i].h, &coefs[j].h);
            hh.add(0.5 * ww * so.flat2 * dot(hi, hj));
            apply_b(&coefs[i].sigma_bar, d, &so.x_flat2, &mut bx);
            cross.add(ww * dot(hj, &bx));
            let sbj = Matrix::from_row_major(d, coefs[j].sigma_bar.clone());
            barbar.add(0.5 * ww * so.l2.trace_product(&sbj.matmul(&sbi.transpose())));
            if kind == GeneratorKind::KushnerStratonovich {
                pipi.add(0.5 * ww * so.flat2 * dot(&c, &c));
                hcorr.add(-ww * so.flat2 * dot(&c, hj));
                bcorr.add(-ww * dot(&c, &bx));
            }
        }
    }
    let terms = GeneratorTerms {
        drift: drift.value(),
        sigma_trace: sig.value(),
        sigma_bar_trace: sigb.value(),
        hh: hh.value(),
        cross: cross.value(),
        sigma_bar_second: barbar.value(),
        ks: (kind == GeneratorKind::KushnerStratonovich).then(|| KsCorrections {
            pi_h_squared: pipi.value(),
            h_correction: hcorr.value(),
            sigma_bar_correction: bcorr.value(),
        }),
    };
    Ok(GeneratorEvaluation::new(kind, terms, mu.clone()))
}

/// `𝓛u(μ)` from the exact derivatives of `u`.
pub fn apply_l(
    model: &FilteringModel,
    u: &dyn MeasureFunctional,
    mu: &ParticleMeasure,
) -> Result<GeneratorEvaluation, FilterError> {
    assemble(model, &AnalyticProvider { u, mu }, GeneratorKind::Zakai)
}

/// `𝓛^KS u(π)` at a probability measure `π`.
pub fn apply_lks(
    model: &FilteringModel,
    u: &dyn MeasureFunctional,
    pi: &ParticleMeasure,
) -> Result<GeneratorEvaluation, FilterError> {
    check_probability(pi)?;
    assemble(model, &AnalyticProvider { u, mu: pi }, GeneratorKind::KushnerStratonovich)
}

/// Integrals of a cylindrical functional's inner functions against the generator data.
///
/// For inner functions `ψₖ` and weights `wᵢ`: `r_k = Σwψₖ`, `a_k = Σw Dψₖ·f`,
/// `b_k = ½Σw tr{D²ψₖ σσᵀ}`, `c_k = ½Σw tr{D²ψₖ σ̄σ̄ᵀ}`, `H_k = Σw hψₖ`, `S_k = Σw σ̄ᵀDψₖ`
/// and `ρ(h) = Σw h`.
#[derive(Debug, Clone)]
pub(crate) struct Moments {
    pub n: usize,
    pub d: usize,
    pub r: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub hk: Vec<f64>,
    pub sk: Vec<f64>,
    pub rho_h: Vec<f64>,
}

impl Moments {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            r: vec![0.0; n],
            a: vec![0.0; n],
            b: vec![0.0; n],
            c: vec![0.0; n],
            hk: vec![0.0; n * d],
            sk: vec![0.0; n * d],
            rho_h: vec![0.0; d],
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let sc = |v: &Vec<f64>| v.iter().map(|x| x * s).collect();
        Self {
            n: self.n,
            d: self.d,
            r: sc(&self.r),
            a: sc(&self.a),
            b: sc(&self.b),
            c: sc(&self.c),
            hk: sc(&self.hk),
            sk: sc(&self.sk),
            rho_h: sc(&self.rho_h),
        }
    }

    /// The moments of the inner functions with indices `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let d = self.d;
        let pick = |v: &Vec<f64>| idx.iter().map(|&k| v[k]).collect();
        let rows = |v: &Vec<f64>| idx.iter().flat_map(|&k| v[k * d..(k + 1) * d].iter().copied()).collect();
        Self {
            n: idx.len(),
            d,
            r: pick(&self.r),
            a: pick(&self.a),
            b: pick(&self.b),
            c: pick(&self.c),
            hk: rows(&self.hk),
            sk: rows(&self.sk),
            rho_h: self.rho_h.clone(),
        }
    }

    fn h_row(&self, k: usize) -> &[f64] {
        &self.hk[k * self.d..(k + 1) * self.d]
    }

    fn s_row(&self, k: usize) -> &[f64] {
        &self.sk[k * self.d..(k + 1) * self.d]
    }

    /// Generator terms for outer gradient `g1` and Hessian `g2` (row-major).
    pub fn terms(&self, g1: &[f64], g2: &[f64], kind: GeneratorKind) -> GeneratorTerms {
        let n = self.n;
        let mut t = GeneratorTerms {
            drift: dot(g1, &self.a),
            sigma_trace: dot(g1, &self.b),
            sigma_bar_trace: dot(g1, &self.c),
            ..Default::default()
        };
        let ks = kind == GeneratorKind::KushnerStratonovich;
        let ch = &self.rho_h;
        let cc = dot(ch, ch);
        let mut corr = KsCorrections::default();
        for k in 0..n {
            for l in 0..n {
                let g = g2[k * n + l];
                if g == 0.0 {
                    continue;
                }
                t.hh += 0.5 * g * dot(self.h_row(k), self.h_row(l));
                t.cross += g * dot(self.s_row(k), self.h_row(l));
                t.sigma_bar_second += 0.5 * g * dot(self.s_row(k), self.s_row(l));
                if ks {
                    corr.pi_h_squared += 0.5 * g * cc * self.r[k] * self.r[l];
                    corr.h_correction -= g * self.r[k] * dot(self.h_row(l), ch);
                    corr.sigma_bar_correction -= g * dot(self.s_row(k), ch) * self.r[l];
                }
            }
        }
        if ks {
            t.ks = Some(corr);
        }
        t
    }
}

/// Scratch buffers for evaluating inner functions at one point.
pub(crate) struct InnerScratch {
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
    pub bx: Vec<f64>,
}

impl InnerScratch {
    pub fn new(d: usize) -> Self {
        Self { grad: vec![0.0; d], hess: vec![0.0; d * d], bx: vec![0.0; d] }
    }
}

/// Adds the contribution of a particle at `x` with weight `w` and coefficients `cf` to `m`.
/// When `v_out` is given, it receives `σᵀDψₖ(x)` for each `k` (row-major `n×d`).
pub(crate) fn accumulate(
    inner: &[TestFunction],
    x: &[f64],
    w: f64,
    cf: &Coefficients,
    m: &mut Moments,
    scratch: &mut InnerScratch,
    mut v_out: Option<&mut [f64]>,
) -> Result<(), CalculusError> {
    let d = m.d;
    for a in 0..d {
        m.rho_h[a] += w * cf.h[a];
    }
    for (k, psi) in inner.iter().enumerate() {
        let p = psi.value(x);
        psi.gradient_into(x, &mut scratch.grad);
        if !psi.hessian_into(x, &mut scratch.hess) {
            return Err(CalculusError::Unsupported { functional: psi.name().to_string(), capability: "a Hessian" });
        }
        m.r[k] += w * p;
        m.a[k] += w * dot(&scratch.grad, &cf.f);
        let mut tb = 0.0;
        let mut tc = 0.0;
        for i in 0..d {
            for j in 0..d {
                let mut ss = 0.0;
                let mut sbsb = 0.0;
                for q in 0..d {
                    ss += cf.sigma[i * d + q] * cf.sigma[j * d + q];
                    sbsb += cf.sigma_bar[i * d + q] * cf.sigma_bar[j * d + q];
                }
                tb += ss * scratch.hess[i * d + j];
                tc += sbsb * scratch.hess[i * d + j];
            }
        }
        m.b[k] += 0.5 * w * tb;
        m.c[k] += 0.5 * w * tc;
        apply_b(&cf.sigma_bar, d, &scratch.grad, &mut scratch.bx);
        for a in 0..d {
            m.hk[k * d + a] += w * cf.h[a] * p;
            m.sk[k * d + a] += w * scratch.bx[a];
        }
        if let Some(v) = v_out.as_deref_mut() {
            apply_b(&cf.sigma, d, &scratch.grad, &mut v[k * d..(k + 1) * d]);
        }
    }
    Ok(())
}

pub(crate) fn cylindrical_moments(
    model: &FilteringModel,
    u: &CylindricalFunctional,
    mu: &ParticleMeasure,
) -> Result<Moments, FilterError> {
    check_model_dim(model, mu)?;
    if u.dim() != mu.dim() {
        return Err(FilterError::Dimension { expected: u.dim(), found: mu.dim() });
    }
    let d = mu.dim();
    let mut m = Moments::zeros(u.arity(), d);
    let mut scratch = InnerScratch::new(d);
    let mut cf = Coefficients::new(d);
    for (x, w) in mu.atoms() {
        model.coefficients_into(x, &mut cf);
        accumulate(u.inner(), x, w, &cf, &mut m, &mut scratch, None)?;
    }
    Ok(m)
}

/// `𝓛u(μ)` for a cylindrical `u`, from integrals of its inner functions.
pub fn apply_l_cylindrical(
    model: &FilteringModel,
    u: &CylindricalFunctional,
    mu: &ParticleMeasure,
) -> Result<GeneratorEvaluation, FilterError> {
    let m = cylindrical_moments(model, u, mu)?;
    let s = u.state_from_integrals(m.r.clone());
    Ok(GeneratorEvaluation::new(GeneratorKind::Zakai, m.terms(&s.grad, &s.hess, GeneratorKind::Zakai), mu.clone()))
}

/// `𝓛^KS u(π)` for a cylindrical `u` at a probability measure.
pub fn apply_lks_cylindrical(
    model: &FilteringModel,
    u: &CylindricalFunctional,
    pi: &ParticleMeasure,
) -> Result<GeneratorEvaluation, FilterError> {
    check_probability(pi)?;
    let m = cylindrical_moments(model, u, pi)?;
    let s = u.state_from_integrals(m.r.clone());
    let kind = GeneratorKind::KushnerStratonovich;
    Ok(GeneratorEvaluation::new(kind, m.terms(&s.grad, &s.hess, kind), pi.clone()))
}
