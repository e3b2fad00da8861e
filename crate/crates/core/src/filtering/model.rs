use crate::error::FilterError;
use crate::linalg::Matrix;
use crate::measure::TestFunction;
use crate::noise::{Stream, AUX_STREAM};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// A coefficient map `ℝᵈ → ℝᵏ` writing into a caller-provided buffer.
pub type CoefficientMap = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Declared sup-norm and Lipschitz constants of one coefficient; `None` means unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Bound {
    pub sup: Option<f64>,
    pub lipschitz: Option<f64>,
}

impl Bound {
    pub fn new(sup: f64, lipschitz: f64) -> Self {
        Self { sup: Some(sup), lipschitz: Some(lipschitz) }
    }

    pub fn lipschitz_only(lipschitz: f64) -> Self {
        Self { sup: None, lipschitz: Some(lipschitz) }
    }
}

/// Constants declared by a model. Matrix norms are Frobenius norms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ModelConstants {
    pub drift: Bound,
    pub sigma: Bound,
    pub sigma_bar: Bound,
    pub obs: Bound,
    /// `λ` with `ξᵀσσᵀξ ≥ λ|ξ|²`.
    pub ellipticity: Option<f64>,
}

/// Parameters of the linear-Gaussian model `dX = aX dt + b dW`, `dY = cX dt + dB`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearGaussian {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Signal/observation model
/// `dX = f(X)dt + σ(X)dW + σ̄(X)dB`, `dY = h(X)dt + dB`.
#[derive(Clone)]
pub struct FilteringModel {
    name: String,
    dim: usize,
    drift: CoefficientMap,
    sigma: CoefficientMap,
    sigma_bar: CoefficientMap,
    obs: CoefficientMap,
    constants: ModelConstants,
    params: BTreeMap<String, f64>,
    linear: Option<LinearGaussian>,
}

impl fmt::Debug for FilteringModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FilteringModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("params", &self.params)
            .finish()
    }
}

/// Coefficients evaluated at one point. Matrices are row-major `d×d`.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub f: Vec<f64>,
    pub sigma: Vec<f64>,
    pub sigma_bar: Vec<f64>,
    pub h: Vec<f64>,
}

impl Coefficients {
    pub fn new(dim: usize) -> Self {
        Self { f: vec![0.0; dim], sigma: vec![0.0; dim * dim], sigma_bar: vec![0.0; dim * dim], h: vec![0.0; dim] }
    }
}

impl FilteringModel {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        drift: CoefficientMap,
        sigma: CoefficientMap,
        sigma_bar: CoefficientMap,
        obs: CoefficientMap,
        constants: ModelConstants,
    ) -> Self {
        Self { name: name.into(), dim, drift, sigma, sigma_bar, obs, constants, params: BTreeMap::new(), linear: None }
    }

    /// A one-dimensional model from scalar coefficient functions.
    pub fn scalar<F, S, B, H>(
        name: impl Into<String>,
        f: F,
        sigma: S,
        sigma_bar: B,
        h: H,
        constants: ModelConstants,
    ) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        S: Fn(f64) -> f64 + Send + Sync + 'static,
        B: Fn(f64) -> f64 + Send + Sync + 'static,
        H: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(
            name,
            1,
            Arc::new(move |x, o| o[0] = f(x[0])),
            Arc::new(move |x, o| o[0] = sigma(x[0])),
            Arc::new(move |x, o| o[0] = sigma_bar(x[0])),
            Arc::new(move |x, o| o[0] = h(x[0])),
            constants,
        )
    }

    pub fn with_params(mut self, params: BTreeMap<String, f64>) -> Self {
        self.params = params;
        self
    }

    pub fn with_linear_gaussian(mut self, lg: LinearGaussian) -> Self {
        self.linear = Some(lg);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constants(&self) -> &ModelConstants {
        &self.constants
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn linear_gaussian(&self) -> Option<LinearGaussian> {
        self.linear
    }

    /// Whether the declared constants cover boundedness, Lipschitz continuity and ellipticity.
    pub fn satisfies_hypotheses(&self) -> bool {
        let c = &self.constants;
        [c.drift, c.sigma, c.sigma_bar, c.obs].iter().all(|b| b.sup.is_some() && b.lipschitz.is_some())
            && c.ellipticity.is_some_and(|l| l > 0.0)
    }

    /// `‖h‖∞`, when declared.
    pub fn obs_sup(&self) -> Option<f64> {
        self.constants.obs.sup
    }

    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    pub fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        (self.sigma)(x, out)
    }

    pub fn sigma_bar_into(&self, x: &[f64], out: &mut [f64]) {
        (self.sigma_bar)(x, out)
    }

    pub fn obs_into(&self, x: &[f64], out: &mut [f64]) {
        (self.obs)(x, out)
    }

    pub fn coefficients_into(&self, x: &[f64], c: &mut Coefficients) {
        (self.drift)(x, &mut c.f);
        (self.sigma)(x, &mut c.sigma);
        (self.sigma_bar)(x, &mut c.sigma_bar);
        (self.obs)(x, &mut c.h);
    }

    pub fn coefficients(&self, x: &[f64]) -> Coefficients {
        let mut c = Coefficients::new(self.dim);
        self.coefficients_into(x, &mut c);
        c
    }

    pub fn obs(&self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.dim];
        (self.obs)(x, &mut h);
        h
    }

    /// `σσᵀ + σ̄σ̄ᵀ` at `x`.
    pub fn diffusion_matrix(&self, x: &[f64]) -> Matrix {
        let c = self.coefficients(x);
        let d = self.dim;
        let s = Matrix::from_row_major(d, c.sigma);
        let sb = Matrix::from_row_major(d, c.sigma_bar);
        s.matmul(&s.transpose()) + sb.matmul(&sb.transpose())
    }

    pub fn generator_a(&self) -> GeneratorA<'_> {
        GeneratorA { model: self }
    }

    pub fn generator_b(&self) -> GeneratorB<'_> {
        GeneratorB { model: self }
    }

    /// Samples the coefficients on `[−radius, radius]ᵈ` and compares with the declared constants.
    pub fn check_hypotheses(&self, radius: f64, samples: usize, seed: u64) -> HypothesisReport {
        let d = self.dim;
        let mut rng = Stream::new(seed, 0, AUX_STREAM);
        let point = |rng: &mut Stream| -> Vec<f64> { (0..d).map(|_| radius * (2.0 * rng.uniform() - 1.0)).collect() };
        let maps: [(&str, &CoefficientMap, usize, Bound); 4] = [
            ("drift", &self.drift, d, self.constants.drift),
            ("sigma", &self.sigma, d * d, self.constants.sigma),
            ("sigma_bar", &self.sigma_bar, d * d, self.constants.sigma_bar),
            ("obs", &self.obs, d, self.constants.obs),
        ];
        let mut observed = Vec::new();
        let mut violations = Vec::new();
        let mut lambda_obs = f64::INFINITY;
        let mut pts = Vec::with_capacity(samples);
        for _ in 0..samples {
            let x = point(&mut rng);
            let mut y = x.clone();
            for v in y.iter_mut() {
                *v += 1e-3 * (2.0 * rng.uniform() - 1.0);
            }
            let far = point(&mut rng);
            pts.push((x, y, far));
        }
        for (name, map, len, declared) in maps {
            let mut sup = 0.0_f64;
            let mut lip = 0.0_f64;
            let mut a = vec![0.0; len];
            let mut b = vec![0.0; len];
            for (x, y, far) in &pts {
                map(x, &mut a);
                sup = sup.max(crate::linalg::norm(&a));
                for other in [y, far] {
                    map(other, &mut b);
                    let diff: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
                    let dist: Vec<f64> = x.iter().zip(other.iter()).map(|(p, q)| p - q).collect();
                    lip = lip.max(crate::linalg::norm(&diff) / crate::linalg::norm(&dist).max(1e-300));
                }
            }
            let tol = 1e-9;
            if let Some(s) = declared.sup {
                if sup > s * (1.0 + tol) + tol {
                    violations.push(format!("{name}: observed sup {sup:.6} exceeds declared {s}"));
                }
            }
            if let Some(l) = declared.lipschitz {
                if lip > l * (1.0 + 1e-6) + 1e-9 {
                    violations.push(format!("{name}: observed Lipschitz ratio {lip:.6} exceeds declared {l}"));
                }
            }
            observed.push(ObservedConstant { name: name.to_string(), sup, lipschitz: lip, declared });
        }
        if self.constants.ellipticity.is_some() {
            let mut s = vec![0.0; d * d];
            for (x, _, _) in &pts {
                self.sigma_into(x, &mut s);
                let sm = Matrix::from_row_major(d, s.clone());
                let a = sm.matmul(&sm.transpose());
                for _ in 0..4 {
                    let mut xi: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
                    let n = crate::linalg::norm(&xi);
                    xi.iter_mut().for_each(|v| *v /= n);
                    lambda_obs = lambda_obs.min(crate::linalg::dot(&xi, &a.mul_vec(&xi)));
                }
            }
            let lam = self.constants.ellipticity.unwrap_or(0.0);
            if lambda_obs < lam * (1.0 - 1e-9) {
                violations.push(format!("ellipticity: observed {lambda_obs:.6} below declared {lam}"));
            }
        }
        HypothesisReport {
            model: self.name.clone(),
            claims_hypotheses: self.satisfies_hypotheses(),
            observed,
            observed_ellipticity: lambda_obs.is_finite().then_some(lambda_obs),
            violations,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ObservedConstant {
    pub name: String,
    pub sup: f64,
    pub lipschitz: f64,
    pub declared: Bound,
}

/// Result of a sampled check of the declared model constants.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub model: String,
    pub claims_hypotheses: bool,
    pub observed: Vec<ObservedConstant>,
    pub observed_ellipticity: Option<f64>,
    pub violations: Vec<String>,
}

impl HypothesisReport {
    pub fn consistent(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `Aψ = f·Dψ + ½ tr((σσᵀ + σ̄σ̄ᵀ)D²ψ)`.
#[derive(Clone, Copy)]
pub struct GeneratorA<'a> {
    model: &'a FilteringModel,
}

impl GeneratorA<'_> {
    /// `Aψ(x)` from a precomputed gradient and row-major Hessian of `ψ` at `x`.
    pub fn apply_with(&self, x: &[f64], grad: &[f64], hess: &[f64]) -> f64 {
        let c = self.model.coefficients(x);
        apply_a(&c, self.model.dim, grad, hess)
    }

    pub fn apply(&self, psi: &TestFunction, x: &[f64]) -> Result<f64, FilterError> {
        let hess = psi.hessian(x).ok_or_else(|| {
            FilterError::Calculus(crate::error::CalculusError::Unsupported {
                functional: psi.name().to_string(),
                capability: "a Hessian",
            })
        })?;
        Ok(self.apply_with(x, &psi.gradient(x), &hess))
    }
}

/// `Bₖψ = Σᵢ σ̄ᵢₖ ∂ᵢψ`, returned for all `k`.
#[derive(Clone, Copy)]
pub struct GeneratorB<'a> {
    model: &'a FilteringModel,
}

impl GeneratorB<'_> {
    pub fn apply_with(&self, x: &[f64], grad: &[f64]) -> Vec<f64> {
        let c = self.model.coefficients(x);
        let mut out = vec![0.0; self.model.dim];
        apply_b(&c.sigma_bar, self.model.dim, grad, &mut out);
        out
    }

    pub fn apply(&self, psi: &TestFunction, x: &[f64]) -> Vec<f64> {
        self.apply_with(x, &psi.gradient(x))
    }
}

pub(crate) fn apply_a(c: &Coefficients, d: usize, grad: &[f64], hess: &[f64]) -> f64 {
    let mut v = crate::linalg::dot(&c.f, grad);
    for i in 0..d {
        for j in 0..d {
            let mut a = 0.0;
            for k in 0..d {
                a += c.sigma[i * d + k] * c.sigma[j * d + k] + c.sigma_bar[i * d + k] * c.sigma_bar[j * d + k];
            }
            v += 0.5 * a * hess[i * d + j];
        }
    }
    v
}

/// `out[k] = Σᵢ m[i][k] g[i]`, that is `mᵀg`.
pub(crate) fn apply_b(m: &[f64], d: usize, g: &[f64], out: &mut [f64]) {
    for k in 0..d {
        out[k] = (0..d).map(|i| m[i * d + k] * g[i]).sum();
    }
}
