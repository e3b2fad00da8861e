use crate::calculus::MeasureFunctional;
use crate::error::{CalculusError, MeasureError};
use crate::linalg::Matrix;
use crate::measure::ParticleMeasure;
use crate::noise::{Stream, AUX_STREAM};
use std::sync::Arc;

/// Single-draw empirical approximation `uⁿ(μ) = u(μ(ℝᵈ)/n · Σᵢ δ_{Xᵢ})`.
///
/// The draws `X₁,…,X_n` are taken from `μ/μ(ℝᵈ)` by inverse transform on a fixed sequence of
/// uniforms, so one value of `seed` fixes one realisation. The derivative methods return
/// unbiased single-draw estimates of the derivatives of `φⁿ(μ) = E[uⁿ(μ)]`; averaging over
/// seeds recovers them.
#[derive(Clone)]
pub struct EmpiricalFunctional {
    base: Arc<dyn MeasureFunctional>,
    n: usize,
    seed: u64,
}

/// The draws and the measures built from them, for a given `μ`.
struct Sample {
    dim: usize,
    mass: f64,
    points: Vec<f64>,
}

impl Sample {
    fn atom_weight(&self) -> f64 {
        self.mass / self.len() as f64
    }

    fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    /// `a · Σᵢ δ_{Xᵢ}` with the last `replace.len()` draws replaced.
    fn measure(&self, replace: &[&[f64]]) -> ParticleMeasure {
        let n = self.len();
        let keep = n - replace.len();
        let mut locs = self.points[..keep * self.dim].to_vec();
        for r in replace {
            locs.extend_from_slice(r);
        }
        ParticleMeasure::new(self.dim, locs, vec![self.atom_weight(); n]).expect("finite draws")
    }
}

impl EmpiricalFunctional {
    pub fn new(base: Arc<dyn MeasureFunctional>, n: usize, seed: u64) -> Result<Self, CalculusError> {
        if n == 0 {
            return Err(CalculusError::InvalidParameter("ensemble size must be at least 1".into()));
        }
        Ok(Self { base, n, seed })
    }

    pub fn ensemble_size(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// The draws `X₁,…,X_n` as an `n`-atom measure of unit weights.
    pub fn draws(&self, mu: &ParticleMeasure) -> Result<ParticleMeasure, CalculusError> {
        let s = self.sample(mu)?;
        Ok(ParticleMeasure::new(s.dim, s.points, vec![1.0; self.n])?)
    }

    fn sample(&self, mu: &ParticleMeasure) -> Result<Sample, CalculusError> {
        crate::calculus::check_dim(self.base.dim(), mu.dim())?;
        let mass = mu.total_mass();
        if !(mass > 0.0) {
            return Err(MeasureError::ZeroMass.into());
        }
        let mut cdf = Vec::with_capacity(mu.len());
        let mut acc = 0.0;
        for &w in mu.weights() {
            acc += w / mass;
            cdf.push(acc);
        }
        let mut stream = Stream::new(self.seed, 0, AUX_STREAM);
        let mut points = Vec::with_capacity(self.n * mu.dim());
        for _ in 0..self.n {
            let u = stream.uniform();
            let i = cdf.partition_point(|&c| c <= u).min(mu.len() - 1);
            points.extend_from_slice(mu.location(i));
        }
        Ok(Sample { dim: mu.dim(), mass, points })
    }
}

impl MeasureFunctional for EmpiricalFunctional {
    fn name(&self) -> String {
        format!("empirical(n={}, {})", self.n, self.base.name())
    }

    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn value(&self, mu: &ParticleMeasure) -> Result<f64, CalculusError> {
        let s = self.sample(mu)?;
        self.base.value(&s.measure(&[]))
    }

    fn flat_derivative(&self, mu: &ParticleMeasure, x: &[f64]) -> Result<f64, CalculusError> {
        let s = self.sample(mu)?;
        let (n, m) = (self.n as f64, s.mass);
        let nu = s.measure(&[]);
        let nu_x = s.measure(&[x]);
        let at_nu = self.base.prepare(&nu)?;
        Ok(n / m * (self.base.value(&nu_x)? - at_nu.value()) + at_nu.first(&nu)? / m)
    }

    fn flat_derivative2(&self, mu: &ParticleMeasure, x: &[f64], y: &[f64]) -> Result<f64, CalculusError> {
        let s = self.sample(mu)?;
        let (n, m) = (self.n as f64, s.mass);
        let u = &self.base;
        let nu = s.measure(&[]);
        let at_nu = u.prepare(&nu)?;
        let b = at_nu.first(&nu)? / m;
        let bz = at_nu.second(&nu, &nu)? / (m * m);
        let sv = at_nu.value();
        let one_slot = |z: &[f64]| -> Result<(f64, f64), CalculusError> {
            let nu_z = s.measure(&[z]);
            let p = u.prepare(&nu_z)?;
            Ok((p.value(), p.first(&nu_z)? / m))
        };
        let (a1x, a1zx) = one_slot(x)?;
        let (a1y, a1zy) = one_slot(y)?;
        let a2 = if self.n >= 2 { u.value(&s.measure(&[x, y]))? } else { 0.0 };
        let r = n / m;
        Ok(-r * (r * a1x + b) + n * (n - 1.0) / (m * m) * a2 + r * (a1zx + a1zy) + bz + n * (n + 1.0) / (m * m) * sv
            - r * (r * a1y + b))
    }

    fn l_derivative(&self, mu: &ParticleMeasure, x: &[f64]) -> Result<Vec<f64>, CalculusError> {
        let s = self.sample(mu)?;
        self.base.l_derivative(&s.measure(&[x]), x)
    }

    fn l_derivative2(&self, mu: &ParticleMeasure, x: &[f64], y: &[f64]) -> Result<Matrix, CalculusError> {
        let d = self.dim();
        if self.n < 2 {
            return Ok(Matrix::zeros(d));
        }
        let s = self.sample(mu)?;
        let n = self.n as f64;
        Ok(self.base.l_derivative2(&s.measure(&[x, y]), x, y)?.scale((n - 1.0) / n))
    }

    fn x_l_derivative(&self, mu: &ParticleMeasure, x: &[f64]) -> Result<Matrix, CalculusError> {
        let s = self.sample(mu)?;
        let nu_x = s.measure(&[x]);
        let a = s.atom_weight();
        let mut out = self.base.x_l_derivative(&nu_x, x)?;
        out += &self.base.l_derivative2(&nu_x, x, x)?.scale(a);
        Ok(out)
    }

    fn x_flat_derivative2(&self, mu: &ParticleMeasure, x: &[f64], y: &[f64]) -> Result<Vec<f64>, CalculusError> {
        let s = self.sample(mu)?;
        let (n, m) = (self.n as f64, s.mass);
        let u = &self.base;
        let nu_x = s.measure(&[x]);
        let dmu = u.l_derivative(&nu_x, x)?;
        let mut out: Vec<f64> = dmu.iter().map(|v| (1.0 - n) / m * v).collect();
        if self.n >= 2 {
            let dxy = u.l_derivative(&s.measure(&[x, y]), x)?;
            crate::linalg::axpy((n - 1.0) / m, &dxy, &mut out);
        }
        for (z, w) in nu_x.atoms() {
            crate::linalg::axpy(w / m, &u.x_flat_derivative2(&nu_x, x, z)?, &mut out);
        }
        Ok(out)
    }

    fn sup_bound(&self) -> Option<f64> {
        self.base.sup_bound()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::registry::builtin;
    use crate::stats::SampleSummary;

    /// Derivatives of `φⁿ(μ) = (1−1/n)⟨μ,x⟩² + (1/n)μ(ℝ)⟨μ,x²⟩`.
    struct Closed {
        n: f64,
        a: f64,
        m: f64,
        c: f64,
    }

    impl Closed {
        fn value(&self) -> f64 {
            (1.0 - 1.0 / self.n) * self.a * self.a + self.m * self.c / self.n
        }
        fn flat(&self, x: f64) -> f64 {
            2.0 * (1.0 - 1.0 / self.n) * self.a * x + (self.c + self.m * x * x) / self.n
        }
        fn flat2(&self, x: f64, y: f64) -> f64 {
            2.0 * (1.0 - 1.0 / self.n) * x * y + (x * x + y * y) / self.n
        }
        fn l(&self, x: f64) -> f64 {
            2.0 * (1.0 - 1.0 / self.n) * self.a + 2.0 * self.m * x / self.n
        }
        fn x_l(&self) -> f64 {
            2.0 * self.m / self.n
        }
        fn x_flat2(&self, x: f64, y: f64) -> f64 {
            2.0 * (1.0 - 1.0 / self.n) * y + 2.0 * x / self.n
        }
        fn l2(&self) -> f64 {
            2.0 * (1.0 - 1.0 / self.n)
        }
    }

    fn check(label: &str, samples: &[f64], exact: f64) {
        let s = SampleSummary::from_slice(samples);
        assert!(
            (s.mean - exact).abs() <= 4.0 * s.std_error + 1e-12,
            "{label}: {} vs {exact} (se {})",
            s.mean,
            s.std_error
        );
    }

    #[test]
    fn seed_average_recovers_closed_form_for_quadratic() {
        let u = builtin("quadratic_of_linear", 1).unwrap();
        let mu = ParticleMeasure::from_pairs(&[(-0.7, 0.6), (0.2, 0.9), (1.1, 0.5)]).unwrap();
        let n = 3;
        let cl = Closed {
            n: n as f64,
            a: mu.integrate_fn(|x| x[0]),
            m: mu.total_mass(),
            c: mu.integrate_fn(|x| x[0] * x[0]),
        };
        let (x, y) = (0.4, -0.9);
        let seeds = 6000;
        let mut cols: Vec<Vec<f64>> = (0..7).map(|_| Vec::with_capacity(seeds)).collect();
        let base = EmpiricalFunctional::new(u, n, 0).unwrap();
        for s in 0..seeds as u64 {
            let f = base.with_seed(s);
            cols[0].push(f.value(&mu).unwrap());
            cols[1].push(f.flat_derivative(&mu, &[x]).unwrap());
            cols[2].push(f.flat_derivative2(&mu, &[x], &[y]).unwrap());
            cols[3].push(f.l_derivative(&mu, &[x]).unwrap()[0]);
            cols[4].push(f.x_l_derivative(&mu, &[x]).unwrap()[(0, 0)]);
            cols[5].push(f.x_flat_derivative2(&mu, &[x], &[y]).unwrap()[0]);
            cols[6].push(f.l_derivative2(&mu, &[x], &[y]).unwrap()[(0, 0)]);
        }
        check("value", &cols[0], cl.value());
        check("flat", &cols[1], cl.flat(x));
        check("flat2", &cols[2], cl.flat2(x, y));
        check("l", &cols[3], cl.l(x));
        check("x_l", &cols[4], cl.x_l());
        check("x_flat2", &cols[5], cl.x_flat2(x, y));
        check("l2", &cols[6], cl.l2());
    }

    #[test]
    fn draws_follow_the_normalized_measure() {
        let u = builtin("linear", 1).unwrap();
        let mu = ParticleMeasure::from_pairs(&[(0.0, 1.0), (1.0, 3.0)]).unwrap();
        let f = EmpiricalFunctional::new(u, 4000, 9).unwrap();
        let frac = f.draws(&mu).unwrap().integrate_fn(|x| x[0]) / 4000.0;
        assert!((frac - 0.75).abs() < 0.03);
    }

    #[test]
    fn rejects_empty_ensemble() {
        assert!(EmpiricalFunctional::new(builtin("linear", 1).unwrap(), 0, 0).is_err());
    }
}
