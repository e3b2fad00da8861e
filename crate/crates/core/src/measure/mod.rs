//! Finite positive measures represented by weighted atoms.
//!
//! A [`ParticleMeasure`] stores `K` atoms in `ℝᵈ` with nonnegative weights. Atoms are never
//! merged: coincident atoms are legal and their weights simply add under integration.

mod presets;
mod test_function;
mod wasserstein;

pub use presets::{preset, PRESET_NAMES};
pub use test_function::{TestFunction, TestFunctionBounds};
pub use wasserstein::{wasserstein_p, MAX_LP_ATOMS};

use crate::error::MeasureError;
use crate::stats::CompensatedSum;
use serde::Serialize;
use std::io::{Read, Write};
use std::path::Path;

/// Tolerance on the total mass of a measure that is expected to be a probability.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticleMeasure {
    dim: usize,
    locations: Vec<f64>,
    weights: Vec<f64>,
}

impl ParticleMeasure {
    /// Builds a measure from flat row-major locations (`K·d` values) and `K` weights.
    pub fn new(dim: usize, locations: Vec<f64>, weights: Vec<f64>) -> Result<Self, MeasureError> {
        if dim == 0 {
            return Err(MeasureError::DimensionMismatch { expected: 1, found: 0 });
        }
        if locations.len() != dim * weights.len() {
            return Err(MeasureError::DimensionMismatch { expected: dim * weights.len(), found: locations.len() });
        }
        for (index, &weight) in weights.iter().enumerate() {
            if !(weight >= 0.0) || !weight.is_finite() {
                return Err(MeasureError::InvalidWeight { index, weight });
            }
        }
        for (index, x) in locations.chunks(dim).enumerate() {
            if x.iter().any(|v| !v.is_finite()) {
                return Err(MeasureError::NonFiniteLocation { index });
            }
        }
        Ok(Self { dim, locations, weights })
    }

    /// Builds a measure from `(location, weight)` pairs.
    pub fn from_atoms<I, V>(dim: usize, atoms: I) -> Result<Self, MeasureError>
    where
        I: IntoIterator<Item = (V, f64)>,
        V: AsRef<[f64]>,
    {
        let mut locations = Vec::new();
        let mut weights = Vec::new();
        for (x, w) in atoms {
            let x = x.as_ref();
            if x.len() != dim {
                return Err(MeasureError::DimensionMismatch { expected: dim, found: x.len() });
            }
            locations.extend_from_slice(x);
            weights.push(w);
        }
        Self::new(dim, locations, weights)
    }

    /// One-dimensional convenience constructor from `(x, w)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self, MeasureError> {
        Self::new(1, pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect())
    }

    pub fn dirac(x: &[f64], weight: f64) -> Result<Self, MeasureError> {
        Self::new(x.len(), x.to_vec(), vec![weight])
    }

    /// The zero measure, the only measure allowed to have no atoms.
    pub fn zero(dim: usize) -> Self {
        Self { dim, locations: Vec::new(), weights: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn location(&self, i: usize) -> &[f64] {
        &self.locations[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.locations.chunks(self.dim).zip(self.weights.iter().copied())
    }

    fn check_dim(&self, found: usize) -> Result<(), MeasureError> {
        if found != self.dim {
            return Err(MeasureError::DimensionMismatch { expected: self.dim, found });
        }
        Ok(())
    }

    /// `⟨μ, ψ⟩ = Σᵢ wᵢ ψ(xᵢ)`.
    pub fn integrate(&self, psi: &TestFunction) -> Result<f64, MeasureError> {
        self.check_dim(psi.dim())?;
        Ok(self.integrate_fn(|x| psi.value(x)))
    }

    /// `Σᵢ wᵢ f(xᵢ)` for an arbitrary closure.
    pub fn integrate_fn<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        let mut acc = CompensatedSum::new();
        for (x, w) in self.atoms() {
            acc.add(w * f(x));
        }
        acc.value()
    }

    /// Componentwise integral of a vector-valued closure writing into `out`.
    pub fn integrate_vec<F: FnMut(&[f64], &mut [f64])>(&self, len: usize, mut f: F) -> Vec<f64> {
        let mut acc = vec![CompensatedSum::new(); len];
        let mut buf = vec![0.0; len];
        for (x, w) in self.atoms() {
            f(x, &mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                a.add(w * b);
            }
        }
        acc.iter().map(|a| a.value()).collect()
    }

    /// `Σᵢ Σⱼ wᵢ wⱼ k(xᵢ, xⱼ)`, diagonal included.
    pub fn product_integrate<K: FnMut(&[f64], &[f64]) -> f64>(&self, mut kernel: K) -> f64 {
        let mut acc = CompensatedSum::new();
        for (x, wx) in self.atoms() {
            for (y, wy) in self.atoms() {
                acc.add(wx * wy * kernel(x, y));
            }
        }
        acc.value()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().copied().collect::<CompensatedSum>().value()
    }

    /// `Σᵢ wᵢ |xᵢ|²`.
    pub fn second_moment(&self) -> f64 {
        self.integrate_fn(|x| x.iter().map(|v| v * v).sum())
    }

    /// Rescales to total mass one, keeping atom locations.
    pub fn normalize(&self) -> Result<Self, MeasureError> {
        let m = self.total_mass();
        if !(m > 0.0) {
            return Err(MeasureError::ZeroMass);
        }
        let mut out = self.scaled(1.0 / m);
        let residual = 1.0 - out.total_mass();
        if residual != 0.0 {
            if let Some(imax) = (0..out.len()).max_by(|&a, &b| out.weights[a].total_cmp(&out.weights[b])) {
                out.weights[imax] = (out.weights[imax] + residual).max(0.0);
            }
        }
        Ok(out)
    }

    pub fn is_probability(&self) -> bool {
        (self.total_mass() - 1.0).abs() <= PROBABILITY_TOLERANCE
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { dim: self.dim, locations: self.locations.clone(), weights: self.weights.iter().map(|w| w * c).collect() }
    }

    /// `t·μ + (1−t)·ν` as the union of both atom lists.
    pub fn convex_combine(&self, nu: &ParticleMeasure, t: f64) -> Result<Self, MeasureError> {
        if !(0.0..=1.0).contains(&t) {
            return Err(MeasureError::InvalidWeight { index: usize::MAX, weight: t });
        }
        self.check_dim(nu.dim)?;
        if t == 0.0 {
            return Ok(nu.clone());
        }
        if t == 1.0 {
            return Ok(self.clone());
        }
        let mut out = self.scaled(t);
        out.locations.extend_from_slice(&nu.locations);
        out.weights.extend(nu.weights.iter().map(|w| w * (1.0 - t)));
        Ok(out)
    }

    /// Atom-list concatenation, i.e. the sum of two measures.
    pub fn concat(&self, other: &ParticleMeasure) -> Result<Self, MeasureError> {
        self.check_dim(other.dim)?;
        let mut out = self.clone();
        out.locations.extend_from_slice(&other.locations);
        out.weights.extend_from_slice(&other.weights);
        Ok(out)
    }

    /// Adds an atom in place.
    pub fn push(&mut self, x: &[f64], w: f64) -> Result<(), MeasureError> {
        self.check_dim(x.len())?;
        if !(w >= 0.0) || !w.is_finite() {
            return Err(MeasureError::InvalidWeight { index: self.len(), weight: w });
        }
        self.locations.extend_from_slice(x);
        self.weights.push(w);
        Ok(())
    }

    /// Multiplies each weight by `rho(xᵢ)`.
    pub fn reweighted<F: Fn(&[f64]) -> f64>(&self, rho: F) -> Result<Self, MeasureError> {
        let weights = self.atoms().map(|(x, w)| w * rho(x)).collect();
        Self::new(self.dim, self.locations.clone(), weights)
    }

    /// Push-forward through `f`, moving every atom and keeping weights.
    pub fn push_forward<F: Fn(&[f64], &mut [f64])>(&self, f: F) -> Result<Self, MeasureError> {
        let mut locations = vec![0.0; self.locations.len()];
        for (src, dst) in self.locations.chunks(self.dim).zip(locations.chunks_mut(self.dim)) {
            f(src, dst);
        }
        Self::new(self.dim, locations, self.weights.clone())
    }

    /// Writes rows `atom_index,weight,x_1,…,x_d` with a header line.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), MeasureError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["atom_index".to_string(), "weight".to_string()];
        header.extend((1..=self.dim).map(|k| format!("x_{k}")));
        w.write_record(&header).map_err(|e| MeasureError::Csv(e.to_string()))?;
        for (i, (x, wt)) in self.atoms().enumerate() {
            let mut rec = vec![i.to_string(), format_float(wt)];
            rec.extend(x.iter().map(|v| format_float(*v)));
            w.write_record(&rec).map_err(|e| MeasureError::Csv(e.to_string()))?;
        }
        w.flush().map_err(|e| MeasureError::Io(e.to_string()))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, MeasureError> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers().map_err(|e| MeasureError::Csv(e.to_string()))?.clone();
        if headers.len() < 3 || &headers[0] != "atom_index" || &headers[1] != "weight" {
            return Err(MeasureError::Csv("expected header atom_index,weight,x_1,...,x_d".to_string()));
        }
        let dim = headers.len() - 2;
        let mut locations = Vec::new();
        let mut weights = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| MeasureError::Csv(e.to_string()))?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| MeasureError::Csv(format!("{s}: {e}")));
            weights.push(parse(&rec[1])?);
            for k in 0..dim {
                locations.push(parse(&rec[2 + k])?);
            }
        }
        Self::new(dim, locations, weights)
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), MeasureError> {
        let f = std::fs::File::create(path).map_err(|e| MeasureError::Io(e.to_string()))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load_csv(path: &Path) -> Result<Self, MeasureError> {
        let f = std::fs::File::open(path).map_err(|e| MeasureError::Io(e.to_string()))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

/// Shortest representation that round-trips through `f64::from_str`.
fn format_float(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x_fn() -> TestFunction {
        TestFunction::coordinate(1, 0)
    }

    #[test]
    fn integrate_examples() {
        let mu = ParticleMeasure::from_pairs(&[(0.0, 0.5), (1.0, 0.5)]).unwrap();
        assert_eq!(mu.integrate(&TestFunction::constant(1, 1.0)).unwrap(), 1.0);
        let mu = ParticleMeasure::from_pairs(&[(2.0, 1.0)]).unwrap();
        assert_eq!(mu.integrate(&TestFunction::squared_norm(1)).unwrap(), 4.0);
        let mu = ParticleMeasure::from_pairs(&[(1.0, 1.0), (2.0, 1.0)]).unwrap();
        assert_eq!(mu.integrate(&x_fn()).unwrap(), 3.0);
    }

    #[test]
    fn integrate_rejects_dimension_mismatch() {
        let mu = ParticleMeasure::from_pairs(&[(1.0, 1.0)]).unwrap();
        assert!(matches!(mu.integrate(&TestFunction::squared_norm(2)), Err(MeasureError::DimensionMismatch { .. })));
    }

    #[test]
    fn product_integrate_examples() {
        let mu = ParticleMeasure::from_pairs(&[(1.0, 1.0), (2.0, 1.0)]).unwrap();
        assert_eq!(mu.product_integrate(|x, y| x[0] * y[0]), 9.0);
        assert_eq!(mu.product_integrate(|_, _| 1.0), 4.0);
        let mu = ParticleMeasure::from_pairs(&[(1.0, 0.5)]).unwrap();
        assert_eq!(mu.product_integrate(|x, y| x[0] + y[0]), 0.5);
    }

    #[test]
    fn mass_normalize_moment() {
        let mu = ParticleMeasure::from_pairs(&[(0.0, 2.0), (1.0, 2.0)]).unwrap();
        assert_eq!(mu.total_mass(), 4.0);
        let p = mu.normalize().unwrap();
        assert_eq!(p.weights(), &[0.5, 0.5]);
        assert_eq!(p.locations(), mu.locations());
        let mu = ParticleMeasure::from_pairs(&[(3.0, 2.0)]).unwrap();
        assert_eq!(mu.second_moment(), 18.0);
        assert_eq!(ParticleMeasure::zero(1).normalize(), Err(MeasureError::ZeroMass));
    }

    #[test]
    fn convex_combine_examples() {
        let mu = ParticleMeasure::from_pairs(&[(0.0, 1.0)]).unwrap();
        let nu = ParticleMeasure::from_pairs(&[(1.0, 1.0)]).unwrap();
        assert_eq!(mu.convex_combine(&nu, 0.0).unwrap(), nu);
        assert_eq!(mu.convex_combine(&nu, 1.0).unwrap(), mu);
        let half = mu.convex_combine(&nu, 0.5).unwrap();
        assert_eq!(half.integrate_fn(|x| if x[0] == 1.0 { 1.0 } else { 0.0 }), 0.5);
        assert_eq!(half.integrate_fn(|x| if x[0] == 0.0 { 1.0 } else { 0.0 }), 0.5);
        assert!(mu.convex_combine(&nu, 1.5).is_err());
    }

    #[test]
    fn invalid_weights_are_rejected() {
        assert!(ParticleMeasure::from_pairs(&[(0.0, -1.0)]).is_err());
        assert!(ParticleMeasure::from_pairs(&[(f64::NAN, 1.0)]).is_err());
        assert!(ParticleMeasure::new(2, vec![0.0; 3], vec![1.0]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mu = ParticleMeasure::new(2, vec![0.1, -2.5, 3.0, 1e-300], vec![0.25, 1.0 / 3.0]).unwrap();
        let mut buf = Vec::new();
        mu.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("atom_index,weight,x_1,x_2\n"));
        assert_eq!(ParticleMeasure::read_csv(buf.as_slice()).unwrap(), mu);
    }
}
