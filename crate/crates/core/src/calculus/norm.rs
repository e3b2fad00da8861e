use super::MeasureFunctional;
use crate::error::CalculusError;
use crate::linalg::{max_abs_diff, norm};
use crate::measure::ParticleMeasure;
use crate::noise::Stream;

/// Random probes `(μ, x, y)` with `μ ∈ H_N^k` (atoms in `K_N = [−N,N]ᵈ`, mass in `[1/k, k]`)
/// and `x, y ∈ K_N`.
#[derive(Debug, Clone)]
pub struct C2lSampler {
    pub dim: usize,
    pub box_radius: f64,
    pub mass_ratio: f64,
    pub max_atoms: usize,
    stream: Stream,
}

impl C2lSampler {
    pub fn new(dim: usize, box_radius: f64, mass_ratio: f64, max_atoms: usize, seed: u64) -> Self {
        assert!(mass_ratio > 1.0 && max_atoms >= 1);
        Self { dim, box_radius, mass_ratio, max_atoms, stream: Stream::new(seed, 0, crate::noise::AUX_STREAM) }
    }

    pub fn point(&mut self) -> Vec<f64> {
        (0..self.dim).map(|_| self.box_radius * (2.0 * self.stream.uniform() - 1.0)).collect()
    }

    pub fn measure(&mut self) -> ParticleMeasure {
        let k = 1 + (self.stream.uniform() * self.max_atoms as f64) as usize;
        let k = k.min(self.max_atoms);
        let mass = (1.0 / self.mass_ratio) + self.stream.uniform() * (self.mass_ratio - 1.0 / self.mass_ratio);
        let raw: Vec<f64> = (0..k).map(|_| 0.05 + self.stream.uniform()).collect();
        let total: f64 = raw.iter().sum();
        let mut locs = Vec::with_capacity(k * self.dim);
        for _ in 0..k {
            locs.extend(self.point());
        }
        ParticleMeasure::new(self.dim, locs, raw.iter().map(|w| w * mass / total).collect())
            .expect("sampled measure is valid")
    }

    pub fn probe(&mut self) -> (ParticleMeasure, Vec<f64>, Vec<f64>) {
        (self.measure(), self.point(), self.point())
    }
}

/// Sampled lower bound of `‖u − v‖_{C²_L(H_N^k)}`: the maximum over probes of the sum of the
/// absolute differences of the value and the six derivative objects.
pub fn c2l_distance_sampled(
    u: &dyn MeasureFunctional,
    v: &dyn MeasureFunctional,
    sampler: &mut C2lSampler,
    probes: usize,
) -> Result<f64, CalculusError> {
    let mut best = 0.0_f64;
    for _ in 0..probes {
        let (mu, x, y) = sampler.probe();
        let diff = |a: Vec<f64>, b: Vec<f64>| {
            let d: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
            norm(&d)
        };
        let total = (u.value(&mu)? - v.value(&mu)?).abs()
            + (u.flat_derivative(&mu, &x)? - v.flat_derivative(&mu, &x)?).abs()
            + (u.flat_derivative2(&mu, &x, &y)? - v.flat_derivative2(&mu, &x, &y)?).abs()
            + diff(u.x_flat_derivative2(&mu, &x, &y)?, v.x_flat_derivative2(&mu, &x, &y)?)
            + diff(u.l_derivative(&mu, &x)?, v.l_derivative(&mu, &x)?)
            + max_abs_diff(u.x_l_derivative(&mu, &x)?.as_slice(), v.x_l_derivative(&mu, &x)?.as_slice())
            + max_abs_diff(u.l_derivative2(&mu, &x, &y)?.as_slice(), v.l_derivative2(&mu, &x, &y)?.as_slice());
        best = best.max(total);
    }
    Ok(best)
}
