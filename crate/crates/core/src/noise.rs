//! Counter-based random streams.
//!
//! Every random quantity is addressed by `(root seed, replica, stream, step)`. The key of a
//! ChaCha8 generator is derived from `(root seed, replica)`, the ChaCha stream id selects the
//! consumer (observation path, particle `p`, signal), and the word position encodes the step.
//! Each Gaussian draw consumes exactly two 64-bit words, so any step can be reached by seeking
//! and results do not depend on the order in which replicas or particles are processed.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Serialize;

/// Stream id of the common observation (or observation-noise) Brownian motion.
pub const OBSERVATION_STREAM: u64 = 0;
/// Stream id of the signal Brownian motion in signal/observation simulation.
pub const SIGNAL_STREAM: u64 = u64::MAX - 1;
/// Stream id reserved for auxiliary draws (initial conditions, sampling).
pub const AUX_STREAM: u64 = u64::MAX - 2;
/// Stream id used by optional resampling.
pub const RESAMPLE_STREAM: u64 = u64::MAX - 3;

const WORDS_PER_NORMAL: u128 = 4;

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn key(seed: u64, replica: u64) -> [u8; 32] {
    let mut s = seed ^ replica.wrapping_mul(0xD1B5_4A32_D192_ED03);
    let mut k = [0u8; 32];
    for chunk in k.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix(&mut s).to_le_bytes());
    }
    k
}

/// A positioned random stream producing uniforms and standard normals.
#[derive(Clone, Debug)]
pub struct Stream {
    rng: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64, replica: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::from_seed(key(seed, replica));
        rng.set_stream(stream);
        Self { rng }
    }

    /// Positions the stream at the `index`-th Gaussian draw.
    pub fn seek_normal(&mut self, index: u64) {
        self.rng.set_word_pos(index as u128 * WORDS_PER_NORMAL);
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by Box–Muller, consuming exactly two 64-bit words.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Brownian increments on a uniform grid, shared by every particle of a simulation.
///
/// The path is generated at a base resolution `base_dt`. A coarsened view with factor `k`
/// exposes steps of length `k·base_dt` whose increments are sums of `k` consecutive base
/// increments; particle noise is coarsened in the same way, so runs at `Δt` and `Δt/k`
/// are driven by the same Brownian paths.
#[derive(Debug, Clone, Serialize)]
pub struct NoisePath {
    seed: u64,
    replica: u64,
    dim: usize,
    base_dt: f64,
    stride: usize,
    steps: usize,
    #[serde(skip)]
    dy: Vec<f64>,
}

impl NoisePath {
    /// Generates `steps` increments of length `dt` for the common Brownian motion.
    pub fn generate(seed: u64, replica: u64, dim: usize, dt: f64, steps: usize) -> Self {
        assert!(dt > 0.0 && dim > 0);
        let mut s = Stream::new(seed, replica, OBSERVATION_STREAM);
        let sq = dt.sqrt();
        let dy = (0..steps * dim).map(|_| sq * s.normal()).collect();
        Self { seed, replica, dim, base_dt: dt, stride: 1, steps, dy }
    }

    /// A path with prescribed increments and no particle stream coupling beyond the seed.
    pub fn from_increments(seed: u64, replica: u64, dim: usize, dt: f64, dy: Vec<f64>) -> Self {
        assert_eq!(dy.len() % dim, 0);
        let steps = dy.len() / dim;
        Self { seed, replica, dim, base_dt: dt, stride: 1, steps, dy }
    }

    /// Coarsened view with steps `factor` times longer.
    pub fn coarsen(&self, factor: usize) -> Self {
        assert!(factor >= 1);
        let d = self.dim;
        let steps = self.steps / factor;
        let mut dy = vec![0.0; steps * d];
        for m in 0..steps {
            for j in 0..factor {
                for k in 0..d {
                    dy[m * d + k] += self.dy[(m * factor + j) * d + k];
                }
            }
        }
        Self { stride: self.stride * factor, steps, dy, ..self.clone() }
    }

    /// The same increments attached to a different `(seed, replica)` for particle noise.
    pub fn reseeded(&self, seed: u64, replica: u64) -> Self {
        Self { seed, replica, ..self.clone() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replica(&self) -> u64 {
        self.replica
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.base_dt * self.stride as f64
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.dt() * self.steps as f64
    }

    pub fn time(&self, m: usize) -> f64 {
        self.dt() * m as f64
    }

    /// Step index of time `t`, which must lie on the grid.
    pub fn step_of(&self, t: f64) -> Option<usize> {
        let x = t / self.dt();
        let m = x.round();
        ((x - m).abs() < 1e-6 && m >= 0.0 && m as usize <= self.steps).then_some(m as usize)
    }

    /// Increment `ΔY_m`.
    pub fn dy(&self, m: usize) -> &[f64] {
        &self.dy[m * self.dim..(m + 1) * self.dim]
    }

    /// `Y_{t_m}` (with `Y_0 = 0`).
    pub fn y_at(&self, m: usize) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        for i in 0..m {
            crate::linalg::axpy(1.0, self.dy(i), &mut y);
        }
        y
    }

    /// Per-particle noise positioned at step `start`.
    pub fn particle_noise(&self, key: u64, start: usize) -> ParticleNoise {
        self.keyed_noise(key.wrapping_add(1), start)
    }

    /// Signal noise for signal/observation simulation.
    pub fn signal_noise(&self, start: usize) -> ParticleNoise {
        self.keyed_noise(SIGNAL_STREAM, start)
    }

    fn keyed_noise(&self, stream: u64, start: usize) -> ParticleNoise {
        let mut s = Stream::new(self.seed, self.replica, stream);
        s.seek_normal((start * self.stride * self.dim) as u64);
        ParticleNoise { stream: s, stride: self.stride, sqrt_dt: self.base_dt.sqrt() }
    }
}

/// Brownian increments of one particle, produced sequentially.
#[derive(Debug, Clone)]
pub struct ParticleNoise {
    stream: Stream,
    stride: usize,
    sqrt_dt: f64,
}

impl ParticleNoise {
    /// Writes the next increment `ΔW` (one coarse step) into `out`.
    #[inline]
    pub fn next_increment(&mut self, out: &mut [f64]) {
        out.fill(0.0);
        for _ in 0..self.stride {
            for v in out.iter_mut() {
                *v += self.sqrt_dt * self.stream.normal();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::SampleSummary;

    #[test]
    fn streams_are_reproducible_and_seekable() {
        let mut a = Stream::new(7, 3, 11);
        let draws: Vec<f64> = (0..10).map(|_| a.normal()).collect();
        let mut b = Stream::new(7, 3, 11);
        b.seek_normal(6);
        assert_eq!(b.normal(), draws[6]);
        let mut c = Stream::new(7, 4, 11);
        assert_ne!(c.normal(), draws[0]);
    }

    #[test]
    fn normals_have_unit_variance() {
        let mut s = Stream::new(1, 0, 5);
        let xs: Vec<f64> = (0..200_000).map(|_| s.normal()).collect();
        let sum = SampleSummary::from_slice(&xs);
        assert!(sum.mean.abs() < 4.0 * sum.std_error);
        assert!((sum.std_dev - 1.0).abs() < 0.01);
    }

    #[test]
    fn coarse_increments_are_sums_of_fine_ones() {
        let fine = NoisePath::generate(9, 2, 2, 1e-3, 10);
        let coarse = fine.coarsen(2);
        assert_eq!(coarse.steps(), 5);
        assert!((coarse.dt() - 2e-3).abs() < 1e-18);
        for m in 0..5 {
            for k in 0..2 {
                let s = fine.dy(2 * m)[k] + fine.dy(2 * m + 1)[k];
                assert_eq!(coarse.dy(m)[k], s);
            }
        }
        let mut nf = fine.particle_noise(4, 0);
        let mut nc = coarse.particle_noise(4, 0);
        let mut a = [0.0; 2];
        let mut b = [0.0; 2];
        let mut c = [0.0; 2];
        for _ in 0..3 {
            nf.next_increment(&mut a);
            nf.next_increment(&mut b);
            nc.next_increment(&mut c);
            for k in 0..2 {
                assert!((a[k] + b[k] - c[k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn particle_noise_can_start_mid_path() {
        let path = NoisePath::generate(9, 2, 1, 1e-2, 20).coarsen(2);
        let mut full = path.particle_noise(0, 0);
        let mut buf = [0.0];
        let mut seq = Vec::new();
        for _ in 0..10 {
            full.next_increment(&mut buf);
            seq.push(buf[0]);
        }
        let mut mid = path.particle_noise(0, 6);
        mid.next_increment(&mut buf);
        assert_eq!(buf[0], seq[6]);
    }
}
