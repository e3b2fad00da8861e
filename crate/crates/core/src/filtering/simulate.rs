use super::model::{Coefficients, FilteringModel};
use crate::error::{FilterError, MeasureError};
use crate::measure::ParticleMeasure;
use crate::noise::{NoisePath, Stream, AUX_STREAM};

/// A simulated signal trajectory and the observation path it generates.
#[derive(Debug, Clone)]
pub struct SignalObservation {
    /// `X_{t_m}` for `m = 0..=M`, row-major.
    pub signal: Vec<f64>,
    /// Increments `ΔYₘ = h(X_{t_m})Δt + ΔBₘ`, attached to the same seed and replica as the input.
    pub observation: NoisePath,
}

impl SignalObservation {
    pub fn signal_at(&self, m: usize) -> &[f64] {
        let d = self.observation.dim();
        &self.signal[m * d..(m + 1) * d]
    }
}

/// Euler–Maruyama simulation of `dX = f dt + σ dW + σ̄ dB`, `dY = h(X)dt + dB`.
///
/// `X₀` is drawn from the normalisation of `x0_law`; `ΔB` are the increments of `path` and
/// `W` is the path's signal stream.
pub fn simulate_signal_observation(
    model: &FilteringModel,
    x0_law: &ParticleMeasure,
    path: &NoisePath,
) -> Result<SignalObservation, FilterError> {
    let d = model.dim();
    for found in [x0_law.dim(), path.dim()] {
        if found != d {
            return Err(FilterError::Dimension { expected: d, found });
        }
    }
    let m = x0_law.total_mass();
    if !(m > 0.0) {
        return Err(MeasureError::ZeroMass.into());
    }
    let u = Stream::new(path.seed(), path.replica(), AUX_STREAM).uniform() * m;
    let mut acc = 0.0;
    let mut idx = x0_law.len() - 1;
    for (i, &w) in x0_law.weights().iter().enumerate() {
        acc += w;
        if u < acc {
            idx = i;
            break;
        }
    }
    let dt = path.dt();
    let mut x = x0_law.location(idx).to_vec();
    let mut signal = Vec::with_capacity((path.steps() + 1) * d);
    signal.extend_from_slice(&x);
    let mut dy = Vec::with_capacity(path.steps() * d);
    let mut noise = path.signal_noise(0);
    let mut dw = vec![0.0; d];
    let mut c = Coefficients::new(d);
    for step in 0..path.steps() {
        model.coefficients_into(&x, &mut c);
        noise.next_increment(&mut dw);
        let db = path.dy(step);
        for k in 0..d {
            dy.push(c.h[k] * dt + db[k]);
        }
        for a in 0..d {
            let mut inc = c.f[a] * dt;
            for k in 0..d {
                inc += c.sigma[a * d + k] * dw[k] + c.sigma_bar[a * d + k] * db[k];
            }
            x[a] += inc;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FilterError::NonFinite { step, particle: 0 });
        }
        signal.extend_from_slice(&x);
    }
    Ok(SignalObservation { signal, observation: NoisePath::from_increments(path.seed(), path.replica(), d, dt, dy) })
}

/// `n` equally weighted one-dimensional atoms whose empirical mean and variance are exactly
/// `mean` and `var`, built from standard normal draws.
pub fn gaussian_atoms(mean: f64, var: f64, n: usize, seed: u64) -> Result<ParticleMeasure, FilterError> {
    if n < 2 || !(var > 0.0) {
        return Err(FilterError::InvalidConfig(format!("need n >= 2 and var > 0, got n = {n}, var = {var}")));
    }
    let mut s = Stream::new(seed, 0, AUX_STREAM);
    let z: Vec<f64> = (0..n).map(|_| s.normal()).collect();
    let zm = crate::stats::compensated_sum(z.iter().copied()) / n as f64;
    let zv = crate::stats::compensated_sum(z.iter().map(|v| (v - zm) * (v - zm))) / n as f64;
    let scale = (var / zv).sqrt();
    let locs = z.iter().map(|v| mean + (v - zm) * scale).collect();
    Ok(ParticleMeasure::new(1, locs, vec![1.0 / n as f64; n])?)
}
