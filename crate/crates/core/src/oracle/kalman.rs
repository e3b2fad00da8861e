use crate::filtering::LinearGaussian;
use crate::noise::NoisePath;
use serde::Serialize;

/// Mean and variance of the Kalman–Bucy filter at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiccatiState {
    pub t: f64,
    pub mean: f64,
    pub var: f64,
}

/// How the filter mean is driven.
#[derive(Debug, Clone, Copy)]
pub enum KalmanMode<'a> {
    /// Observation increments `ΔY` of a realized path.
    Observed(&'a NoisePath),
    /// The expectation of the filter mean over observations, `m₀e^{at}`, on `steps` steps up
    /// to `horizon`.
    Expected { horizon: f64, steps: usize },
}

/// Positive root of `2aP + b² − c²P² = 0`, or `None` when `c = 0` and `a ≥ 0`.
pub fn riccati_stationary(lg: LinearGaussian) -> Option<f64> {
    let LinearGaussian { a, b, c } = lg;
    if c == 0.0 {
        return (a < 0.0).then(|| b * b / (-2.0 * a));
    }
    Some((a + (a * a + b * b * c * c).sqrt()) / (c * c))
}

fn riccati_rhs(lg: LinearGaussian, p: f64) -> f64 {
    2.0 * lg.a * p + lg.b * lg.b - lg.c * lg.c * p * p
}

fn rk4(lg: LinearGaussian, p: f64, dt: f64) -> f64 {
    let k1 = riccati_rhs(lg, p);
    let k2 = riccati_rhs(lg, p + 0.5 * dt * k1);
    let k3 = riccati_rhs(lg, p + 0.5 * dt * k2);
    let k4 = riccati_rhs(lg, p + dt * k3);
    p + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Kalman–Bucy filter for `dX = aX dt + b dW`, `dY = cX dt + dB` started from `N(m₀, P₀)`.
///
/// The variance follows the Riccati equation by RK4; the mean uses, on each observation step,
/// the exact solution of `dm = (a − c²P)m dt + Pc dY` with `P` frozen at the midpoint.
pub fn kalman_bucy(lg: LinearGaussian, m0: f64, p0: f64, mode: KalmanMode<'_>) -> Vec<RiccatiState> {
    let (dt, steps) = match mode {
        KalmanMode::Observed(p) => (p.dt(), p.steps()),
        KalmanMode::Expected { horizon, steps } => (horizon / steps as f64, steps),
    };
    let sub = 4;
    let mut out = Vec::with_capacity(steps + 1);
    let (mut m, mut p) = (m0, p0);
    out.push(RiccatiState { t: 0.0, mean: m, var: p });
    for n in 0..steps {
        let mut p_next = p;
        for _ in 0..sub {
            p_next = rk4(lg, p_next, dt / sub as f64);
        }
        let p_mid = rk4(lg, rk4(lg, p, 0.25 * dt), 0.25 * dt);
        m = match mode {
            KalmanMode::Observed(path) => {
                let k = lg.a - lg.c * lg.c * p_mid;
                let e = (k * dt).exp();
                let gain = if k.abs() < 1e-12 { dt } else { (e - 1.0) / k };
                e * m + p_mid * lg.c * path.dy(n)[0] * gain / dt
            }
            KalmanMode::Expected { .. } => m * (lg.a * dt).exp(),
        };
        p = p_next;
        out.push(RiccatiState { t: (n + 1) as f64 * dt, mean: m, var: p });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_observation_matches_closed_form() {
        let lg = LinearGaussian { a: 0.0, b: 0.0, c: 1.0 };
        let traj = kalman_bucy(lg, 0.0, 2.0, KalmanMode::Expected { horizon: 3.0, steps: 300 });
        for s in &traj {
            assert!((s.var - 2.0 / (1.0 + 2.0 * s.t)).abs() < 1e-8);
        }
    }

    #[test]
    fn unobserved_variance_follows_linear_ode() {
        let lg = LinearGaussian { a: -1.0, b: 1.0, c: 0.0 };
        let traj = kalman_bucy(lg, 1.0, 0.2, KalmanMode::Expected { horizon: 2.0, steps: 100 });
        let last = traj.last().unwrap();
        let exact = 0.5 + (0.2 - 0.5) * (-4.0f64).exp();
        assert!((last.var - exact).abs() < 1e-9);
        assert!((last.mean - (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn variance_converges_to_stationary_root() {
        let lg = LinearGaussian { a: -1.0, b: 1.0, c: 1.0 };
        let p_inf = riccati_stationary(lg).unwrap();
        assert!(riccati_rhs(lg, p_inf).abs() < 1e-14);
        let traj = kalman_bucy(lg, 0.0, 3.0, KalmanMode::Expected { horizon: 20.0, steps: 2000 });
        assert!((traj.last().unwrap().var - p_inf).abs() < 1e-10);
    }

    #[test]
    fn observed_mean_is_linear_in_observations() {
        let lg = LinearGaussian { a: -0.5, b: 1.0, c: 1.0 };
        let p = NoisePath::generate(3, 0, 1, 1e-2, 100);
        let scaled = NoisePath::from_increments(3, 0, 1, 1e-2, (0..100).map(|m| 2.0 * p.dy(m)[0]).collect());
        let a = kalman_bucy(lg, 0.0, 1.0, KalmanMode::Observed(&p));
        let b = kalman_bucy(lg, 0.0, 1.0, KalmanMode::Observed(&scaled));
        assert!((2.0 * a[100].mean - b[100].mean).abs() < 1e-12);
    }
}
