use super::{Grid1D, GridSpec, CFL_LIMIT};
use crate::error::OracleError;
use crate::filtering::FilteringModel;
use crate::measure::ParticleMeasure;
use crate::noise::NoisePath;

/// A tridiagonal operator on the interior nodes with a Crank–Nicolson step of size `dt`.
struct CrankNicolson {
    lo: Vec<f64>,
    di: Vec<f64>,
    up: Vec<f64>,
    half_dt: f64,
    c_prime: Vec<f64>,
    inv_denom: Vec<f64>,
    rhs: Vec<f64>,
}

impl CrankNicolson {
    fn new(lo: Vec<f64>, di: Vec<f64>, up: Vec<f64>, dt: f64) -> Self {
        let n = di.len();
        let h = 0.5 * dt;
        let mut c_prime = vec![0.0; n];
        let mut inv_denom = vec![0.0; n];
        for i in 0..n {
            let a = if i > 0 { -h * lo[i] } else { 0.0 };
            let b = 1.0 - h * di[i];
            let c = -h * up[i];
            let denom = b - if i > 0 { a * c_prime[i - 1] } else { 0.0 };
            inv_denom[i] = 1.0 / denom;
            c_prime[i] = c / denom;
        }
        Self { lo, di, up, half_dt: h, c_prime, inv_denom, rhs: vec![0.0; n] }
    }

    /// Advances the interior values `v` in place.
    fn step(&mut self, v: &mut [f64]) {
        let n = v.len();
        let h = self.half_dt;
        for i in 0..n {
            let mut lv = self.di[i] * v[i];
            if i > 0 {
                lv += self.lo[i] * v[i - 1];
            }
            if i + 1 < n {
                lv += self.up[i] * v[i + 1];
            }
            self.rhs[i] = v[i] + h * lv;
        }
        for i in 0..n {
            let a = if i > 0 { -h * self.lo[i] } else { 0.0 };
            let prev = if i > 0 { self.rhs[i - 1] } else { 0.0 };
            self.rhs[i] = (self.rhs[i] - a * prev) * self.inv_denom[i];
        }
        for i in (0..n).rev() {
            let next = if i + 1 < n { v[i + 1] } else { 0.0 };
            v[i] = self.rhs[i] - self.c_prime[i] * next;
        }
    }
}

fn check_dim(model: &FilteringModel) -> Result<(), OracleError> {
    if model.dim() != 1 {
        return Err(OracleError::Dimension(model.dim()));
    }
    Ok(())
}

/// Drift and diffusion variance at every node.
fn nodal_coefficients(model: &FilteringModel, nodes: &[f64], correlated: Correlated) -> (Vec<f64>, Vec<f64>) {
    let mut b = Vec::with_capacity(nodes.len());
    let mut a = Vec::with_capacity(nodes.len());
    for &x in nodes {
        let c = model.coefficients(&[x]);
        match correlated {
            Correlated::Diffusion => {
                b.push(c.f[0]);
                a.push(c.sigma[0] * c.sigma[0] + c.sigma_bar[0] * c.sigma_bar[0]);
            }
            Correlated::Transport => {
                b.push(c.f[0] - c.sigma_bar[0] * c.h[0]);
                a.push(c.sigma[0] * c.sigma[0]);
            }
        }
    }
    (b, a)
}

#[derive(Clone, Copy)]
enum Correlated {
    /// `σ̄σ̄ᵀ` enters the diffusion.
    Diffusion,
    /// `σ̄` acts through a separate transport step along `dY`.
    Transport,
}

fn substeps(a_max: f64, dt: f64, dx: f64, requested: Option<usize>) -> Result<usize, OracleError> {
    let auto = ((a_max * dt / (CFL_LIMIT * dx * dx)).ceil() as usize).max(1);
    let k = requested.unwrap_or(auto);
    let ratio = a_max * dt / k as f64 / (dx * dx);
    if k == 0 || ratio > CFL_LIMIT {
        return Err(OracleError::Cfl { ratio, limit: CFL_LIMIT });
    }
    Ok(k)
}

/// Forward (Fokker–Planck) operator `A*` with homogeneous Dirichlet boundaries.
fn forward_operator(b: &[f64], a: &[f64], dx: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = b.len() - 2;
    let (mut lo, mut di, mut up) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let j = i + 1;
        lo[i] = b[j - 1] / (2.0 * dx) + a[j - 1] / (2.0 * dx * dx);
        di[i] = -a[j] / (dx * dx);
        up[i] = -b[j + 1] / (2.0 * dx) + a[j + 1] / (2.0 * dx * dx);
    }
    (lo, di, up)
}

/// Backward operator `A` with linear extrapolation at the boundary nodes.
fn backward_operator(b: &[f64], a: &[f64], dx: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = b.len() - 2;
    let (mut lo, mut di, mut up) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let j = i + 1;
        lo[i] = -b[j] / (2.0 * dx) + a[j] / (2.0 * dx * dx);
        di[i] = -a[j] / (dx * dx);
        up[i] = b[j] / (2.0 * dx) + a[j] / (2.0 * dx * dx);
    }
    di[0] += 2.0 * lo[0];
    up[0] -= lo[0];
    di[n - 1] += 2.0 * up[n - 1];
    lo[n - 1] -= up[n - 1];
    (lo, di, up)
}

/// Initial condition of the Zakai grid solver.
#[derive(Debug, Clone)]
pub enum GridInit {
    Density(Grid1D),
    /// Atoms mollified by a Gaussian of the given bandwidth (`3Δx` when `None`).
    Atoms {
        mu: ParticleMeasure,
        bandwidth: Option<f64>,
    },
}

/// Density trajectory of the Zakai equation on a grid.
#[derive(Debug, Clone)]
pub struct ZakaiGridSolution {
    pub terminal: Grid1D,
    pub snapshots: Vec<(f64, Grid1D)>,
    /// `⟨ρ_t, 1⟩` at every observation step, starting at `t = 0`.
    pub masses: Vec<f64>,
    pub substeps: usize,
}

impl ZakaiGridSolution {
    pub fn integrate<F: Fn(f64) -> f64>(&self, psi: F) -> f64 {
        self.terminal.integrate(psi)
    }
}

/// Solves the Zakai equation for the density of `ρ_t` on the observation path `path`.
///
/// Each observation step multiplies by the likelihood `exp(h ΔY − ½h²Δt)`, transports the
/// density along `x ↦ x + σ̄(x)ΔY`, and then runs Crank–Nicolson substeps of the
/// Fokker–Planck equation with drift `f − σ̄h` and diffusion `σ²`.
pub fn zakai_grid_solve(
    model: &FilteringModel,
    init: &GridInit,
    path: &NoisePath,
    spec: GridSpec,
    substeps_per_step: Option<usize>,
    snapshot_stride: Option<usize>,
) -> Result<ZakaiGridSolution, OracleError> {
    check_dim(model)?;
    if path.dim() != 1 {
        return Err(OracleError::Dimension(path.dim()));
    }
    let mut p = match init {
        GridInit::Density(g) => {
            if g.spec != spec {
                return Err(OracleError::InvalidGrid("initial density is on a different grid".into()));
            }
            g.clone()
        }
        GridInit::Atoms { mu, bandwidth } => Grid1D::from_atoms(spec, mu, bandwidth.unwrap_or(3.0 * spec.dx))?,
    };
    let nodes: Vec<f64> = p.nodes().collect();
    let n = nodes.len();
    let dx = spec.dx;
    let dt = path.dt();
    let (b, a) = nodal_coefficients(model, &nodes, Correlated::Transport);
    let a_max = a.iter().cloned().fold(0.0, f64::max);
    let k = substeps(a_max, dt, dx, substeps_per_step)?;
    let (lo, di, up) = forward_operator(&b, &a, dx);
    let mut cn = CrankNicolson::new(lo, di, up, dt / k as f64);

    let mut h = vec![0.0; n];
    let mut sb = vec![0.0; n];
    for (j, &x) in nodes.iter().enumerate() {
        h[j] = model.obs(&[x])[0];
        sb[j] = model.coefficients(&[x]).sigma_bar[0];
    }
    let sigma_bar_at = |x: f64| model.coefficients(&[x]).sigma_bar[0];
    let constant_sb = sb.iter().all(|&v| v == sb[0]);
    let transports = sb.iter().any(|&v| v != 0.0);

    let mut snapshots = Vec::new();
    let mut masses = vec![p.mass()];
    let mut shifted = p.clone();
    for m in 0..path.steps() {
        let dy = path.dy(m)[0];
        for j in 0..n {
            p.values[j] *= (h[j] * dy - 0.5 * h[j] * h[j] * dt).exp();
        }
        if transports {
            for (j, &x) in nodes.iter().enumerate() {
                if constant_sb {
                    shifted.values[j] = p.interpolate(x - sb[0] * dy);
                } else {
                    let mut z = x - sb[j] * dy;
                    for _ in 0..4 {
                        z = x - sigma_bar_at(z) * dy;
                    }
                    let jac = 1.0 + dy * (sigma_bar_at(z + 1e-6) - sigma_bar_at(z - 1e-6)) / 2e-6;
                    shifted.values[j] = p.interpolate(z) / jac;
                }
            }
            std::mem::swap(&mut p, &mut shifted);
        }
        p.values[0] = 0.0;
        p.values[n - 1] = 0.0;
        for _ in 0..k {
            cn.step(&mut p.values[1..n - 1]);
        }
        masses.push(p.mass());
        if let Some(s) = snapshot_stride {
            if (m + 1) % s.max(1) == 0 {
                snapshots.push((path.time(m + 1), p.clone()));
            }
        }
    }
    Ok(ZakaiGridSolution { terminal: p, snapshots, masses, substeps: k })
}

fn uniform_steps(a_max: f64, horizon: f64, dx: f64, dt: Option<f64>) -> Result<(usize, f64), OracleError> {
    if horizon == 0.0 {
        return Ok((0, 0.0));
    }
    if horizon < 0.0 {
        return Err(OracleError::InvalidGrid(format!("negative horizon {horizon}")));
    }
    let steps = match dt {
        Some(d) => (horizon / d).round().max(1.0) as usize,
        None => ((a_max * horizon / (CFL_LIMIT * dx * dx)).ceil() as usize).max(1),
    };
    let d = horizon / steps as f64;
    let ratio = a_max * d / (dx * dx);
    if ratio > CFL_LIMIT * (1.0 + 1e-12) {
        return Err(OracleError::Cfl { ratio, limit: CFL_LIMIT });
    }
    Ok((steps, d))
}

/// Evolves a density by the Fokker–Planck equation `∂_t p = A*p` over `horizon`, where `A`
/// includes both `σσᵀ` and `σ̄σ̄ᵀ`. This is the law of the signal without observations and the
/// intensity of the Zakai flow.
pub fn forward_fp_solve(
    model: &FilteringModel,
    init: &Grid1D,
    horizon: f64,
    dt: Option<f64>,
) -> Result<Grid1D, OracleError> {
    check_dim(model)?;
    let nodes: Vec<f64> = init.nodes().collect();
    let n = nodes.len();
    let (b, a) = nodal_coefficients(model, &nodes, Correlated::Diffusion);
    let a_max = a.iter().cloned().fold(0.0, f64::max);
    let (steps, d) = uniform_steps(a_max, horizon, init.dx(), dt)?;
    let mut p = init.clone();
    if steps == 0 {
        return Ok(p);
    }
    let (lo, di, up) = forward_operator(&b, &a, init.dx());
    let mut cn = CrankNicolson::new(lo, di, up, d);
    p.values[0] = 0.0;
    p.values[n - 1] = 0.0;
    for _ in 0..steps {
        cn.step(&mut p.values[1..n - 1]);
    }
    Ok(p)
}

/// `v(·, s)` for `(∂_s + A)v = 0` on `[s, T]` with `v(·, T) = ψ`.
#[derive(Debug, Clone)]
pub struct BackwardSolution {
    pub s: f64,
    pub horizon: f64,
    pub steps: usize,
    pub values: Grid1D,
}

impl BackwardSolution {
    pub fn at(&self, x: f64) -> f64 {
        self.values.interpolate(x)
    }

    /// `⟨μ, v(·, s)⟩`.
    pub fn integrate_against(&self, mu: &ParticleMeasure) -> f64 {
        mu.atoms().map(|(x, w)| w * self.at(x[0])).sum()
    }
}

/// Solves the backward equation by Crank–Nicolson in time and centred differences in space.
pub fn backward_pde_solve<F: Fn(f64) -> f64>(
    model: &FilteringModel,
    psi: F,
    s: f64,
    horizon: f64,
    spec: GridSpec,
    dt: Option<f64>,
) -> Result<BackwardSolution, OracleError> {
    check_dim(model)?;
    if s > horizon {
        return Err(OracleError::InvalidGrid(format!("start {s} after horizon {horizon}")));
    }
    let mut v = Grid1D::from_fn(spec, psi)?;
    let nodes: Vec<f64> = v.nodes().collect();
    let n = nodes.len();
    let (b, a) = nodal_coefficients(model, &nodes, Correlated::Diffusion);
    let a_max = a.iter().cloned().fold(0.0, f64::max);
    let (steps, d) = uniform_steps(a_max, horizon - s, spec.dx, dt)?;
    if steps > 0 {
        let (lo, di, up) = backward_operator(&b, &a, spec.dx);
        let mut cn = CrankNicolson::new(lo, di, up, d);
        for _ in 0..steps {
            cn.step(&mut v.values[1..n - 1]);
        }
        v.values[0] = 2.0 * v.values[1] - v.values[2];
        v.values[n - 1] = 2.0 * v.values[n - 2] - v.values[n - 3];
    }
    Ok(BackwardSolution { s, horizon, steps, values: v })
}
