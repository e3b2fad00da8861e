use super::{fmt_list, json, Ctx, Outcome, RunError};
use mkolmo_core::calculus::registry::test_function;
use mkolmo_core::calculus::{MeasureFunctional, TimeDependentFunctional};
use mkolmo_core::filtering::{
    gaussian_atoms, mass_moment_bounds, simulate_signal_observation, FlowOptions, KsFlow, MassMomentConfig, ZakaiFlow,
};
use mkolmo_core::generator::{ito_residuals, Equation, ResidualTarget};
use mkolmo_core::kolmogorov::{solve_ks_kolmogorov, solve_zakai_kolmogorov};
use mkolmo_core::noise::NoisePath;
use mkolmo_core::oracle::{self, zakai_grid_solve, GridInit, GridSpec, KalmanMode};
use mkolmo_core::stats::SampleSummary;
use rayon::prelude::*;
use serde_json::json;
use std::sync::Arc;

fn steps(horizon: f64, dt: f64) -> Result<usize, RunError> {
    let n = horizon / dt;
    if !(dt > 0.0) || (n - n.round()).abs() > 1e-6 || n.round() < 1.0 {
        return Err(RunError::Invalid(format!("horizon {horizon} is not a positive multiple of dt {dt}")));
    }
    Ok(n.round() as usize)
}

/// Mass moments of the Zakai flow against `2μ(ℝᵈ)² exp(2T‖h‖²_∞)`.
pub fn mass_moments(ctx: &Ctx) -> Result<Outcome, RunError> {
    let mc = &ctx.cfg.mc;
    let mu = ctx.measure()?;
    let per_atom = mc.particles.div_ceil(mu.len()).max(1);
    let cfg = MassMomentConfig {
        replicas: mc.replicas,
        dt: mc.dt,
        steps: steps(mc.horizon, mc.dt)?,
        seed: mc.seed,
        alpha: 2.0,
        flow: FlowOptions::replicated(per_atom),
    };
    let rep = mass_moment_bounds(ctx.model.clone(), &mu, &cfg)?;
    let mut out = Outcome::default();
    match rep.bound {
        Some(b) => out.check(
            "terminal_mass_second_moment_below_bound",
            rep.terminal_mass_sq.mean < b,
            format!(
                "E[rho_T(1)^2] = {:.5} +- {:.5}, bound {b:.5}",
                rep.terminal_mass_sq.mean, rep.terminal_mass_sq.std_error
            ),
        ),
        None => out.check("terminal_mass_second_moment_below_bound", false, "model has no bound on h"),
    }
    out.check("pathwise_mass_positive", rep.min_mass > 0.0, format!("min mass {:.3e}", rep.min_mass));
    out.results = json(&rep);
    Ok(out)
}

fn equation(name: &str) -> Result<Equation, RunError> {
    match name {
        "zakai" => Ok(Equation::Zakai),
        "ks" => Ok(Equation::Ks),
        other => Err(RunError::Invalid(format!("unknown equation {other} (expected zakai or ks)"))),
    }
}

/// `decay:<name>` is `e^{−t}·u` for the builtin `u`; any other name is the builtin itself.
fn time_functional(ctx: &Ctx, name: &str) -> Result<TimeDependentFunctional, RunError> {
    match name.strip_prefix("decay:") {
        Some(base) => Ok(TimeDependentFunctional::exponential_decay((*ctx.functional_named(base)?).clone(), 1.0)),
        None => Ok(TimeDependentFunctional::stationary((*ctx.functional_named(name)?).clone())),
    }
}

/// Pathwise Itô residuals on a ladder of time steps sharing the finest observation path.
pub fn ito(ctx: &Ctx, only: Option<&str>) -> Result<Outcome, RunError> {
    let st = &ctx.cfg.study;
    let mc = &ctx.cfg.mc;
    let eq_names: Vec<String> = match only {
        Some(e) => vec![e.to_string()],
        None => st.equations.clone().unwrap_or_else(|| vec!["zakai".into(), "ks".into()]),
    };
    let fnames = st.functionals.clone().unwrap_or_else(|| {
        vec!["tanh_of_linear".into(), "tanh_of_second_moment".into(), "decay:tanh_of_linear".into()]
    });
    let mut targets = Vec::new();
    let mut labels = Vec::new();
    for f in &fnames {
        for e in &eq_names {
            targets.push(ResidualTarget::new(time_functional(ctx, f)?, equation(e)?));
            labels.push(format!("{e}:{f}"));
        }
    }
    let dts = st.dts.clone().unwrap_or_else(|| vec![1e-3, 5e-4]);
    let fine = dts.iter().copied().fold(f64::INFINITY, f64::min);
    let factors: Vec<usize> = dts
        .iter()
        .map(|dt| {
            let k = dt / fine;
            if (k - k.round()).abs() > 1e-9 {
                Err(RunError::Invalid(format!("dt {dt} is not a multiple of the finest dt {fine}")))
            } else {
                Ok(k.round() as usize)
            }
        })
        .collect::<Result<_, _>>()?;
    let fine_steps = steps(mc.horizon, fine)?;
    let mu = ctx.measure()?;
    let per_atom = mc.particles.div_ceil(mu.len()).max(1);
    let dim = ctx.dim();
    // rows[r][level][target] = (corrected, raw)
    let rows: Vec<Vec<Vec<(f64, f64)>>> = (0..mc.replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<_, RunError> {
            let base = NoisePath::generate(mc.seed, r, dim, fine, fine_steps);
            factors
                .iter()
                .map(|&k| {
                    let path = Arc::new(if k == 1 { base.clone() } else { base.coarsen(k) });
                    let mut flow = ZakaiFlow::new(ctx.model.clone(), path, 0, &mu, FlowOptions::replicated(per_atom))?;
                    let reps = ito_residuals(&mut flow, &targets)?;
                    Ok(reps.iter().map(|x| (x.corrected_residual, x.residual)).collect())
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let lo = ctx.cfg.assertions.ratio_min.unwrap_or(1.2);
    let hi = ctx.cfg.assertions.ratio_max.unwrap_or(3.0);
    let mut out = Outcome::default();
    let mut table = Vec::new();
    for (t, label) in labels.iter().enumerate() {
        let mut corrected = Vec::new();
        let mut raw = Vec::new();
        for (level, dt) in dts.iter().enumerate() {
            let c: Vec<f64> = rows.iter().map(|row| row[level][t].0).collect();
            let w: Vec<f64> = rows.iter().map(|row| row[level][t].1).collect();
            corrected.push(c.iter().map(|v| v.abs()).sum::<f64>() / c.len() as f64);
            raw.push(w.iter().map(|v| v.abs()).sum::<f64>() / w.len() as f64);
            out.series(format!("corrected[{label}][dt={dt}]"), c);
            out.series(format!("raw[{label}][dt={dt}]"), w);
        }
        let ratios: Vec<f64> = corrected.windows(2).map(|w| w[0] / w[1]).collect();
        let raw_ratios: Vec<f64> = raw.windows(2).map(|w| w[0] / w[1]).collect();
        let ok = ratios.iter().all(|q| (lo..=hi).contains(q));
        out.check(
            format!("residual_ratio[{label}]"),
            ok,
            format!("mean |residual| {} ratios {} (allowed [{lo}, {hi}])", fmt_list(&corrected), fmt_list(&ratios)),
        );
        table.push(json!({
            "target": label,
            "mean_abs_corrected": corrected,
            "ratios": ratios,
            "mean_abs_raw": raw,
            "raw_ratios": raw_ratios,
        }));
    }
    out.results = json!({ "dts": dts, "replicas": mc.replicas, "particles_per_atom": per_atom, "targets": table });
    Ok(out)
}

/// Particle against grid solutions of the Zakai equation on shared observation paths.
pub fn oracle_crosscheck(ctx: &Ctx) -> Result<Outcome, RunError> {
    let st = &ctx.cfg.study;
    let mc = &ctx.cfg.mc;
    if ctx.dim() != 1 {
        return Err(RunError::Invalid("the grid oracle is one-dimensional".into()));
    }
    let paths = st.paths.unwrap_or(20);
    let names = st.test_functions.clone().unwrap_or_else(|| vec!["x".into(), "x2".into(), "tanh".into()]);
    let psis = names.iter().map(|n| test_function(n, 1)).collect::<Result<Vec<_>, _>>()?;
    let spec = GridSpec::new(st.half_width.unwrap_or(8.0), st.dx.unwrap_or(0.01));
    let mu = ctx.measure()?;
    let per_atom = mc.particles.div_ceil(mu.len()).max(1);
    let n = steps(mc.horizon, mc.dt)?;
    let stride = st.snapshot_stride;
    let rows: Vec<(Vec<[f64; 2]>, Option<mkolmo_core::oracle::Grid1D>)> = (0..paths as u64)
        .into_par_iter()
        .map(|p| -> Result<_, RunError> {
            let path = Arc::new(NoisePath::generate(mc.seed, p, 1, mc.dt, n));
            let mut flow = ZakaiFlow::new(ctx.model.clone(), path.clone(), 0, &mu, FlowOptions::replicated(per_atom))?;
            flow.run_to_end()?;
            let rho = flow.measure();
            let grid = zakai_grid_solve(
                &ctx.model,
                &GridInit::Atoms { mu: mu.clone(), bandwidth: None },
                &path,
                spec,
                None,
                None,
            )?;
            let vals = psis
                .iter()
                .map(|psi| Ok([rho.integrate(psi)?, grid.integrate(|x| psi.value(&[x]))]))
                .collect::<Result<Vec<_>, RunError>>()?;
            let snap = stride.is_some_and(|k| p.is_multiple_of(k.max(1) as u64)).then(|| grid.terminal.clone());
            Ok((vals, snap))
        })
        .collect::<Result<_, _>>()?;
    let tol = ctx.cfg.assertions.rel_tol.unwrap_or(0.02);
    let mut out = Outcome::default();
    let mut table = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let particle: Vec<f64> = rows.iter().map(|r| r.0[j][0]).collect();
        let grid: Vec<f64> = rows.iter().map(|r| r.0[j][1]).collect();
        let rel: Vec<f64> = particle.iter().zip(&grid).map(|(a, b)| (a - b).abs() / b.abs()).collect();
        let mean_rel = rel.iter().sum::<f64>() / rel.len() as f64;
        out.check(
            format!("particle_vs_grid[{name}]"),
            mean_rel <= tol,
            format!("mean relative gap over {paths} paths {mean_rel:.4} (tol {tol})"),
        );
        let mean_abs_gap = particle.iter().zip(&grid).map(|(a, b)| (a - b).abs()).sum::<f64>() / paths as f64;
        let mean_abs_grid = grid.iter().map(|b| b.abs()).sum::<f64>() / paths as f64;
        table.push(json!({
            "psi": name,
            "mean_relative_gap": mean_rel,
            "max_relative_gap": rel.iter().copied().fold(0.0, f64::max),
            "min_abs_grid": grid.iter().map(|b| b.abs()).fold(f64::INFINITY, f64::min),
            "mean_abs_gap": mean_abs_gap,
            "pooled_relative_gap": mean_abs_gap / mean_abs_grid,
        }));
        out.series(format!("particle[{name}]"), particle);
        out.series(format!("grid[{name}]"), grid);
        out.series(format!("relative_gap[{name}]"), rel);
    }
    for (p, row) in rows.into_iter().enumerate() {
        if let Some(g) = row.1 {
            out.snapshots.push((format!("path{p}_terminal"), g));
        }
    }
    out.results = json!({
        "paths": paths,
        "particles_per_atom": per_atom,
        "dt": mc.dt,
        "dx": spec.dx,
        "half_width": spec.half_width,
        "test_functions": table,
    });
    Ok(out)
}

/// Normalised particle filter on the linear-Gaussian model against the Kalman–Bucy filter on one
/// simulated observation path; replicas differ only in particle noise and prior atoms.
pub fn kalman_bucy(ctx: &Ctx) -> Result<Outcome, RunError> {
    let st = &ctx.cfg.study;
    let mc = &ctx.cfg.mc;
    let lg = ctx
        .model
        .linear_gaussian()
        .ok_or_else(|| RunError::Invalid("kalman_bucy needs the linear_gauss model".into()))?;
    let (m0, p0) = (st.prior_mean.unwrap_or(1.0), st.prior_var.unwrap_or(0.5));
    let n = steps(mc.horizon, mc.dt)?;
    let law = gaussian_atoms(m0, p0, 1000, mc.seed)?;
    let base = NoisePath::generate(mc.seed, 0, 1, mc.dt, n);
    let so = simulate_signal_observation(&ctx.model, &law, &base)?;
    let obs = &so.observation;
    let oracle = *oracle::kalman_bucy(lg, m0, p0, KalmanMode::Observed(obs)).last().expect("non-empty trajectory");
    let rows: Vec<[f64; 2]> = (0..mc.replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<[f64; 2], RunError> {
            let prior = gaussian_atoms(m0, p0, mc.particles, mc.seed.wrapping_add(1 + r))?;
            let path = Arc::new(obs.reseeded(mc.seed.wrapping_add(1), r));
            let mut ks = KsFlow::new(ZakaiFlow::new(ctx.model.clone(), path, 0, &prior, FlowOptions::default())?)?;
            ks.run_to_end()?;
            let pi = ks.normalized();
            let m = pi.integrate_fn(|x| x[0]);
            Ok([m, pi.integrate_fn(|x| (x[0] - m).powi(2))])
        })
        .collect::<Result<_, _>>()?;
    let z = ctx.z(3.0);
    let rel = ctx.cfg.assertions.rel_tol.unwrap_or(0.05);
    let mut out = Outcome::default();
    let mut table = Vec::new();
    for (j, (name, exact)) in [("mean", oracle.mean), ("variance", oracle.var)].into_iter().enumerate() {
        let vals: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let s = SampleSummary::from_slice(&vals);
        let gap = (s.mean - exact).abs();
        out.check(
            format!("{name}_within_{z}_se"),
            gap <= z * s.std_error,
            format!("{:.6} +- {:.6} vs Riccati {exact:.6}", s.mean, s.std_error),
        );
        out.check(
            format!("{name}_within_{}pct", rel * 100.0),
            gap <= rel * exact.abs(),
            format!("relative gap {:.4}", gap / exact.abs()),
        );
        table.push(json!({ "quantity": name, "particle": s, "riccati": exact, "relative_gap": gap / exact.abs() }));
        out.series(name, vals);
    }
    out.results = json!({
        "prior_mean": m0,
        "prior_var": p0,
        "particles": mc.particles,
        "replicas": mc.replicas,
        "signal_terminal": so.signal_at(n)[0],
        "comparisons": table,
    });
    Ok(out)
}

/// Terminal condition of both value functions, `E^Q[ξ_T] = 1`, and Brownian innovations.
pub fn martingale(ctx: &Ctx) -> Result<Outcome, RunError> {
    let mc = &ctx.cfg.mc;
    let cfg = mc.mc_config();
    let phi = ctx.functional_or("tanh_of_linear")?;
    let mu = ctx.measure()?;
    let pi = mu.normalize()?;
    let z = ctx.z(3.0);
    let mut out = Outcome::default();

    let exact = phi.value(&mu)?;
    let zt = solve_zakai_kolmogorov(&ctx.model, phi.as_ref(), &mu, mc.horizon, &cfg)?;
    out.check(
        "zakai_terminal_condition",
        zt.per_replica.iter().all(|v| *v == exact) && zt.std_error == 0.0,
        format!("u(mu,T) = {} (Phi(mu) = {exact}), se {}", zt.value, zt.std_error),
    );
    let exact_pi = phi.value(&pi)?;
    let kt = solve_ks_kolmogorov(&ctx.model, phi.as_ref(), &pi, mc.horizon, &cfg)?;
    out.check(
        "ks_terminal_condition",
        kt.per_replica.iter().all(|v| *v == exact_pi) && kt.std_error == 0.0,
        format!("u(pi,T) = {} (Phi(pi) = {exact_pi}), se {}", kt.value, kt.std_error),
    );

    let n = steps(mc.horizon, mc.dt)?;
    let per_atom = mc.particles.div_ceil(pi.len()).max(1);
    let xis: Vec<f64> = (0..mc.replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<f64, RunError> {
            let path = Arc::new(NoisePath::generate(mc.seed, r, ctx.dim(), mc.dt, n));
            let mut ks =
                KsFlow::new(ZakaiFlow::new(ctx.model.clone(), path, 0, &pi, FlowOptions::replicated(per_atom))?)?;
            ks.run_to_end()?;
            Ok(ks.xi())
        })
        .collect::<Result<_, _>>()?;
    let xi = SampleSummary::from_slice(&xis);
    out.check("xi_mean_is_one", xi.covers(1.0, z), format!("E[xi_T] = {:.5} +- {:.5}", xi.mean, xi.std_error));

    let innov: Vec<[f64; 2]> = (0..mc.replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<[f64; 2], RunError> {
            let base = NoisePath::generate(mc.seed.wrapping_add(1), r, ctx.dim(), mc.dt, n);
            let so = simulate_signal_observation(&ctx.model, &pi, &base)?;
            let obs = Arc::new(so.observation.reseeded(mc.seed.wrapping_add(2), r));
            let mut ks =
                KsFlow::new(ZakaiFlow::new(ctx.model.clone(), obs, 0, &pi, FlowOptions::replicated(per_atom))?)?;
            ks.run_to_end()?;
            let inc = ks.innovations();
            let total: f64 = inc.iter().sum();
            let qv = inc.iter().map(|v| v * v).sum::<f64>() / (ctx.dim() as f64 * mc.horizon);
            Ok([total / (ctx.dim() as f64 * mc.horizon).sqrt(), qv])
        })
        .collect::<Result<_, _>>()?;
    let sums: Vec<f64> = innov.iter().map(|r| r[0]).collect();
    let qvs: Vec<f64> = innov.iter().map(|r| r[1]).collect();
    let s = SampleSummary::from_slice(&sums);
    let q = SampleSummary::from_slice(&qvs);
    out.check("innovation_mean_zero", s.covers(0.0, z), format!("mean {:.5} +- {:.5}", s.mean, s.std_error));
    // The sample standard deviation of n normal draws has standard error σ/√(2(n−1)).
    let sd_se = s.std_dev / (2.0 * (sums.len() as f64 - 1.0)).sqrt();
    out.check(
        "innovation_unit_variance",
        (s.std_dev - 1.0).abs() <= z * sd_se,
        format!("std dev of normalised sum {:.4} +- {sd_se:.4}", s.std_dev),
    );
    out.check("innovation_quadratic_variation", q.covers(1.0, z), format!("{:.5} +- {:.5}", q.mean, q.std_error));
    out.series("xi_T", xis);
    out.series("innovation_sum", sums);
    out.series("innovation_qv", qvs);
    out.results = json!({
        "terminal": { "zakai": zt.value, "ks": kt.value, "phi_mu": exact, "phi_pi": exact_pi },
        "xi": xi,
        "innovation_sum": s,
        "innovation_qv": q,
    });
    Ok(out)
}
