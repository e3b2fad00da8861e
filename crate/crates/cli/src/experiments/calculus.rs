use super::{fmt_list, random_measure, random_point, Ctx, Outcome, RunError};
use mkolmo_core::calculus::approx::{cutoff_stage, empirical_stage};
use mkolmo_core::calculus::registry::{EXTRA_NAMES, NAMES};
use mkolmo_core::calculus::rules::{
    chain_rule_check, derivative_fd_check, mixed_derivative_residual, product_rule_residual, symmetry_residual,
    verify_flat_identity, DEFAULT_QUAD_NODES, MASS_EPS,
};
use mkolmo_core::calculus::{CylindricalFunctional, MeasureFunctional, ScalarFunction, TestFunction};
use rayon::prelude::*;
use serde_json::json;

fn names(ctx: &Ctx, default: Vec<&str>) -> Vec<String> {
    ctx.cfg.study.functionals.clone().unwrap_or_else(|| default.into_iter().map(String::from).collect())
}

/// `u(μ′) − u(μ)` against the quadrature of the flat derivative along the segment.
pub fn flat_identity(ctx: &Ctx) -> Result<Outcome, RunError> {
    let st = &ctx.cfg.study;
    let pairs = st.pairs.unwrap_or(20);
    let max_atoms = st.max_atoms.unwrap_or(8);
    let nodes = st.nodes.unwrap_or(DEFAULT_QUAD_NODES);
    let tol = ctx.cfg.assertions.tol.unwrap_or(1e-8);
    let names = names(ctx, NAMES.iter().chain(EXTRA_NAMES.iter()).copied().collect());
    let mut out = Outcome::default();
    let mut rows = Vec::new();
    for name in &names {
        let u = ctx.functional_named(name)?;
        let mut errors = Vec::with_capacity(pairs);
        for p in 0..pairs as u64 {
            let mut s = ctx.stream(p);
            let mu = random_measure(&mut s, ctx.dim(), 1, max_atoms)?;
            let nu = random_measure(&mut s, ctx.dim(), 1, max_atoms)?;
            errors.push(verify_flat_identity(u.as_ref(), &mu, &nu, nodes)?.abs_error);
        }
        let worst = errors.iter().copied().fold(0.0, f64::max);
        out.check(
            format!("flat_identity[{name}]"),
            worst <= tol,
            format!("max |lhs - rhs| = {worst:.3e} (tol {tol:.0e})"),
        );
        rows.push(json!({ "functional": name, "max_abs_error": worst }));
        out.series(format!("abs_error[{name}]"), errors);
    }
    out.results = json!({ "pairs": pairs, "max_atoms": max_atoms, "nodes": nodes, "functionals": rows });
    Ok(out)
}

/// Symmetry, chain, product and mixed-derivative identities, and all derivative evaluators
/// against finite differences, on random probes.
pub fn derivative_rules(ctx: &Ctx) -> Result<Outcome, RunError> {
    let st = &ctx.cfg.study;
    let probes = st.probes.unwrap_or(100);
    let max_atoms = st.max_atoms.unwrap_or(8);
    let tol = ctx.cfg.assertions.tol.unwrap_or(1e-12);
    let fd_tol = ctx.cfg.assertions.fd_tol.unwrap_or(1e-6);
    let mut default = NAMES.to_vec();
    default.extend(["tanh_of_linear", "sin_of_linear"]);
    let names = names(ctx, default);
    let d = ctx.dim();
    let outer = ScalarFunction::tanh();
    let partner = CylindricalFunctional::linear(TestFunction::tanh_coordinate(d, 0));
    let mut out = Outcome::default();
    let mut rows = Vec::new();
    for name in &names {
        let u = ctx.functional_named(name)?;
        let per_probe: Vec<[f64; 2]> = (0..probes as u64)
            .into_par_iter()
            .map(|p| -> Result<[f64; 2], RunError> {
                let mut s = ctx.stream(p);
                let mu = random_measure(&mut s, d, max_atoms, max_atoms)?;
                let x: Vec<f64> = (0..d).map(|_| random_point(&mut s)).collect();
                let y: Vec<f64> = (0..d).map(|_| random_point(&mut s)).collect();
                let analytic = [
                    symmetry_residual(u.as_ref(), &mu, &x, &y)?,
                    mixed_derivative_residual(&u, &mu, &x, &y)?,
                    chain_rule_check(&outer, &u, &mu, &x)?.residual,
                    product_rule_residual(&u, &partner, &mu, &x)?,
                ]
                .into_iter()
                .fold(0.0, f64::max);
                let fd = derivative_fd_check(u.as_ref(), &mu, &x, &y, MASS_EPS, None)?.max();
                Ok([analytic, fd])
            })
            .collect::<Result<_, _>>()?;
        let analytic: Vec<f64> = per_probe.iter().map(|r| r[0]).collect();
        let fd: Vec<f64> = per_probe.iter().map(|r| r[1]).collect();
        let wa = analytic.iter().copied().fold(0.0, f64::max);
        let wf = fd.iter().copied().fold(0.0, f64::max);
        out.check(format!("analytic_identities[{name}]"), wa <= tol, format!("max residual {wa:.3e} (tol {tol:.0e})"));
        out.check(format!("finite_differences[{name}]"), wf <= fd_tol, format!("max gap {wf:.3e} (tol {fd_tol:.0e})"));
        rows.push(json!({ "functional": name, "max_analytic_residual": wa, "max_fd_gap": wf }));
        out.series(format!("analytic[{name}]"), analytic);
        out.series(format!("fd[{name}]"), fd);
    }
    out.results = json!({ "probes": probes, "functionals": rows });
    Ok(out)
}

/// Seed-averaged error of the empirical stage over a ladder of ensemble sizes, and exactness
/// of the cut-off stage on measures supported in the box.
pub fn approximation_study(ctx: &Ctx) -> Result<Outcome, RunError> {
    let st = &ctx.cfg.study;
    let u: std::sync::Arc<dyn MeasureFunctional> = ctx.functional_or("tanh_of_second_moment")?;
    let mu = ctx.measure()?;
    let sizes = st.ensemble_sizes.clone().unwrap_or_else(|| vec![16, 64, 256, 1024]);
    let seeds = st.seeds.unwrap_or(256);
    let radius = st.box_radius.unwrap_or(3.0);
    let exact = u.value(&mu)?;
    let mut out = Outcome::default();
    let mut means = Vec::new();
    let mut rows = Vec::new();
    for &n in &sizes {
        let errors: Vec<f64> = (0..seeds as u64)
            .into_par_iter()
            .map(|seed| -> Result<f64, RunError> {
                let stage = empirical_stage(u.clone(), n, ctx.cfg.mc.seed.wrapping_mul(1_000_003).wrapping_add(seed))?;
                Ok((stage.functional.value(&mu)? - exact).abs())
            })
            .collect::<Result<_, _>>()?;
        let summary = mkolmo_core::stats::SampleSummary::from_slice(&errors);
        means.push(summary.mean);
        rows.push(json!({ "n": n, "mean_abs_error": summary.mean, "std_error": summary.std_error }));
        out.series(format!("empirical_abs_error[n={n}]"), errors);
    }
    let monotone = means.windows(2).all(|w| w[1] < w[0]);
    out.check("empirical_stage_monotone", monotone, format!("mean errors {}", fmt_list(&means)));

    let inside = mu.atoms().all(|(x, _)| x.iter().all(|v| v.abs() <= radius));
    let cut = cutoff_stage(u.clone(), radius)?;
    let cut_gap = (cut.functional.value(&mu)? - exact).abs();
    if inside {
        let tol = ctx.cfg.assertions.tol.unwrap_or(0.0);
        out.check(
            "cutoff_stage_exact",
            cut_gap <= tol,
            format!("|u(cut mu) - u(mu)| = {cut_gap:.3e} with box radius {radius}"),
        );
    } else {
        out.check("cutoff_stage_exact", false, format!("measure is not supported in [-{radius}, {radius}]^d"));
    }
    let outside = mu.push_forward(|x, y| y.iter_mut().zip(x).for_each(|(o, v)| *o = v + 2.0 * radius))?;
    let outside_gap = (cut.functional.value(&outside)? - u.value(&outside)?).abs();
    out.results = json!({
        "functional": u.name(),
        "value": exact,
        "seeds": seeds,
        "empirical": rows,
        "cutoff": { "box_radius": radius, "gap_inside": cut_gap, "gap_after_shift_outside": outside_gap },
    });
    Ok(out)
}
