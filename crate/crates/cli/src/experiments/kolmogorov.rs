use super::{json, random_measure, Ctx, Outcome, RunError};
use mkolmo_core::calculus::registry::test_function;
use mkolmo_core::calculus::{HomogeneousLift, MeasureFunctional};
use mkolmo_core::generator::GeneratorKind;
use mkolmo_core::kolmogorov::{
    finite_difference_check, flat_derivative_u, flat_identity_check, markov_consistency, pde_residuals,
    solve_ks_kolmogorov, solve_zakai_kolmogorov,
};
use mkolmo_core::oracle::{backward_pde_solve, kalman_bucy, GridSpec, KalmanMode};
use serde_json::json;
use std::sync::Arc;

fn start_time(ctx: &Ctx) -> f64 {
    ctx.cfg.study.s.unwrap_or(0.5 * ctx.cfg.mc.horizon)
}

fn linear_psi(ctx: &Ctx) -> Option<String> {
    let f = ctx.cfg.functional.as_ref()?;
    (f.name == "linear").then(|| f.psi.clone().unwrap_or_else(|| "x".into()))
}

/// `u(μ, s)` for the Zakai equation, or `u(π, s)` for the Kushner–Stratonovich equation, with
/// the oracles that apply to the chosen model and functional.
pub fn value(ctx: &Ctx, ks: bool) -> Result<Outcome, RunError> {
    let cfg = ctx.cfg.mc.mc_config();
    let phi = ctx.functional()?;
    let s = start_time(ctx);
    let z = ctx.z(3.0);
    let mut out = Outcome::default();
    let mut mu = ctx.measure()?;
    if ks {
        mu = mu.normalize()?;
    }
    let est = if ks {
        solve_ks_kolmogorov(&ctx.model, phi.as_ref(), &mu, s, &cfg)?
    } else {
        solve_zakai_kolmogorov(&ctx.model, phi.as_ref(), &mu, s, &cfg)?
    };
    let mut oracle = serde_json::Map::new();
    if ks {
        let lift = HomogeneousLift::new(phi.clone());
        let lifted = solve_zakai_kolmogorov(&ctx.model, &lift, &mu, s, &cfg)?;
        let se = est.std_error.hypot(lifted.std_error);
        out.check(
            "ks_equals_zakai_of_normalised_functional",
            (est.value - lifted.value).abs() <= z * se,
            format!("{:.6} vs {:.6} (se {se:.2e})", est.value, lifted.value),
        );
        oracle.insert("zakai_of_lift".into(), json!(lifted.summary()));
        if let (Some(lg), Some("x")) = (ctx.model.linear_gaussian(), linear_psi(ctx).as_deref()) {
            let m0 = mu.integrate_fn(|x| x[0]);
            let steps = ((ctx.cfg.mc.horizon - s) / cfg.dt).round().max(1.0) as usize;
            let traj = kalman_bucy(lg, m0, 0.0, KalmanMode::Expected { horizon: ctx.cfg.mc.horizon - s, steps });
            let exact = traj.last().expect("non-empty trajectory").mean;
            out.check(
                "riccati_expected_mean",
                (est.value - exact).abs() <= z * est.std_error,
                format!("{:.6} +- {:.6} vs {exact:.6}", est.value, est.std_error),
            );
            oracle.insert("riccati_expected_mean".into(), json!(exact));
        }
    } else if let (1, Some(name)) = (ctx.dim(), linear_psi(ctx)) {
        let psi = test_function(&name, 1)?;
        let v =
            backward_pde_solve(&ctx.model, |x| psi.value(&[x]), s, ctx.cfg.mc.horizon, GridSpec::new(8.0, 0.02), None)?;
        let exact = v.integrate_against(&mu);
        out.check(
            "backward_pde",
            (est.value - exact).abs() <= z * est.std_error,
            format!("{:.6} +- {:.6} vs {exact:.6}", est.value, est.std_error),
        );
        oracle.insert("backward_pde".into(), json!(exact));
    }
    out.series("value", est.per_replica.clone());
    out.results =
        json!({ "estimate": est.summary(), "s": s, "dt": est.dt, "particles": est.particles, "oracles": oracle });
    Ok(out)
}

fn generator_kinds(ctx: &Ctx) -> Result<Vec<GeneratorKind>, RunError> {
    let names = ctx.cfg.study.generators.clone().unwrap_or_else(|| vec!["zakai".into(), "ks".into()]);
    names
        .iter()
        .map(|n| match n.as_str() {
            "zakai" => Ok(GeneratorKind::Zakai),
            "ks" => Ok(GeneratorKind::KushnerStratonovich),
            other => Err(RunError::Invalid(format!("unknown generator {other} (expected zakai or ks)"))),
        })
        .collect()
}

/// `∂_s u + 𝓛u` at `(μ, s)` for each requested generator, with the replica ladder.
pub fn pde_residual(ctx: &Ctx) -> Result<Outcome, RunError> {
    let st = &ctx.cfg.study;
    let cfg = ctx.cfg.mc.mc_config();
    let phi: Arc<dyn MeasureFunctional> = ctx.functional_or("tanh_of_linear")?;
    let mu = ctx.measure()?;
    let s = start_time(ctx);
    let fd_step = st.fd_step.unwrap_or(0.05 * cfg.horizon);
    let spatial = st.spatial_step.unwrap_or(1e-3);
    let kinds = generator_kinds(ctx)?;
    let reports = pde_residuals(&ctx.model, phi, &mu, s, fd_step, spatial, &kinds, &cfg)?;
    let z = ctx.z(3.0);
    let rel = ctx.cfg.assertions.rel_tol.unwrap_or(0.02);
    let ladder = st.ladder.unwrap_or(4).max(1);
    let mut out = Outcome::default();
    let mut table = Vec::new();
    for rep in &reports {
        let tag = match rep.kind {
            GeneratorKind::Zakai => "zakai",
            GeneratorKind::KushnerStratonovich => "ks",
        };
        let r = rep.residual;
        out.check(
            format!("residual_small[{tag}]"),
            rep.within(z, rel),
            format!(
                "|{:.3e}| vs max({z} x {:.3e}, {rel} x {:.4}); d_s u = {:.4}, Lu = {:.4}",
                r.mean,
                r.std_error,
                rep.scale(),
                rep.time_derivative.mean,
                rep.generator.mean
            ),
        );
        out.check(
            format!("ci_contains_zero[{tag}]"),
            r.covers(0.0, z),
            format!("{:.3e} +- {z} x {:.3e}", r.mean, r.std_error),
        );
        let n = rep.per_replica.len() / ladder;
        let coarse = rep.prefix(n);
        out.check(
            format!("ladder[{tag}]"),
            coarse.covers(0.0, z) && coarse.std_error > r.std_error,
            format!(
                "{n} replicas: {:.3e} +- {:.3e}; {} replicas: {:.3e} +- {:.3e}",
                coarse.mean,
                coarse.std_error,
                rep.per_replica.len(),
                r.mean,
                r.std_error
            ),
        );
        out.series(format!("residual[{tag}]"), rep.per_replica.clone());
        out.series(format!("residual_raw[{tag}]"), rep.raw_per_replica.clone());
        table.push(json!({ "report": rep, "ladder": { "replicas": n, "residual": coarse } }));
    }
    out.results = json!({ "reports": table });
    Ok(out)
}

/// Flat derivative of the value function: quadrature reconstruction, μ-independence for a
/// linear functional, and finite differences.
pub fn derivative_study(ctx: &Ctx) -> Result<Outcome, RunError> {
    let st = &ctx.cfg.study;
    let cfg = ctx.cfg.mc.mc_config();
    let dim = ctx.dim();
    let s = start_time(ctx);
    let z = ctx.z(3.0);
    let phi = ctx.functional_or("tanh_of_linear")?;
    let mut out = Outcome::default();
    let mut stream = ctx.stream(0);

    let pairs = st.pairs.unwrap_or(2);
    let nodes = st.nodes.unwrap_or(8);
    let mut identity = Vec::new();
    for p in 0..pairs {
        let mu = random_measure(&mut stream, dim, 4, 4)?;
        let mu2 = random_measure(&mut stream, dim, 4, 4)?;
        let rep =
            flat_identity_check(&ctx.model, phi.as_ref(), &mu, &mu2, s, nodes, &cfg.with_seed(cfg.seed + p as u64))?;
        out.check(
            format!("quadrature_reconstruction[{p}]"),
            rep.consistent(z),
            format!("rhs - lhs = {:.3e} +- {:.3e}", rep.difference.mean, rep.difference.std_error),
        );
        identity.push(json!(rep));
    }

    let points: Vec<Vec<f64>> =
        st.points.clone().unwrap_or_else(|| vec![-1.0, 0.0, 1.0]).into_iter().map(|x| vec![x; dim]).collect();
    let linear = ctx.functional_named("linear")?;
    let mu_a = random_measure(&mut stream, dim, 4, 4)?;
    let mu_b = random_measure(&mut stream, dim, 4, 4)?;
    let da = flat_derivative_u(&ctx.model, linear.as_ref(), &mu_a, s, &points, &cfg)?;
    let db = flat_derivative_u(&ctx.model, linear.as_ref(), &mu_b, s, &points, &cfg)?;
    let mut independence = Vec::new();
    for (a, b) in da.derivatives.iter().zip(&db.derivatives) {
        let se = a.std_error.hypot(b.std_error);
        let ok = (a.value - b.value).abs() <= z * se;
        out.check(
            format!("measure_independence[x={}]", a.x[0]),
            ok,
            format!("{:.6} vs {:.6} (se {se:.2e})", a.value, b.value),
        );
        independence.push(json!({ "x": a.x, "mu": a.value, "mu_prime": b.value, "std_error": se }));
    }

    let epsilon = st.epsilon.unwrap_or(1e-3);
    let rel = ctx.cfg.assertions.rel_tol.unwrap_or(0.05);
    let mu = ctx.measure()?;
    let mut fd = Vec::new();
    for x in &points {
        let rep = finite_difference_check(&ctx.model, phi.as_ref(), &mu, s, x, epsilon, &cfg)?;
        out.check(
            format!("finite_difference[x={}]", x[0]),
            rep.agrees(z, rel),
            format!(
                "FD {:.6} +- {:.2e}, estimator {:.6} +- {:.2e}",
                rep.finite_difference.mean,
                rep.finite_difference.std_error,
                rep.estimator.mean,
                rep.estimator.std_error
            ),
        );
        fd.push(json!(rep));
    }
    out.results = json!({
        "s": s,
        "flat_identity": identity,
        "measure_independence": independence,
        "finite_difference": fd,
    });
    Ok(out)
}

/// Nested against direct estimates of `u(μ, s)` through `u(ρ_{s+h}, s+h)`.
pub fn markov(ctx: &Ctx) -> Result<Outcome, RunError> {
    let st = &ctx.cfg.study;
    let cfg = ctx.cfg.mc.mc_config();
    let phi = ctx.functional_or("tanh_of_linear")?;
    let mu = ctx.measure()?;
    let s = st.s.unwrap_or(0.0);
    let h = st.h_step.unwrap_or(0.5 * (cfg.horizon - s));
    let rep = markov_consistency(&ctx.model, phi.as_ref(), &mu, s, h, st.inner.unwrap_or(8), &cfg)?;
    let z = ctx.z(3.0);
    let mut out = Outcome::default();
    out.check(
        "nested_matches_direct",
        rep.consistent(z),
        format!(
            "{:.6} vs {:.6}, difference {:.3e} +- {:.3e}",
            rep.direct.mean, rep.nested.mean, rep.difference, rep.std_error
        ),
    );
    out.results = json(&rep);
    Ok(out)
}
