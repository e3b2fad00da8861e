use mkolmo_core::calculus::registry::{builtin, EXTRA_NAMES, NAMES};
use mkolmo_core::calculus::{
    CylindricalFunctional, HomogeneousLift, MeasureFunctional, ScalarFunction, TimeDependentFunctional,
};
use mkolmo_core::filtering::{brownian, ou_bounded, Bound, FilteringModel, FlowOptions, ModelConstants, ZakaiFlow};
use mkolmo_core::generator::{
    apply_l, apply_l_cylindrical, apply_lks, apply_lks_cylindrical, ito_residual_ks, ito_residual_time_dependent,
    ito_residual_zakai, ito_residuals, Equation, GeneratorKind, ResidualTarget,
};
use mkolmo_core::measure::{ParticleMeasure, TestFunction};
use mkolmo_core::noise::{NoisePath, Stream};
use mkolmo_core::stats::SampleSummary;
use std::sync::Arc;

fn random_measure(dim: usize, atoms: usize, seed: u64, mass: f64) -> ParticleMeasure {
    let mut s = Stream::new(seed, 0, 7);
    let locs: Vec<f64> = (0..atoms * dim).map(|_| 2.0 * s.normal()).collect();
    let raw: Vec<f64> = (0..atoms).map(|_| 0.1 + s.uniform()).collect();
    let tot: f64 = raw.iter().sum();
    ParticleMeasure::new(dim, locs, raw.iter().map(|w| mass * w / tot).collect()).unwrap()
}

fn unit_constants() -> ModelConstants {
    ModelConstants {
        drift: Bound::new(2.0, 1.0),
        sigma: Bound::new(2.0, 1.0),
        sigma_bar: Bound::new(1.0, 1.0),
        obs: Bound::new(1.0, 1.0),
        ellipticity: None,
    }
}

/// A 2-d model whose matrices are neither diagonal nor symmetric.
fn skew_model() -> FilteringModel {
    FilteringModel::new(
        "skew",
        2,
        Arc::new(|x, o| {
            o[0] = -x[0].tanh() + 0.3 * x[1].sin();
            o[1] = 0.5 * x[0].cos() - x[1].tanh();
        }),
        Arc::new(|x, o| {
            o.copy_from_slice(&[1.0, 0.2 * x[0].tanh(), -0.4, 0.8 + 0.1 * x[1].sin()]);
        }),
        Arc::new(|x, o| {
            o.copy_from_slice(&[0.3, -0.5 * x[1].tanh(), 0.2 * x[0].cos(), 0.4]);
        }),
        Arc::new(|x, o| {
            o[0] = (x[0] + 0.5 * x[1]).tanh();
            o[1] = 0.7 * (x[1] - x[0]).sin();
        }),
        unit_constants(),
    )
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

#[test]
fn constant_and_mass_functionals_have_zero_generator() {
    let model = skew_model();
    let mu = random_measure(2, 6, 1, 1.7);
    let pi = mu.normalize().unwrap();
    for u in [builtin("mass", 2).unwrap(), builtin("constant", 2).unwrap()] {
        assert!(apply_l(&model, u.as_ref(), &mu).unwrap().value.abs() < 1e-13);
        assert!(apply_lks(&model, u.as_ref(), &pi).unwrap().value.abs() < 1e-13);
        assert!(apply_l_cylindrical(&model, &u, &mu).unwrap().value.abs() < 1e-13);
    }
}

#[test]
fn linear_functional_reduces_to_intensity_generator() {
    let model = skew_model();
    let a = model.generator_a();
    let mu = random_measure(2, 7, 2, 2.3);
    let pi = mu.normalize().unwrap();
    for psi in [TestFunction::tanh_coordinate(2, 0), TestFunction::sine(2, 1, 0.7, 0.2), TestFunction::squared_norm(2)]
    {
        let u = CylindricalFunctional::linear(psi.clone());
        let expect = |m: &ParticleMeasure| m.atoms().map(|(x, w)| w * a.apply(&psi, x).unwrap()).sum::<f64>();
        let z = apply_l(&model, &u, &mu).unwrap();
        assert!(close(z.value, expect(&mu), 1e-12), "{} vs {}", z.value, expect(&mu));
        let ks = apply_lks(&model, &u, &pi).unwrap();
        let zp = apply_l(&model, &u, &pi).unwrap();
        assert!(close(ks.value, expect(&pi), 1e-12));
        assert!(close(ks.value, zp.value, 1e-12));
        let t = z.terms;
        assert_eq!((t.hh, t.cross, t.sigma_bar_second), (0.0, 0.0, 0.0));
    }
}

/// Drift of `⟨ρ,ψ⟩²` and `⟨π,ψ⟩²` from the scalar Itô formula applied to
/// `d⟨ρ,ψ⟩ = ⟨ρ,Aψ⟩dt + ⟨ρ,hψ + Bψ⟩·dY` and
/// `d⟨π,ψ⟩ = ⟨π,Aψ⟩dt + (⟨π,hψ + Bψ⟩ − ⟨π,h⟩⟨π,ψ⟩)·dI`.
fn scalar_ito_drift(model: &FilteringModel, psi: &TestFunction, mu: &ParticleMeasure, normalized: bool) -> f64 {
    let d = mu.dim();
    let a = model.generator_a();
    let b = model.generator_b();
    let r = mu.integrate(psi).unwrap();
    let ra = mu.integrate_fn(|x| a.apply(psi, x).unwrap());
    let mut q = mu.integrate_vec(d, |x, o| {
        let h = model.obs(x);
        let bx = b.apply(psi, x);
        let p = psi.value(x);
        for k in 0..d {
            o[k] = h[k] * p + bx[k];
        }
    });
    if normalized {
        let ph = mu.integrate_vec(d, |x, o| o.copy_from_slice(&model.obs(x)));
        for k in 0..d {
            q[k] -= ph[k] * r;
        }
    }
    2.0 * r * ra + q.iter().map(|v| v * v).sum::<f64>()
}

#[test]
fn quadratic_functional_matches_scalar_ito_drift() {
    let models = [(skew_model(), 2usize), (ou_bounded(1, 10.0, 1.0, 0.3, 1.0).unwrap(), 1)];
    for (model, d) in &models {
        for seed in 0..5 {
            let mu = random_measure(*d, 5, 10 + seed, 0.4 + seed as f64);
            let pi = mu.normalize().unwrap();
            for psi in [TestFunction::tanh_coordinate(*d, 0), TestFunction::gaussian_bump(vec![0.3; *d], 1.2)] {
                let u = CylindricalFunctional::scalar(ScalarFunction::square(), psi.clone());
                let z = apply_l(model, &u, &mu).unwrap().value;
                assert!(close(z, scalar_ito_drift(model, &psi, &mu, false), 1e-11), "zakai {z}");
                let k = apply_lks(model, &u, &pi).unwrap().value;
                assert!(close(k, scalar_ito_drift(model, &psi, &pi, true), 1e-11), "ks {k}");
            }
        }
    }
}

#[test]
fn pairwise_and_factorized_assembly_agree() {
    let model = skew_model();
    let mut names: Vec<&str> = NAMES.to_vec();
    names.extend(EXTRA_NAMES);
    for name in names {
        let u = builtin(name, 2).unwrap();
        for seed in 0..3 {
            let mu = random_measure(2, 6, 30 + seed, 1.3);
            let pi = mu.normalize().unwrap();
            let a = apply_l(&model, u.as_ref(), &mu).unwrap();
            let b = apply_l_cylindrical(&model, &u, &mu).unwrap();
            for ((n, x), (_, y)) in a.terms.named().into_iter().zip(b.terms.named()) {
                assert!(close(x, y, 1e-11), "{name} {n}: {x} vs {y}");
            }
            let a = apply_lks(&model, u.as_ref(), &pi).unwrap();
            let b = apply_lks_cylindrical(&model, &u, &pi).unwrap();
            assert_eq!(a.terms.named().len(), 9);
            for ((n, x), (_, y)) in a.terms.named().into_iter().zip(b.terms.named()) {
                assert!(close(x, y, 1e-11), "{name} ks {n}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn breakdown_sums_to_value() {
    let model = skew_model();
    let u = builtin("product_two_integrals", 2).unwrap();
    let pi = random_measure(2, 5, 3, 1.0);
    for ev in [apply_l(&model, u.as_ref(), &pi).unwrap(), apply_lks(&model, u.as_ref(), &pi).unwrap()] {
        assert_eq!(ev.value, ev.terms.sum());
    }
    assert_eq!(apply_lks(&model, u.as_ref(), &pi).unwrap().kind, GeneratorKind::KushnerStratonovich);
}

#[test]
fn generator_is_linear() {
    let model = skew_model();
    let names = ["tanh_of_linear", "product_two_integrals", "tanh_of_second_moment", "sin_of_linear"];
    let mut s = Stream::new(99, 0, 1);
    for i in 0..names.len() {
        for j in 0..names.len() {
            let (u, v) = (builtin(names[i], 2).unwrap(), builtin(names[j], 2).unwrap());
            let (a, b) = (s.normal(), s.normal());
            let w = CylindricalFunctional::linear_combination(a, &u, b, &v).unwrap();
            let mu = random_measure(2, 5, 40 + (i * 4 + j) as u64, 1.0);
            let lw = apply_l(&model, &w, &mu).unwrap().value;
            let lu = apply_l(&model, u.as_ref(), &mu).unwrap().value;
            let lv = apply_l(&model, v.as_ref(), &mu).unwrap().value;
            assert!((lw - (a * lu + b * lv)).abs() < 1e-12 * (1.0 + lw.abs()), "{lw} vs {}", a * lu + b * lv);
            let kw = apply_lks(&model, &w, &mu).unwrap().value;
            let ku = apply_lks(&model, u.as_ref(), &mu).unwrap().value;
            let kv = apply_lks(&model, v.as_ref(), &mu).unwrap().value;
            assert!((kw - (a * ku + b * kv)).abs() < 1e-12 * (1.0 + kw.abs()));
        }
    }
}

#[test]
fn unobserved_uncorrelated_model_has_no_second_order_terms() {
    let model = brownian(0.8, 0.0, 0.0);
    let mu = random_measure(1, 6, 5, 2.0);
    for name in ["tanh_of_linear", "product_two_integrals", "tanh_of_second_moment"] {
        let u = builtin(name, 1).unwrap();
        let ev = apply_l(&model, u.as_ref(), &mu).unwrap();
        let t = ev.terms;
        assert_eq!((t.hh, t.cross, t.sigma_bar_second, t.sigma_bar_trace), (0.0, 0.0, 0.0, 0.0));
        let a = model.generator_a();
        let st = u.as_ref();
        let direct = mu.atoms().map(|(x, w)| {
            let h = 1e-4;
            let f = |y: f64| st.flat_derivative(&mu, &[y]).unwrap();
            let d2 = (f(x[0] + h) - 2.0 * f(x[0]) + f(x[0] - h)) / (h * h);
            let d1 = (f(x[0] + h) - f(x[0] - h)) / (2.0 * h);
            w * a.apply_with(x, &[d1], &[d2])
        });
        let direct: f64 = direct.sum();
        assert!((ev.value - direct).abs() < 1e-5 * (1.0 + direct.abs()), "{} vs {direct}", ev.value);
    }
}

/// On probability measures the Zakai generator of the 1-homogeneous extension `μ ↦ Φ(μ/μ(ℝᵈ))`
/// coincides with the Kushner–Stratonovich generator of `Φ`.
#[test]
fn zakai_generator_of_homogeneous_lift_is_ks_generator() {
    let model = skew_model();
    let pi = random_measure(2, 5, 21, 1.0);
    for name in ["tanh_of_linear", "tanh_of_second_moment", "product_two_integrals", "quadratic_of_linear"] {
        let phi: Arc<dyn MeasureFunctional> = builtin(name, 2).unwrap();
        let lift = HomogeneousLift::new(Arc::clone(&phi));
        let zakai = apply_l(&model, &lift, &pi).unwrap().value;
        let ks = apply_lks(&model, phi.as_ref(), &pi).unwrap().value;
        let ks_lift = apply_lks(&model, &lift, &pi).unwrap().value;
        assert!(close(zakai, ks, 1e-10), "{name}: {zakai} vs {ks}");
        assert!(close(ks_lift, ks, 1e-10), "{name}: {ks_lift} vs {ks}");
    }
}

#[test]
fn ks_generator_rejects_unnormalized_input() {
    let model = skew_model();
    let mu = random_measure(2, 4, 6, 1.5);
    let u = builtin("tanh_of_linear", 2).unwrap();
    assert!(apply_lks(&model, u.as_ref(), &mu).is_err());
    assert!(apply_lks_cylindrical(&model, &u, &mu).is_err());
    let bad = random_measure(3, 4, 6, 1.0);
    assert!(apply_l(&model, u.as_ref(), &bad).is_err());
}

fn ou() -> Arc<FilteringModel> {
    Arc::new(ou_bounded(1, 10.0, 1.0, 0.3, 1.0).unwrap())
}

fn flow_on(seed: u64, dt: f64, steps: usize, per_atom: usize) -> ZakaiFlow {
    let path = Arc::new(NoisePath::generate(seed, 0, 1, dt, steps));
    let mu = ParticleMeasure::from_pairs(&[(-0.5, 0.3), (0.4, 0.5), (1.1, 0.2)]).unwrap();
    ZakaiFlow::new(ou(), path, 0, &mu, FlowOptions::replicated(per_atom)).unwrap()
}

#[test]
fn constant_functional_has_zero_residual() {
    let u = builtin("constant", 1).unwrap();
    let r = ito_residual_zakai(&mut flow_on(1, 1e-2, 50, 4), &u).unwrap();
    assert_eq!(r.residual, 0.0);
    assert_eq!(r.terms.len(), 8);
    let r = ito_residual_ks(&mut flow_on(1, 1e-2, 50, 4), &u).unwrap();
    assert_eq!(r.residual, 0.0);
    assert_eq!(r.terms.len(), 12);
    let td = TimeDependentFunctional::new((*u).clone(), |_| 0.0, |_| 0.0, |_| 2.5, |_| 0.0);
    let r = ito_residual_time_dependent(&mut flow_on(1, 1e-2, 50, 4), &td, Equation::Zakai).unwrap();
    assert_eq!(r.residual, 0.0);
    assert_eq!(r.initial, 2.5);
}

#[test]
fn stationary_time_dependent_target_matches_plain_residual() {
    let u = builtin("tanh_of_linear", 1).unwrap();
    let a = ito_residual_zakai(&mut flow_on(2, 1e-2, 60, 8), &u).unwrap();
    let td = TimeDependentFunctional::stationary((*u).clone());
    let b = ito_residual_time_dependent(&mut flow_on(2, 1e-2, 60, 8), &td, Equation::Zakai).unwrap();
    assert_eq!(a.residual, b.residual);
    assert_eq!(a.terms, b.terms);
}

#[test]
fn shared_flow_tracks_several_targets_consistently() {
    let u = builtin("product_two_integrals", 1).unwrap();
    let v = builtin("tanh_of_second_moment", 1).unwrap();
    let targets = [ResidualTarget::zakai((*u).clone()), ResidualTarget::ks((*v).clone())];
    let both = ito_residuals(&mut flow_on(3, 1e-2, 40, 8), &targets).unwrap();
    let a = ito_residual_zakai(&mut flow_on(3, 1e-2, 40, 8), &u).unwrap();
    let b = ito_residual_ks(&mut flow_on(3, 1e-2, 40, 8), &v).unwrap();
    assert_eq!(both[0].residual, a.residual);
    assert_eq!(both[1].residual, b.residual);
}

#[test]
fn linear_functional_residual_is_small_and_pure_ensemble_noise_without_sigma() {
    // With σ = 0 the particle system has no signal noise of its own.
    let model = Arc::new(ou_bounded(1, 10.0, 1e-12, 0.3, 1.0).unwrap());
    let u = CylindricalFunctional::linear(TestFunction::tanh_coordinate(1, 0));
    let mut res = vec![];
    for dt in [4e-3, 1e-3] {
        let path = Arc::new(NoisePath::generate(5, 0, 1, dt, (1.0 / dt) as usize));
        let mu = ParticleMeasure::from_pairs(&[(-0.5, 0.5), (0.8, 0.5)]).unwrap();
        let mut f = ZakaiFlow::new(Arc::clone(&model), path, 0, &mu, FlowOptions::default()).unwrap();
        let r = ito_residual_zakai(&mut f, &u).unwrap();
        assert!(r.ensemble_first.abs() < 1e-9);
        res.push(r.residual.abs() / r.scale());
    }
    assert!(res[0] < 0.05 && res[1] < 0.02, "{res:?}");
}

fn log_xi(f: &ZakaiFlow) -> f64 {
    let dt = f.path().dt();
    f.records()
        .iter()
        .enumerate()
        .map(|(m, r)| {
            let c = r.rho_h[0] / r.mass;
            c * f.path().dy(m)[0] - 0.5 * c * c * dt
        })
        .sum()
}

#[test]
fn residual_process_has_no_drift() {
    // u(ρ_T) − u(ρ_0) − ∫𝓛u(ρ)dt, corrected for the particles' own bracket term, is a
    // Q-martingale increment.
    let u = builtin("tanh_of_linear", 1).unwrap();
    for eq in [Equation::Zakai, Equation::Ks] {
        let vals: Vec<f64> = (0..1000)
            .map(|seed| {
                let mut f = flow_on(1000 + seed, 2e-2, 25, 3);
                let r = ito_residuals(
                    &mut f,
                    &[ResidualTarget::new(TimeDependentFunctional::stationary((*u).clone()), eq)],
                )
                .unwrap()
                .remove(0);
                let gen: f64 = r
                    .terms
                    .iter()
                    .filter(|t| !t.name.ends_with("_dy") && !t.name.ends_with("_di"))
                    .map(|t| t.value)
                    .sum();
                let m = r.lhs - gen - r.ensemble_second;
                match eq {
                    Equation::Zakai => m,
                    // The innovation is a martingale under the physical measure, so the
                    // Q-expectation is taken against the density ξ_T.
                    Equation::Ks => m * log_xi(&f).exp(),
                }
            })
            .collect();
        let s = SampleSummary::from_slice(&vals);
        assert!(s.mean.abs() < 3.0 * s.std_error, "{eq:?}: {} ± {}", s.mean, s.std_error);
    }
}
