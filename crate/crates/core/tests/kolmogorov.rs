use mkolmo_core::calculus::registry::{builtin, test_function};
use mkolmo_core::calculus::{CylindricalFunctional, HomogeneousLift, MeasureFunctional, ScalarFunction};
use mkolmo_core::filtering::{brownian, gaussian_atoms, linear_gauss, ou_bounded, FilteringModel};
use mkolmo_core::generator::GeneratorKind;
use mkolmo_core::kolmogorov::{
    finite_difference_check, flat_derivative_u, flat_identity_check, markov_consistency, pde_residual, pde_residuals,
    solve_ks_kolmogorov, solve_zakai_kolmogorov, McConfig,
};
use mkolmo_core::measure::{preset, ParticleMeasure, TestFunction};
use mkolmo_core::noise::Stream;
use mkolmo_core::oracle::{backward_pde_solve, kalman_bucy, GridSpec, KalmanMode};
use std::sync::Arc;

fn cfg(replicas: usize, particles: usize, dt: f64, seed: u64) -> McConfig {
    McConfig { replicas, particles, dt, seed, horizon: 1.0 }
}

fn ou() -> Arc<FilteringModel> {
    Arc::new(ou_bounded(1, 10.0, 1.0, 0.3, 1.0).unwrap())
}

fn mix8() -> ParticleMeasure {
    preset("mix8", 1).unwrap()
}

fn tanh_of_linear() -> Arc<CylindricalFunctional> {
    builtin("tanh_of_linear", 1).unwrap()
}

fn random_measure(atoms: usize, seed: u64) -> ParticleMeasure {
    let mut s = Stream::new(seed, 0, 11);
    let pairs: Vec<(f64, f64)> = (0..atoms).map(|_| (1.5 * s.normal(), 0.2 + s.uniform())).collect();
    ParticleMeasure::from_pairs(&pairs).unwrap()
}

#[test]
fn terminal_condition_is_exact() {
    let model = ou();
    let mu = mix8().scaled(1.3);
    let phi = tanh_of_linear();
    let c = cfg(20, 50, 0.01, 3);
    let z = solve_zakai_kolmogorov(&model, phi.as_ref(), &mu, 1.0, &c).unwrap();
    assert_eq!(z.value, phi.value(&mu).unwrap());
    assert_eq!(z.std_error, 0.0);
    let pi = mix8();
    let k = solve_ks_kolmogorov(&model, phi.as_ref(), &pi, 1.0, &c).unwrap();
    assert_eq!(k.value, phi.value(&pi).unwrap());
    assert_eq!(k.std_error, 0.0);
}

#[test]
fn mass_is_conserved_without_observation_drift() {
    let model = Arc::new(brownian(1.0, 0.4, 0.0));
    let mu = mix8().scaled(2.5);
    let mass = builtin("mass", 1).unwrap();
    let est = solve_zakai_kolmogorov(&model, mass.as_ref(), &mu, 0.3, &cfg(16, 64, 0.01, 1)).unwrap();
    for v in &est.per_replica {
        assert!((v - 2.5).abs() < 1e-12, "{v}");
    }
}

#[test]
fn linear_functional_matches_backward_pde() {
    let model = ou();
    let mu = mix8();
    let psi = test_function("x2", 1).unwrap();
    let phi = CylindricalFunctional::linear(psi.clone());
    let s = 0.5;
    let c = cfg(2000, 100, 5e-3, 5);
    let est = solve_zakai_kolmogorov(&model, &phi, &mu, s, &c).unwrap();
    // The total mass has known mean μ(ℝ) and shares every random number with the estimate, so it
    // serves as a control variate for the observation noise.
    let mass = solve_zakai_kolmogorov(&model, builtin("mass", 1).unwrap().as_ref(), &mu, s, &c).unwrap();
    let (u, m) = (&est.per_replica, &mass.per_replica);
    let n = u.len() as f64;
    let (mu_u, mu_m) = (est.value, mass.value);
    let cov: f64 = u.iter().zip(m).map(|(a, b)| (a - mu_u) * (b - mu_m)).sum::<f64>() / n;
    let var: f64 = m.iter().map(|b| (b - mu_m).powi(2)).sum::<f64>() / n;
    let beta = cov / var;
    let adjusted: Vec<f64> = u.iter().zip(m).map(|(a, b)| a - beta * (b - mu.total_mass())).collect();
    let value = adjusted.iter().sum::<f64>() / n;
    let v = backward_pde_solve(&model, |x| psi.value(&[x]), s, 1.0, GridSpec::new(8.0, 0.02), None).unwrap();
    let exact = v.integrate_against(&mu);
    let rel = (value - exact).abs() / exact.abs();
    assert!(rel <= 0.02, "u = {value} (raw {} ± {}), oracle {exact}, rel {rel}", est.value, est.std_error);
}

#[test]
fn constant_ks_functional_is_preserved() {
    let model = ou();
    let phi = CylindricalFunctional::constant(1, 0.7);
    let est = solve_ks_kolmogorov(&model, &phi, &mix8(), 0.0, &cfg(300, 200, 5e-3, 9)).unwrap();
    assert!((est.value - 0.7).abs() <= 3.0 * est.std_error, "{} ± {}", est.value, est.std_error);
}

#[test]
fn ks_value_of_linear_gaussian_mean_matches_riccati() {
    let (a, b, c) = (-1.0, 1.0, 1.0);
    let model = Arc::new(linear_gauss(a, b, c));
    let (m0, p0) = (0.8, 0.5);
    let pi = gaussian_atoms(m0, p0, 400, 2).unwrap();
    let phi = CylindricalFunctional::linear(TestFunction::coordinate(1, 0));
    let s = 0.25;
    let est = solve_ks_kolmogorov(&model, &phi, &pi, s, &cfg(400, 400, 5e-3, 4)).unwrap();
    let lg = model.linear_gaussian().unwrap();
    let start = pi.integrate_fn(|x| x[0]);
    let traj = kalman_bucy(lg, start, p0, KalmanMode::Expected { horizon: 1.0 - s, steps: 150 });
    let expect = traj.last().unwrap().mean;
    assert!((est.value - expect).abs() <= 3.0 * est.std_error, "{} ± {} vs {expect}", est.value, est.std_error);
}

#[test]
fn lifted_zakai_value_equals_ks_value() {
    let model = ou();
    let pi = mix8();
    let phi: Arc<dyn MeasureFunctional> = tanh_of_linear();
    let lift = HomogeneousLift::new(Arc::clone(&phi));
    let c = cfg(200, 200, 5e-3, 12);
    let z = solve_zakai_kolmogorov(&model, &lift, &pi, 0.2, &c).unwrap();
    let k = solve_ks_kolmogorov(&model, phi.as_ref(), &pi, 0.2, &c.clone()).unwrap();
    let se = z.std_error.hypot(k.std_error);
    assert!((z.value - k.value).abs() <= 3.0 * se, "{} vs {} (se {se})", z.value, k.value);
}

#[test]
fn flat_derivative_of_linear_functional_is_backward_solution() {
    let model = Arc::new(ou_bounded(1, 10.0, 1.0, 0.0, 0.0).unwrap());
    let psi = TestFunction::sine(1, 0, 1.0, 1.2);
    let phi = CylindricalFunctional::linear(psi.clone());
    let s = 0.4;
    let xs = [vec![-0.8], vec![0.3], vec![1.1]];
    let est = flat_derivative_u(&model, &phi, &mix8(), s, &xs, &cfg(200, 400, 2e-3, 6)).unwrap();
    let v = backward_pde_solve(&model, |x| psi.value(&[x]), s, 1.0, GridSpec::new(8.0, 0.02), None).unwrap();
    for d in &est.derivatives {
        let exact = v.at(d.x[0]);
        let rel = (d.value - exact).abs() / exact.abs();
        assert!(rel <= 0.02, "x = {:?}: {} ± {} vs {exact}", d.x, d.value, d.std_error);
    }
}

#[test]
fn flat_derivative_of_linear_functional_does_not_depend_on_measure() {
    let model = ou();
    let phi = CylindricalFunctional::linear(TestFunction::tanh_coordinate(1, 0));
    let xs = [vec![-0.5], vec![0.9]];
    let c = cfg(150, 300, 5e-3, 21);
    let a = flat_derivative_u(&model, &phi, &mix8(), 0.3, &xs, &c).unwrap();
    let b = flat_derivative_u(&model, &phi, &random_measure(3, 4).scaled(2.0), 0.3, &xs, &McConfig { seed: 22, ..c })
        .unwrap();
    for (p, q) in a.derivatives.iter().zip(&b.derivatives) {
        let se = p.std_error.hypot(q.std_error);
        assert!((p.value - q.value).abs() <= 3.0 * se, "{} vs {} (se {se})", p.value, q.value);
    }
}

#[test]
fn flat_derivative_agrees_with_finite_difference() {
    let model = ou();
    let phi = tanh_of_linear();
    let check =
        finite_difference_check(&model, phi.as_ref(), &mix8(), 0.5, &[0.4], 1e-3, &cfg(100, 400, 5e-3, 8)).unwrap();
    assert!(check.agrees(3.0, 0.05), "{check:?}");
}

#[test]
fn flat_derivative_reconstructs_value_differences() {
    let model = ou();
    let phi = builtin("tanh_of_second_moment", 1).unwrap();
    for seed in 0..2 {
        let mu = random_measure(4, 100 + seed);
        let nu = random_measure(4, 200 + seed);
        let r = flat_identity_check(&model, phi.as_ref(), &mu, &nu, 0.5, 8, &cfg(60, 200, 1e-2, 30 + seed)).unwrap();
        assert!(r.consistent(3.0), "{r:?}");
    }
}

#[test]
fn mass_residual_vanishes_without_observation_drift() {
    let model = Arc::new(brownian(1.0, 0.5, 0.0));
    let phi: Arc<dyn MeasureFunctional> = builtin("mass", 1).unwrap();
    let r = pde_residual(&model, phi, &mix8().scaled(1.5), 0.5, 0.1, 1e-3, GeneratorKind::Zakai, &cfg(8, 40, 0.01, 2))
        .unwrap();
    for v in &r.per_replica {
        assert!(v.abs() < 1e-10, "{v}");
    }
}

#[test]
fn linear_functional_residual_contains_zero() {
    let model = ou();
    let phi: Arc<dyn MeasureFunctional> = Arc::new(CylindricalFunctional::linear(TestFunction::tanh_coordinate(1, 0)));
    let reports = pde_residuals(
        &model,
        phi,
        &mix8(),
        0.5,
        0.05,
        1e-3,
        &[GeneratorKind::Zakai, GeneratorKind::KushnerStratonovich],
        &cfg(120, 80, 5e-3, 17),
    )
    .unwrap();
    for r in &reports {
        assert!(r.residual.mean.abs() <= 3.0 * r.residual.std_error, "{:?}: {:?}", r.kind, r.residual);
    }
}

#[test]
fn residual_rejects_boundary_times_and_unnormalized_ks_input() {
    let model = ou();
    let phi: Arc<dyn MeasureFunctional> = tanh_of_linear();
    let c = cfg(2, 8, 0.01, 0);
    assert!(pde_residual(&model, Arc::clone(&phi), &mix8(), 1.0, 0.05, 1e-3, GeneratorKind::Zakai, &c).is_err());
    assert!(pde_residual(&model, Arc::clone(&phi), &mix8(), 0.02, 0.05, 1e-3, GeneratorKind::Zakai, &c).is_err());
    let heavy = mix8().scaled(2.0);
    assert!(pde_residual(&model, phi, &heavy, 0.5, 0.05, 1e-3, GeneratorKind::KushnerStratonovich, &c).is_err());
}

#[test]
fn markov_property_holds() {
    let model = ou();
    let phi = tanh_of_linear();
    let mu = random_measure(3, 5);
    let c = cfg(80, 60, 0.01, 40);
    let full = markov_consistency(&model, phi.as_ref(), &mu, 0.5, 0.5, 1, &c).unwrap();
    assert!(full.consistent(3.0), "{full:?}");
    let nested = markov_consistency(&model, phi.as_ref(), &mu, 0.4, 0.3, 4, &c).unwrap();
    assert!(nested.consistent(3.0), "{nested:?}");
    let unobserved = Arc::new(brownian(0.8, 0.0, 0.0));
    let lin = CylindricalFunctional::linear(TestFunction::sine(1, 0, 1.0, 0.0));
    let tower = markov_consistency(&unobserved, &lin, &mu, 0.2, 0.4, 2, &c).unwrap();
    assert!(tower.consistent(3.0), "{tower:?}");
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let model = ou();
    let phi = CylindricalFunctional::scalar(ScalarFunction::tanh(), TestFunction::coordinate(1, 0));
    let run =
        |threads: usize| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
                solve_zakai_kolmogorov(&model, &phi, &mix8(), 0.5, &cfg(12, 40, 0.01, 3)).unwrap().per_replica
            })
        };
    assert_eq!(run(1), run(4));
}
