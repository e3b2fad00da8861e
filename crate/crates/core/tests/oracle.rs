use mkolmo_core::filtering::{brownian, ou_bounded, FlowOptions, ParticleInit, ZakaiFlow};
use mkolmo_core::measure::ParticleMeasure;
use mkolmo_core::noise::NoisePath;
use mkolmo_core::oracle::{backward_pde_solve, forward_fp_solve, zakai_grid_solve, Grid1D, GridInit, GridSpec};
use mkolmo_core::OracleError;
use std::f64::consts::PI;
use std::sync::Arc;

fn gaussian(var: f64) -> impl Fn(f64) -> f64 {
    move |x| (-0.5 * x * x / var).exp() / (2.0 * PI * var).sqrt()
}

#[test]
fn heat_kernel_evolution() {
    let model = brownian(1.0, 0.0, 0.0);
    let spec = GridSpec::new(8.0, 0.01);
    let init = Grid1D::from_fn(spec, gaussian(0.25)).unwrap();
    let path = NoisePath::generate(1, 0, 1, 1e-2, 100);
    let z = zakai_grid_solve(&model, &GridInit::Density(init.clone()), &path, spec, None, None).unwrap();
    assert!(z.terminal.l1_distance(gaussian(1.25)) < 1e-3);
    let f = forward_fp_solve(&model, &init, 1.0, None).unwrap();
    assert!(f.l1_distance(gaussian(1.25)) < 1e-3);
}

#[test]
fn unobserved_mass_is_conserved() {
    let model = ou_bounded(1, 10.0, 1.0, 0.3, 0.0).unwrap();
    let spec = GridSpec::new(8.0, 0.02);
    let mu = ParticleMeasure::from_pairs(&[(0.5, 2.0)]).unwrap();
    let path = NoisePath::generate(2, 0, 1, 1e-3, 1000);
    let z = zakai_grid_solve(&model, &GridInit::Atoms { mu, bandwidth: None }, &path, spec, None, None).unwrap();
    for m in &z.masses {
        assert!((m - 2.0).abs() < 1e-10, "{m}");
    }
}

#[test]
fn backward_solutions_with_closed_forms() {
    let spec = GridSpec::new(8.0, 0.02);
    let bm = brownian(1.0, 0.0, 0.0);
    let one = backward_pde_solve(&bm, |_| 1.0, 0.0, 1.0, spec, None).unwrap();
    assert!(one.values.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    let id = backward_pde_solve(&bm, |x| x, 0.2, 1.0, spec, None).unwrap();
    for x in [-3.0, 0.0, 1.7] {
        assert!((id.at(x) - x).abs() < 1e-10);
    }
    let ou = ou_bounded(1, 10.0, 1.0, 0.3, 1.0).unwrap();
    let v = backward_pde_solve(&ou, |x| x, 0.25, 1.0, spec, None).unwrap();
    for x in [-2.0, -0.3, 0.8, 2.5] {
        assert!((v.at(x) - x * (-0.75f64).exp()).abs() < 1e-4, "{} vs {}", v.at(x), x * (-0.75f64).exp());
    }
}

#[test]
fn forward_and_backward_solutions_are_dual() {
    let model = ou_bounded(1, 10.0, 1.0, 0.3, 1.0).unwrap();
    let spec = GridSpec::new(8.0, 0.01);
    let psi = |x: f64| x.tanh() + 0.2 * x * x;
    let x0 = 0.7;
    let mu = ParticleMeasure::from_pairs(&[(x0, 1.0)]).unwrap();
    let start = Grid1D::from_atoms(spec, &mu, 0.03).unwrap();
    let fwd = forward_fp_solve(&model, &start, 0.6, None).unwrap();
    let back = backward_pde_solve(&model, psi, 0.4, 1.0, spec, None).unwrap();
    let smoothed = start.integrate(|x| back.at(x));
    assert!((fwd.integrate(psi) - smoothed).abs() < 1e-3, "{} vs {}", fwd.integrate(psi), smoothed);
    assert!((back.at(x0) - smoothed).abs() < 1e-3);
}

#[test]
fn grid_solver_converges_at_second_order() {
    let model = ou_bounded(1, 10.0, 1.0, 0.3, 1.0).unwrap();
    let init = |spec| Grid1D::from_fn(spec, gaussian(0.5)).unwrap();
    let path = NoisePath::generate(4, 0, 1, 1e-3, 500);
    let mut vals = vec![];
    for (dx, k) in [(0.08, 2usize), (0.04, 4), (0.02, 8)] {
        let spec = GridSpec::new(8.0, dx);
        let z = zakai_grid_solve(&model, &GridInit::Density(init(spec)), &path, spec, Some(k), None).unwrap();
        vals.push([z.integrate(|x| x * x), z.integrate(f64::tanh)]);
    }
    for i in 0..2 {
        let d1 = (vals[0][i] - vals[1][i]).abs();
        let d2 = (vals[1][i] - vals[2][i]).abs();
        assert!(d2 <= 0.5 * d1 + 1e-6, "functional {i}: {d1} then {d2}");
    }
}

#[test]
fn stability_bound_is_enforced() {
    let model = brownian(1.0, 0.0, 0.0);
    let spec = GridSpec::new(4.0, 0.01);
    let path = NoisePath::generate(1, 0, 1, 1e-3, 10);
    let init = GridInit::Density(Grid1D::from_fn(spec, gaussian(1.0)).unwrap());
    assert!(matches!(zakai_grid_solve(&model, &init, &path, spec, Some(1), None), Err(OracleError::Cfl { .. })));
    assert!(matches!(
        zakai_grid_solve(&ou_bounded(2, 1.0, 1.0, 0.0, 1.0).unwrap(), &init, &path, spec, None, None),
        Err(OracleError::Dimension(2))
    ));
}

#[test]
fn particle_and_grid_agree_on_a_shared_path() {
    let model = Arc::new(ou_bounded(1, 10.0, 1.0, 0.3, 1.0).unwrap());
    let path = Arc::new(NoisePath::generate(21, 0, 1, 1e-3, 500));
    let mu = ParticleMeasure::from_pairs(&[(1.0, 1.0)]).unwrap();
    let spec = GridSpec::new(8.0, 0.02);
    let grid = zakai_grid_solve(&model, &GridInit::Atoms { mu: mu.clone(), bandwidth: None }, &path, spec, None, None)
        .unwrap();
    let opts = FlowOptions { init: ParticleInit::Replicated { per_atom: 10_000 }, ..Default::default() };
    let mut flow = ZakaiFlow::new(model, path, 0, &mu, opts).unwrap();
    flow.run_to_end().unwrap();
    let rho = flow.measure();
    for (name, psi) in [("one", (|_| 1.0) as fn(f64) -> f64), ("x2", |x| x * x), ("sech", |x: f64| 1.0 / x.cosh())] {
        let p = rho.integrate_fn(|x| psi(x[0]));
        let g = grid.integrate(psi);
        assert!((p - g).abs() / g.abs() < 0.03, "{name}: particle {p} grid {g}");
    }
}
