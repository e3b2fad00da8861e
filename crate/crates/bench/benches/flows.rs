use criterion::{criterion_group, criterion_main, Criterion};
use mkolmo_bench::{functional, mix8, model};
use mkolmo_core::calculus::MeasureFunctional;
use mkolmo_core::filtering::{FlowOptions, ZakaiFlow};
use mkolmo_core::generator::{apply_l, apply_lks};
use mkolmo_core::noise::NoisePath;
use mkolmo_core::oracle::{zakai_grid_solve, GridInit, GridSpec};
use std::hint::black_box;
use std::sync::Arc;

fn zakai_flow(c: &mut Criterion) {
    let model = model();
    let mu = mix8();
    let path = Arc::new(NoisePath::generate(1, 0, 1, 1e-3, 100));
    c.bench_function("zakai_flow_1000_particles_100_steps", |b| {
        b.iter(|| {
            let mut flow = ZakaiFlow::new(model.clone(), path.clone(), 0, &mu, FlowOptions::replicated(125)).unwrap();
            flow.run_to_end().unwrap();
            black_box(flow.total_mass())
        })
    });
}

fn generators(c: &mut Criterion) {
    let model = model();
    let mu = mix8();
    for name in ["tanh_of_linear", "tanh_of_second_moment"] {
        let phi = functional(name);
        c.bench_function(&format!("apply_l_{name}"), |b| {
            b.iter(|| black_box(apply_l(&model, phi.as_ref(), &mu).unwrap().value))
        });
        c.bench_function(&format!("apply_lks_{name}"), |b| {
            b.iter(|| black_box(apply_lks(&model, phi.as_ref(), &mu).unwrap().value))
        });
    }
}

fn derivatives(c: &mut Criterion) {
    let mu = mix8();
    let phi = functional("tanh_of_second_moment");
    c.bench_function("flat_derivative2_mix8", |b| {
        b.iter(|| black_box(phi.flat_derivative2(&mu, &[0.3], &[-0.7]).unwrap()))
    });
}

fn grid_oracle(c: &mut Criterion) {
    let model = model();
    let mu = mix8();
    let path = NoisePath::generate(1, 0, 1, 1e-2, 20);
    let init = GridInit::Atoms { mu, bandwidth: None };
    c.bench_function("zakai_grid_solve_dx_0.02_t_0.2", |b| {
        b.iter(|| {
            black_box(
                zakai_grid_solve(&model, &init, &path, GridSpec::new(8.0, 0.02), None, None).unwrap().terminal.mass(),
            )
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = zakai_flow, generators, derivatives, grid_oracle
}
criterion_main!(benches);
