//! Hot-path benchmarks: contact resolution, the closed control loop, the
//! primitive rollout, and GP fit/predict at dataset-like sizes.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use nalgebra::{Vector2, Vector3};
use rand::Rng as _;
use std::hint::black_box;

use pih_bench::{fitted_primitive, quiet_config};
use pih_core::contact::ContactSim;
use pih_core::dmp;
use pih_core::gac::{gac_step, GacState};
use pih_core::gp::{FitOptions, GprModel, KernelParams};
use pih_core::pipeline::collect_trial;
use pih_core::rng::rng_from_seed;

fn bench_support_region(c: &mut Criterion) {
    c.bench_function("geometry/support_region", |b| {
        let mut angle = 0.0f64;
        b.iter(|| {
            angle += 0.37;
            let d = Vector2::new(5.0 * angle.cos(), 5.0 * angle.sin());
            black_box(pih_core::geometry::support_region(10.0, 11.0, d))
        })
    });
}

fn bench_equilibrium_step(c: &mut Criterion) {
    let cfg = quiet_config();
    c.bench_function("contact/resolve_equilibrium", |b| {
        let mut sim = ContactSim::new(
            cfg.contact.clone(),
            cfg.gac.stiffness,
            Vector3::new(0.0, 0.0, 40.0),
        )
        .unwrap();
        let mut k = 0u64;
        b.iter(|| {
            k += 1;
            let x_c = Vector3::new(4.0, 1.0, -1.0 - (k % 100) as f64 * 1e-4);
            black_box(sim.resolve_equilibrium(&x_c).unwrap())
        })
    });
}

fn bench_closed_loop(c: &mut Criterion) {
    let cfg = quiet_config();
    c.bench_function("gac/closed_loop_1000_steps", |b| {
        b.iter_batched(
            || {
                ContactSim::new(
                    cfg.contact.clone(),
                    cfg.gac.stiffness,
                    Vector3::new(4.0, 0.0, 1.0),
                )
                .unwrap()
            },
            |mut sim| {
                let mut state = GacState::at(Vector3::new(4.0, 0.0, 1.0));
                let mut wrench = sim.resolve_equilibrium(&state.commanded).unwrap().1;
                for _ in 0..1000 {
                    state = gac_step(
                        &state,
                        &Vector3::new(0.0, 0.0, -0.01),
                        &wrench.force(),
                        &cfg.gac,
                    );
                    wrench = sim.resolve_equilibrium(&state.commanded).unwrap().1;
                }
                black_box(wrench)
            },
            BatchSize::SmallInput,
        )
    });
}

fn bench_dmp(c: &mut Criterion) {
    let cfg = quiet_config();
    let (demo, params) = fitted_primitive(&cfg);
    c.bench_function("dmp/fit_8400_samples", |b| {
        b.iter(|| black_box(dmp::fit(&demo, cfg.dmp.n_basis, cfg.dmp.alpha).unwrap()))
    });
    c.bench_function("dmp/rollout_8400_steps", |b| {
        b.iter(|| {
            black_box(
                dmp::rollout(
                    &params,
                    demo.start(),
                    demo.end() + Vector3::new(3.0, -2.0, 0.0),
                    demo.dt(),
                    demo.duration(),
                )
                .unwrap(),
            )
        })
    });
}

fn bench_collection_trial(c: &mut Criterion) {
    let cfg = quiet_config();
    let (_, params) = fitted_primitive(&cfg);
    c.bench_function("pipeline/collect_trial", |b| {
        b.iter(|| {
            black_box(
                collect_trial(&cfg, &params, Vector2::new(2.0, 4.5), 0, 7).unwrap(),
            )
        })
    });
}

fn gp_fixture(n: usize) -> (Vec<[f64; 6]>, Vec<f64>) {
    let mut rng = rng_from_seed(5);
    let rows: Vec<[f64; 6]> = (0..n)
        .map(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0)))
        .collect();
    let targets = rows.iter().map(|r| (r[3] * 0.8).sin() + 0.2 * r[4]).collect();
    (rows, targets)
}

fn bench_gp(c: &mut Criterion) {
    let (rows, targets) = gp_fixture(200);
    c.bench_function("gp/fit_n200_single_start", |b| {
        let opts = FitOptions {
            restarts: 1,
            max_iters: 15,
            screen_iters: 0,
            ..FitOptions::default()
        };
        b.iter(|| {
            black_box(GprModel::fit(&rows, &targets, &KernelParams::default(), &opts).unwrap())
        })
    });

    let (rows, targets) = gp_fixture(960);
    let model = GprModel::from_parts(
        rows.clone(),
        targets,
        pih_core::gp::InputNormalizer::fit(&rows),
        KernelParams::default(),
    )
    .unwrap();
    c.bench_function("gp/predict_n960", |b| {
        let probe = [0.3, -0.4, 1.1, 0.2, -0.9, 0.5];
        b.iter(|| black_box(model.predict(&probe).unwrap()))
    });
}

criterion_group!(
    benches,
    bench_support_region,
    bench_equilibrium_step,
    bench_closed_loop,
    bench_dmp,
    bench_collection_trial,
    bench_gp
);
criterion_main!(benches);
