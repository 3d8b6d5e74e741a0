use criterion::{black_box, criterion_group, criterion_main, Criterion};

use kccjet_bench::{cubic_model, sphere_model};
use kccjet_core::dynamics::{integrate_deviation, integrate_trajectory};
use kccjet_core::{kcc, parse, JetPoint};

fn bench_expr(c: &mut Criterion) {
    let src = "sin(x1)^2 * y1 + exp(t) * atan(y2) - x2^3 / (1 + y1^2)";

    c.bench_function("expr/parse", |b| {
        b.iter(|| parse(black_box(src), 2).unwrap())
    });

    let e = parse(src, 2).unwrap();
    c.bench_function("expr/diff_and_simplify", |b| {
        b.iter(|| black_box(&e).diff(kccjet_core::VarId::Velocity(0)).simplify())
    });

    let env = JetPoint::new(0.3, vec![0.7, -0.2], vec![1.1, 0.4]);
    c.bench_function("expr/eval", |b| {
        b.iter(|| black_box(&e).eval(black_box(&env)).unwrap())
    });
}

fn bench_invariants(c: &mut Criterion) {
    let sphere = sphere_model();
    c.bench_function("invariants/sphere_all_symbolic", |b| {
        b.iter(|| kcc::all_invariants(black_box(&sphere)))
    });

    let cubic = cubic_model();
    c.bench_function("invariants/cubic_deviation_curvature", |b| {
        b.iter(|| kcc::deviation_curvature(black_box(&cubic)))
    });

    let p = kcc::deviation_curvature(&sphere);
    let env = JetPoint::new(0.0, vec![1.2, 0.3], vec![0.5, 0.8]);
    c.bench_function("invariants/sphere_P_eval", |b| {
        b.iter(|| {
            for row in &p {
                for entry in row {
                    black_box(entry.eval(black_box(&env)).unwrap());
                }
            }
        })
    });
}

fn bench_integration(c: &mut Criterion) {
    let sphere = sphere_model();
    let p0 = JetPoint::new(0.0, vec![std::f64::consts::FRAC_PI_2, 0.0], vec![0.0, 1.0]);

    c.bench_function("integrate/sphere_trajectory_1000_steps", |b| {
        b.iter(|| integrate_trajectory(black_box(&sphere), black_box(&p0), 3.0, 1000).unwrap())
    });

    let traj = integrate_trajectory(&sphere, &p0, 3.0, 1000).unwrap();
    c.bench_function("integrate/sphere_deviation_1000_steps", |b| {
        b.iter(|| {
            integrate_deviation(
                black_box(&sphere),
                black_box(&traj),
                &[0.0, 0.0],
                &[1.0, 0.0],
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, bench_expr, bench_invariants, bench_integration);
criterion_main!(benches);
