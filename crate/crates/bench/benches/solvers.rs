use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use magloc_core::analytic::{forward_readings, solve_pose, AnalyticConfig};
use magloc_core::numeric::{solve, NumericConfig, SolverState};
use magloc_core::signal_proc::{fit_sinusoid, Channel};
use magloc_core::{Attitude, ConductorLayout, PhasorReading, SampleWindow, SensorRig};

fn fit(c: &mut Criterion) {
    let dt = 1.0 / 500.0;
    let samples = (0..100)
        .map(|k| {
            let t = k as f64 * dt;
            -31e-6 + 12e-6 * (2.0 * PI * 50.0 * t + 0.7).cos() + 0.2e-6 * (7.3 * t).sin()
        })
        .collect();
    let window = SampleWindow::new(samples, dt, 0.0, Channel { sensor: 0, axis: 0 }).unwrap();
    c.bench_function("fit_sinusoid/100 samples", |b| {
        b.iter(|| fit_sinusoid(black_box(&window), 50.0).unwrap())
    });
}

fn solvers(c: &mut Criterion) {
    let rig = SensorRig::default();
    let pair = ConductorLayout::two_wire(0.2, 31.0).unwrap();
    let three = ConductorLayout::with_return(0.2, 31.0, 5.0, -1.5, -62.0).unwrap();
    let attitude = Attitude::level(0.3, 0.05);

    let reading = PhasorReading::new(0.0, forward_readings(0.4, -1.1, &attitude, &rig, &pair).unwrap());
    let cfg = AnalyticConfig::default();
    c.bench_function("analytic solve_pose", |b| {
        b.iter(|| solve_pose(black_box(&reading), &rig, &pair, None, &cfg).unwrap())
    });

    let numeric = NumericConfig::default();
    let warm = SolverState {
        previous: Some([1.1, -0.2]),
        residual: 0.0,
    };
    for (name, layout) in [("numeric solve/2 wires", &pair), ("numeric solve/3 wires", &three)] {
        let b_field = forward_readings(0.4, -1.1, &attitude, &rig, layout).unwrap();
        c.bench_function(name, |b| {
            b.iter(|| solve(0.0, black_box(&b_field), &rig, &attitude, layout, &warm, &numeric).unwrap())
        });
    }
}

criterion_group!(benches, fit, solvers);
criterion_main!(benches);
