use std::f64::consts::PI;

use magloc_core::field_model::{biot_savart_segments, field_multi_wire, field_two_wire, wrap_angle, MU0};
use magloc_core::optimizer::{multi_start, nelder_mead, nelder_mead_observed, OptimizerConfig};
use magloc_core::signal_proc::{fit_sinusoid, resolve_signs, AcFit, Channel, SampleWindow, SignConfig};
use magloc_core::{Conductor, ConductorLayout};
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

const UT: f64 = 1e-6;
const Y0: f64 = 0.2;
const CURRENT: f64 = 31.0;

fn clear_point() -> impl Strategy<Value = (f64, f64)> {
    (-3.0..3.0f64, -3.0..3.0f64).prop_filter("away from the wires", |&(y, z)| {
        (y - Y0).hypot(z) > 0.01 && (y + Y0).hypot(z) > 0.01
    })
}

/// Hand-written superposition of `μ0 I / 2π · (0, -dz, dy) / r²`.
fn oracle_field(y: f64, z: f64, wires: &[(f64, f64, f64)]) -> Vector3<f64> {
    wires.iter().fold(Vector3::zeros(), |acc, &(wy, wz, i)| {
        let (dy, dz) = (y - wy, z - wz);
        let r2 = dy * dy + dz * dz;
        acc + MU0 * i / (2.0 * PI) * Vector3::new(0.0, -dz, dy) / r2
    })
}

proptest! {
    #[test]
    fn closed_form_matches_hand_superposition((y, z) in clear_point()) {
        let b = field_two_wire(y, z, Y0, CURRENT).unwrap();
        let o = oracle_field(y, z, &[(Y0, 0.0, CURRENT), (-Y0, 0.0, CURRENT)]);
        prop_assert!((b - o).norm() <= 1e-12 * o.norm());
    }

    #[test]
    fn no_axial_component((y, z) in clear_point(), x in -10.0..10.0f64) {
        let layout = ConductorLayout::with_return(Y0, CURRENT, 5.0, -1.5, -2.0 * CURRENT).unwrap();
        prop_assume!(layout.clearance(y, z) > 0.01);
        let b = field_multi_wire(&Vector3::new(x, y, z), &layout).unwrap();
        prop_assert_eq!(b.x, 0.0);
    }

    #[test]
    fn mirror_symmetry((y, z) in clear_point()) {
        let a = field_two_wire(y, z, Y0, CURRENT).unwrap();
        let m = field_two_wire(-y, z, Y0, CURRENT).unwrap();
        prop_assert!((a.y - m.y).abs() <= 1e-15 * a.norm());
        prop_assert!((a.z + m.z).abs() <= 1e-15 * a.norm());
    }

    #[test]
    fn decays_along_rays(angle in -PI..PI, d in 0.41..20.0f64) {
        let (s, c) = angle.sin_cos();
        let near = field_two_wire(d * c, d * s, Y0, CURRENT).unwrap().norm();
        let far = field_two_wire(2.0 * d * c, 2.0 * d * s, Y0, CURRENT).unwrap().norm();
        prop_assert!(far < near);
    }

    #[test]
    fn superposition_of_singletons(
        (y, z) in clear_point(),
        wires in proptest::collection::vec((-4.0..4.0f64, -2.0..0.5f64, -80.0..80.0f64), 1..5),
    ) {
        prop_assume!(wires.iter().all(|&(wy, wz, _)| (y - wy).hypot(z - wz) > 0.01));
        let layout = ConductorLayout::new(wires.iter().map(|&(a, b, i)| Conductor::new(a, b, i)).collect()).unwrap();
        let p = Vector3::new(0.0, y, z);
        let whole = field_multi_wire(&p, &layout).unwrap();
        let parts = wires.iter().fold(Vector3::zeros(), |acc, &(a, b, i)| {
            let single = ConductorLayout::new(vec![Conductor::new(a, b, i)]).unwrap();
            acc + field_multi_wire(&p, &single).unwrap()
        });
        let scale = wires.iter().map(|&(a, b, i)| (MU0 * i / (2.0 * PI)).abs() / (y - a).hypot(z - b)).sum::<f64>();
        prop_assert!((whole - parts).norm() <= 1e-12 * scale);
    }
}

#[test]
fn long_segments_match_infinite_lines() {
    let layout = ConductorLayout::two_wire(Y0, CURRENT).unwrap();
    let mut worst = 0.0f64;
    for &(y, z) in &[(0.0, -0.5), (1.3, -1.1), (-2.5, -3.0), (4.0, 0.5), (0.35, -0.05)] {
        let seg = biot_savart_segments(&Vector3::new(0.0, y, z), &layout, 1e4).unwrap();
        let inf = field_two_wire(y, z, Y0, CURRENT).unwrap();
        worst = worst.max((seg - inf).norm() / inf.norm());
    }
    assert!(worst < 1e-5, "worst relative gap {worst:e}");
}

fn synth(d: f64, a: f64, phi: f64, noise: &[f64]) -> SampleWindow {
    let dt = 1.0 / 500.0;
    let samples = noise
        .iter()
        .enumerate()
        .map(|(k, e)| d + a * (2.0 * PI * 50.0 * k as f64 * dt + phi).cos() + e)
        .collect();
    SampleWindow::new(samples, dt, 0.0, Channel { sensor: 0, axis: 0 }).unwrap()
}

/// Linear least squares on {1, cos, sin}, solved through the normal equations.
fn linear_fit(w: &SampleWindow) -> (f64, f64, f64) {
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for (k, y) in w.samples.iter().enumerate() {
        let (s, c) = (2.0 * PI * 50.0 * w.time(k)).sin_cos();
        let row = Vector3::new(1.0, c, s);
        ata += row * row.transpose();
        aty += row * *y;
    }
    let x = ata.lu().solve(&aty).unwrap();
    (x[1].hypot(x[2]), x[0], (-x[2]).atan2(x[1]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noise_free_fit_is_optimal(d in -50.0..50.0f64, a in 1.0..30.0f64, phi in -PI..PI) {
        let fit = fit_sinusoid(&synth(d * UT, a * UT, phi, &[0.0; 100]), 50.0).unwrap();
        prop_assert!(fit.residual < 1e-18);
        prop_assert!(fit.amplitude >= 0.0);
        prop_assert!(fit.phase > -PI && fit.phase <= PI);
    }

    #[test]
    fn fit_matches_linear_least_squares(
        d in -50.0..50.0f64,
        a in 5.0..30.0f64,
        phi in -PI..PI,
        noise in proptest::collection::vec(-0.4..0.4f64, 100),
    ) {
        let noise: Vec<f64> = noise.iter().map(|e| e * UT).collect();
        let w = synth(d * UT, a * UT, phi, &noise);
        let fit = fit_sinusoid(&w, 50.0).unwrap();
        let (la, ld, lphi) = linear_fit(&w);
        prop_assert!((fit.amplitude - la).abs() <= 1e-6 * la, "{} vs {}", fit.amplitude, la);
        prop_assert!((fit.dc - ld).abs() <= 1e-6 * ld.abs().max(la));
        prop_assert!(wrap_angle(fit.phase - lphi).abs() <= 1e-6);
    }

    #[test]
    fn signs_ignore_common_phase_offset(
        phases in proptest::collection::vec(prop_oneof![-0.5..0.5f64, (PI - 0.5)..(PI + 0.5)], 12),
        amps in proptest::collection::vec(0.5..20.0f64, 12),
        offset in -PI..PI,
    ) {
        let grid = |shift: f64| -> [[AcFit; 3]; 4] {
            std::array::from_fn(|s| {
                std::array::from_fn(|a| AcFit {
                    amplitude: amps[3 * s + a] * UT,
                    dc: 0.0,
                    phase: wrap_angle(phases[3 * s + a] + shift),
                    residual: 0.0,
                    frequency: 50.0,
                })
            })
        };
        let cfg = SignConfig::default();
        let reference = Channel { sensor: 0, axis: 0 };
        let base = resolve_signs(&grid(0.0), reference, 0.0, &cfg).unwrap();
        let shifted = resolve_signs(&grid(offset), reference, 0.0, &cfg).unwrap();
        prop_assert_eq!(base, shifted);
    }
}

fn quadratic(x: &[f64]) -> f64 {
    (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 0.5).powi(2) + 0.5 * x[0] * x[1]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn best_vertex_never_worsens(x0 in -5.0..5.0f64, x1 in -5.0..5.0f64) {
        let mut trace = Vec::new();
        let r = nelder_mead_observed(quadratic, &[x0, x1], &OptimizerConfig::default(), |_, _, f| trace.push(f)).unwrap();
        prop_assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(r.iterations <= OptimizerConfig::default().max_iterations);
    }

    #[test]
    fn runs_are_bitwise_repeatable(x0 in -5.0..5.0f64, x1 in -5.0..5.0f64) {
        let cfg = OptimizerConfig::default();
        let mut first = Vec::new();
        let mut second = Vec::new();
        nelder_mead_observed(quadratic, &[x0, x1], &cfg, |_, x, f| first.push((x.to_vec(), f))).unwrap();
        nelder_mead_observed(quadratic, &[x0, x1], &cfg, |_, x, f| second.push((x.to_vec(), f))).unwrap();
        prop_assert_eq!(first, second);
    }

    #[test]
    fn multi_start_never_loses_to_a_single_start(starts in proptest::collection::vec((-4.0..4.0f64, -4.0..4.0f64), 1..6)) {
        let wavy = |x: &[f64]| (3.0 * x[0]).sin() * (2.0 * x[1]).cos() + 0.05 * (x[0] * x[0] + x[1] * x[1]);
        let starts: Vec<Vec<f64>> = starts.into_iter().map(|(a, b)| vec![a, b]).collect();
        let cfg = OptimizerConfig::default();
        let best = multi_start(wavy, &starts, &cfg).unwrap();
        for s in &starts {
            prop_assert!(best.f_min <= nelder_mead(wavy, s, &cfg).unwrap().f_min);
        }
    }
}
