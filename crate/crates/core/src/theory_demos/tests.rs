use std::f64::consts::{FRAC_PI_4, FRAC_PI_6};

use proptest::prelude::*;

use super::*;
use crate::topology_metrics::Winding;

#[test]
fn tangential_step_examples() {
    let m = magnitude_growth_step([0.0, 1.0], 0.1).unwrap();
    assert!((m.stepped_norm_sq - 1.01).abs() < 1e-15);
    let m = magnitude_growth_step([3.0, 4.0], 0.5).unwrap();
    assert!((m.stepped_norm_sq - 31.25).abs() < 1e-12);
    let m = magnitude_growth_step([3.0, 4.0], 0.0).unwrap();
    assert_eq!(m.stepped_norm_sq, 25.0);
    assert!(matches!(magnitude_growth_step([0.0, 0.0], 0.1), Err(DemoError::ZeroVector)));
}

#[test]
fn gradient_flow_preserves_the_norm() {
    for (y, eta) in [([0.0, 1.0], 0.1), ([3.0, 4.0], 0.5), ([-0.2, 0.05], 1.0)] {
        let m = magnitude_growth_step(y, eta).unwrap();
        assert!((m.flow_norm_sq - m.initial_norm_sq).abs() <= 1e-6 * m.initial_norm_sq, "{m:?}");
    }
}

proptest! {
    #[test]
    fn tangential_step_matches_closed_form(
        a in -10.0f64..10.0, b in -10.0f64..10.0, eta in 0.0f64..2.0,
    ) {
        prop_assume!(a.hypot(b) > 1e-3);
        let g = [-b, a];
        let stepped = [a - eta * g[0], b - eta * g[1]];
        let m = magnitude_growth_step([a, b], eta).unwrap();
        let closed = (a * a + b * b) * (1.0 + eta * eta);
        prop_assert!((m.stepped_norm_sq - closed).abs() <= 1e-13 * closed);
        prop_assert!((m.stepped_norm_sq - (stepped[0].powi(2) + stepped[1].powi(2))).abs() <= 1e-12 * closed);
    }
}

#[test]
fn expected_norm_growth_examples() {
    let est = expected_norm_growth_mc(1.0, 0.5, FRAC_PI_4, 1_000_000, 1).unwrap();
    assert!((est - 1.25).abs() < 0.01, "{est}");
    let est = expected_norm_growth_mc(2.0, 1.0, FRAC_PI_6, 1_000_000, 2).unwrap();
    assert!((est - 5.0).abs() < 0.02, "{est}");
    assert_eq!(expected_norm_growth_mc(1.7, 0.0, FRAC_PI_4, 1000, 3).unwrap(), 1.7 * 1.7);
    assert!(expected_norm_growth_mc(1.0, 0.5, 2.0, 10, 0).is_err());
}

#[test]
fn expected_norm_growth_error_shrinks_with_samples() {
    let mean_err = |n: usize| -> f64 {
        (0..12).map(|s| (expected_norm_growth_mc(1.0, 0.5, FRAC_PI_4, n, 100 + s).unwrap() - 1.25).abs()).sum::<f64>()
            / 12.0
    };
    let (small, large) = (mean_err(10_000), mean_err(1_000_000));
    // Hundredfold more samples should shrink the error about tenfold.
    let ratio = small / large;
    assert!((3.0..40.0).contains(&ratio), "{small} / {large} = {ratio}");
}

#[test]
fn max_angle_examples() {
    let (f, b) = max_angle_check(2.5, 2.5).unwrap();
    assert_eq!(f, 0.0);
    assert!(b < 1e-12);
    let (f, b) = max_angle_check(4.0, 1.0).unwrap();
    assert!((f - 0.8f64.acos()).abs() < 1e-15);
    assert!((f - 0.6435).abs() < 1e-4);
    assert!((f - b).abs() < 1e-4, "{f} vs {b}");
    let (f, b) = max_angle_check(100.0, 1.0).unwrap();
    assert!((f - b).abs() < 1e-4, "{f} vs {b}");
    assert!(max_angle_check(0.0, 1.0).is_err());
}

#[test]
fn closed_form_demos_pass() {
    for r in run_closed_form_demos().unwrap() {
        assert!(r.pass, "{}", r.summary());
    }
}


#[test]
fn small_steps_keep_degree_one() {
    let trace = winding_invariance_run(&perturbed_circle(1), &PlanarMap::circle(1, 1.0, 3), 2000, 0.01, 256).unwrap();
    assert_eq!(trace.steps.len(), 2001);
    let m0 = trace.steps[0].margin;
    assert!(m0 > 0.5);
    for s in &trace.steps {
        assert_eq!(s.winding, Winding::Value(1));
        assert!(s.displacement < m0 / 4.0);
    }
}

#[test]
fn small_steps_keep_degree_two() {
    let trace = winding_invariance_run(&perturbed_circle(2), &PlanarMap::circle(2, 1.0, 3), 2000, 0.01, 256).unwrap();
    assert!(trace.steps.iter().all(|s| s.winding == Winding::Value(2)));
}

#[test]
fn large_step_through_the_origin_is_flagged() {
    let err = winding_invariance_run(&PlanarMap::circle(1, 1.5, 2), &PlanarMap::circle(2, 1.0, 2), 5, 1.0, 256)
        .unwrap_err();
    let DemoError::OriginCrossed { step, trace, .. } = err else { panic!("{err}") };
    assert_eq!(step, 1);
    assert_eq!(trace.steps[0].winding, Winding::Value(1));
    assert_eq!(trace.steps[1].winding, Winding::Value(2));
}

#[test]
fn slow_descent_towards_another_degree_is_flagged() {
    // Reaching a different degree forces the curve through the origin.
    let err = winding_invariance_run(&perturbed_circle(1), &PlanarMap::circle(-1, 1.0, 3), 2000, 0.01, 256).unwrap_err();
    assert!(matches!(err, DemoError::OriginCrossed { .. }), "{err}");
}

#[test]
fn winding_trace_csv_has_one_row_per_step() {
    let trace = winding_invariance_run(&perturbed_circle(1), &PlanarMap::circle(1, 1.0, 3), 20, 0.01, 64).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("w.csv");
    write_winding_trace(&p, &trace).unwrap();
    let text = std::fs::read_to_string(p).unwrap();
    assert_eq!(text.lines().count(), 22);
    assert!(text.starts_with("step,winding,margin"));
}

#[test]
fn figure8_target_crosses_at_origin() {
    use crate::geometry::CircleAngle;
    use crate::topology_metrics::crossing_number;
    assert_eq!(figure8_target(CircleAngle::new(0.0)), [0.0, 0.0]);
    let pts: Vec<[f64; 2]> = (0..400).map(|i| figure8_target(CircleAngle::new(0.013 + TAU * i as f64 / 400.0))).collect();
    assert_eq!(crossing_number(&pts).unwrap(), 1);
}

#[test]
fn winding_demos_pass_and_write_traces() {
    let dir = tempfile::tempdir().unwrap();
    let results = run_winding_demos(Some(dir.path())).unwrap();
    assert_eq!(results.len(), 3);
    for r in &results {
        assert!(r.pass, "{}", r.summary());
        assert!(r.trace.as_ref().unwrap().exists());
    }
}
