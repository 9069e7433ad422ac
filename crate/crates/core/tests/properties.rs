use graybox_core::controller::{alpha_at, combine, zeroth_order_estimate};
use graybox_core::metrics::{alpha_sum, alpha_sum_envelope};
use graybox_core::objective::ObjectiveSpec;
use graybox_core::plant::make_benchmark_plant;
use graybox_core::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn vector(p: usize, range: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-range..range, p).prop_map(DVector::from_vec)
}

fn random_box(p: usize) -> impl Strategy<Value = BoxConstraint> {
    (vector(p, 5.0), prop::collection::vec(0.0..4.0f64, p)).prop_map(|(lo, width)| {
        let hi = &lo + DVector::from_vec(width);
        BoxConstraint::new(lo, hi).unwrap()
    })
}

fn schedules() -> impl Strategy<Value = AlphaSchedule> {
    prop_oneof![
        (0.0..=1.0f64).prop_map(|alpha| AlphaSchedule::Fixed { alpha }),
        (0.01..500.0f64).prop_map(|c| AlphaSchedule::StaticBounded { c }),
        (0.01..500.0f64, 0.0..2.0f64).prop_map(|(c, theta)| AlphaSchedule::StaticDecay { c, theta }),
        (0.01..500.0f64).prop_map(|c| AlphaSchedule::TvBounded { c }),
        (0.01..500.0f64, 0.0..2.0f64).prop_map(|(c, theta)| AlphaSchedule::TvDecay { c, theta }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn projection_is_nonexpansive(b in random_box(6), x in vector(6, 20.0), y in vector(6, 20.0)) {
        let (px, py) = (b.project(&x), b.project(&y));
        prop_assert!((&px - &py).norm() <= (&x - &y).norm() * (1.0 + 1e-12));
        prop_assert!(b.contains(&px, 0.0));
        prop_assert_eq!(b.project(&px), px);
    }
}

proptest! {
    #[test]
    fn alpha_is_a_monotone_weight(s in schedules(), k in 0usize..1_000_000) {
        let (a, next) = (alpha_at(&s, k), alpha_at(&s, k + 1));
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(next <= a);
    }

    #[test]
    fn alpha_sum_stays_below_envelope(c in 0.01..1_000.0f64, t in 1usize..20_000) {
        let sum = alpha_sum(&AlphaSchedule::StaticBounded { c }, t);
        prop_assert!(sum <= alpha_sum_envelope(c, t));
    }

    #[test]
    fn exploration_keeps_distance_delta(seed in any::<u64>(), delta in 1e-4..1.0f64, w0 in vector(5, 3.0)) {
        let params = ControllerParams::model_free(1e-3, delta);
        let ctrl = Controller::new(params, w0.clone(), RngStream::new(seed, 0)).unwrap();
        let dist = (ctrl.pending_input() - &w0).norm();
        prop_assert!((dist - delta).abs() <= 1e-12 * delta.max(1.0));
    }

    #[test]
    fn estimate_points_along_direction(now in -10.0..10.0f64, prev in -10.0..10.0f64, v in vector(4, 1.0)) {
        prop_assume!(v.norm() > 1e-3);
        let v = v.normalize();
        let g = zeroth_order_estimate(now, prev, &v, 0.1).unwrap();
        prop_assert!((g.norm() - 40.0 * (now - prev).abs()).abs() <= 1e-9 * g.norm().max(1.0));
    }

    #[test]
    fn combination_is_convex(a in vector(3, 5.0), b in vector(3, 5.0), alpha in 0.0..=1.0f64) {
        let c = combine(alpha, &a, &b).unwrap();
        let bound = a.norm().max(b.norm());
        prop_assert!(c.norm() <= bound * (1.0 + 1e-12));
    }
}

/// A box far larger than the reachable region leaves every projection inactive.
#[test]
fn running_controller_in_a_huge_box_matches_the_static_one() {
    let plant = make_benchmark_plant(5, PlantDims::default()).unwrap();
    let objective = ObjectiveSpec::default().build(5, 10).unwrap();
    let h_hat: DMatrix<f64> = plant.linear_sensitivity().clone();
    let huge = BoxConstraint::new(DVector::from_element(10, -1e12), DVector::from_element(10, 1e12)).unwrap();
    let params = ControllerParams::gray_box(2.5e-4, 1e-3, AlphaSchedule::StaticBounded { c: 100.0 });
    let mut a = Controller::new(params, DVector::zeros(10), RngStream::new(5, 1)).unwrap();
    let mut b = Controller::new(params, DVector::zeros(10), RngStream::new(5, 1)).unwrap();
    for ctrl in [&mut a, &mut b] {
        let u = ctrl.pending_input().clone();
        let y = plant.steady_state(&u).unwrap();
        ctrl.prime(&PlantSnapshot { u, y }, &objective).unwrap();
    }
    for _ in 0..500 {
        let u = a.pending_input().clone();
        let y = plant.steady_state(&u).unwrap();
        a.step_static(&PlantSnapshot { u: u.clone(), y: y.clone() }, &objective, &h_hat).unwrap();
        b.step_running(&PlantSnapshot { u, y }, &objective, &h_hat, &huge).unwrap();
        let gap = (a.w() - b.w()).norm();
        assert!(gap <= 1e-12 * a.w().norm().max(1.0), "gap {gap:e} at step {}", a.k());
    }
}
