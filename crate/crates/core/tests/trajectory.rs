use std::f64::consts::{PI, TAU};

use harvest_core::cases;
use harvest_core::model::{idling, proximity, Vec2};
use harvest_core::trajectory::{Bounds, ParamLayout, ParamVector, TrajectorySet};
use proptest::prelude::*;

fn ellipse_values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0.0..10.0, 0.0..10.0, 0.1..5.0, 0.1..5.0, 0.0..PI), 2)
        .prop_map(|v| v.into_iter().flat_map(|(x, y, a, b, p)| [x, y, a, b, p]).collect())
}

fn fourier_values() -> impl Strategy<Value = Vec<f64>> {
    let agent = (0.2..5.0, prop::collection::vec(-3.0..3.0, 6), prop::collection::vec(0.0..TAU, 6));
    prop::collection::vec(agent, 2).prop_map(|v| {
        v.into_iter()
            .flat_map(|(f, amp, phase)| std::iter::once(f).chain(amp).chain(phase))
            .collect()
    })
}

fn max_speed_error(traj: &TrajectorySet, rhos: &[f64]) -> Option<f64> {
    let mut worst: f64 = 0.0;
    for j in 0..traj.agents() {
        for &rho in rhos {
            // Curves may be singular somewhere; those points have no speed.
            let v = traj.velocity(j, traj.segment_of(j, rho), rho).ok()?;
            worst = worst.max((v.norm() - 1.0).abs());
        }
    }
    Some(worst)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn ellipse_agents_move_at_unit_speed(values in ellipse_values(), rhos in prop::collection::vec(0.0..40.0, 16)) {
        let theta = ParamVector::new(ParamLayout::ellipse(&[1, 1]), values).unwrap();
        let traj = TrajectorySet::new(&theta, Vec2::new(5.0, 2.5)).unwrap();
        let err = max_speed_error(&traj, &rhos).unwrap();
        prop_assert!(err <= 1e-12, "speed error {err}");
    }

    #[test]
    fn fourier_agents_move_at_unit_speed(values in fourier_values(), rhos in prop::collection::vec(0.0..40.0, 16)) {
        let theta = ParamVector::new(ParamLayout::fourier(2, 3, 3), values).unwrap();
        let traj = TrajectorySet::new(&theta, Vec2::new(5.0, 2.5)).unwrap();
        if let Some(err) = max_speed_error(&traj, &rhos) {
            prop_assert!(err <= 1e-12, "speed error {err}");
        }
    }

    #[test]
    fn fourier_curves_start_at_the_base(values in fourier_values(), bx in 0.0..10.0, by in 0.0..10.0) {
        let theta = ParamVector::new(ParamLayout::fourier(2, 3, 3), values).unwrap();
        let base = Vec2::new(bx, by);
        let traj = TrajectorySet::new(&theta, base).unwrap();
        for j in 0..2 {
            prop_assert_eq!(traj.position_at(j, 0.0), base);
        }
    }

    #[test]
    fn projection_is_idempotent(values in fourier_values()) {
        let config = cases::case_one();
        let bounds = Bounds::for_config(&config);
        let mut theta = ParamVector::new(ParamLayout::fourier(2, 3, 3), values).unwrap();
        theta.values[0] = 9.0;
        bounds.project(&mut theta);
        prop_assert!(bounds.is_feasible(&theta));
        let once = theta.clone();
        bounds.project(&mut theta);
        prop_assert_eq!(once, theta);
    }

    #[test]
    fn proximity_is_bounded_and_decreasing(wx in -5.0..5.0, wy in -5.0..5.0, range in 0.01..3.0, t in 1.0..3.0) {
        let w = Vec2::new(wx, wy);
        let p = proximity(w, Vec2::ZERO, range).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        let farther = proximity(w * t, Vec2::ZERO, range).unwrap();
        prop_assert!(farther <= p);
        prop_assert_eq!(p > 0.0, w.norm() < range);
    }

    #[test]
    fn idling_vanishes_exactly_in_range(x in 0.0..10.0, y in 0.0..10.0) {
        let config = cases::case_one();
        let s = Vec2::new(x, y);
        let inside = config.targets.iter().any(|t| s.distance(t.position) <= t.range[0])
            || s.distance(config.base.position) <= config.base.range[0];
        let i = idling(s, &config, 0);
        prop_assert!(i >= 0.0);
        prop_assert_eq!(i == 0.0, inside);
    }
}

#[test]
fn integrated_path_length_matches_elapsed_time() {
    let config = cases::case_one();
    let theta = harvest_core::optimizer::initial_theta(&config, harvest_core::Family::Fourier, 1, 7).unwrap();
    let problem = harvest_core::Problem::new(config).unwrap();
    let arrivals = harvest_core::model::ArrivalRealization::for_config(&problem.config).unwrap();
    let (traj, trace) = problem.simulate(&theta, &arrivals).unwrap();
    for j in 0..traj.agents() {
        let mut length = 0.0;
        let mut prev = trace.positions(&traj, 0, true)[j];
        for k in 1..trace.node_count() {
            let p = trace.positions(&traj, k, false)[j];
            length += p.distance(prev);
            prev = p;
        }
        let t = trace.final_time();
        assert!((length - t).abs() < 1e-4 * t, "agent {j}: path {length} in {t}");
    }
}
