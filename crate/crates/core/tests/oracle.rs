use std::f64::consts::TAU;

use harvest_core::cases;
use harvest_core::field::{compute_ci, convex_hull, hull_constants, HullPolygon};
use harvest_core::model::{ArrivalRealization, Vec2};
use harvest_core::optimizer::initial_theta;
use harvest_core::oracle::{conservation_audit, mc_field_integral, mc_integral};
use harvest_core::{Family, ParamLayout, ParamVector, Problem};

fn disk(radius: f64, n: usize) -> HullPolygon {
    let pts: Vec<Vec2> = (0..n)
        .map(|k| {
            let a = TAU * k as f64 / n as f64;
            Vec2::new(5.0 + radius * a.cos(), 5.0 + radius * a.sin())
        })
        .collect();
    convex_hull(&pts)
}

#[test]
fn constant_integrand_gives_the_area() {
    let hull = convex_hull(&[Vec2::new(1.0, 1.0), Vec2::new(4.0, 1.0), Vec2::new(4.0, 3.0), Vec2::new(2.0, 4.0)]);
    let est = mc_integral(&hull, |_| 2.5, 20_000, 3).unwrap();
    assert!((est.value - 2.5 * hull.area()).abs() <= 1e-9);
}

#[test]
fn disk_integral_matches_area_closed_form() {
    let (lambda, r) = (2.0, 0.5);
    let hull = disk(lambda, 720);
    let center = Vec2::new(5.0, 5.0);
    let est = mc_integral(&hull, |w| 1.0 / w.distance(center).max(r), 200_000, 11).unwrap();
    let exact = TAU * (lambda - 0.5 * r);
    assert!((est.value - exact).abs() <= 3.0 * est.stderr + 1e-4, "{} ± {} vs {exact}", est.value, est.stderr);
}

#[test]
fn monte_carlo_agrees_with_quadrature_constants() {
    let config = cases::case_two();
    let hull = convex_hull(&config.targets.iter().map(|t| t.position).collect::<Vec<_>>());
    let c = hull_constants(&config).unwrap();
    let queues: Vec<f64> = (0..config.targets.len()).map(|i| 0.3 + 0.7 * i as f64).collect();
    let est = mc_field_integral(&config, &hull, &queues, 100_000, 5).unwrap();
    let quad: f64 = c.iter().zip(&queues).map(|(c, x)| c * x).sum();
    let tol = (0.01 * quad).max(3.0 * est.stderr);
    assert!((est.value - quad).abs() <= tol, "mc {} ± {} quad {quad}", est.value, est.stderr);
}

#[test]
fn standard_error_shrinks_with_root_samples() {
    let hull = disk(2.0, 360);
    let center = Vec2::new(5.5, 4.0);
    let f = |w: Vec2| 1.0 / w.distance(center).max(0.5);
    let small = mc_integral(&hull, f, 10_000, 1).unwrap();
    let large = mc_integral(&hull, f, 160_000, 2).unwrap();
    let ratio = small.stderr / large.stderr;
    assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
}

#[test]
fn disk_constant_from_quadrature() {
    let hull = disk(2.0, 720);
    let c = compute_ci(Vec2::new(5.0, 5.0), 0.5, 1.0, &hull).unwrap();
    assert!((c - TAU * 1.75).abs() < 0.01 * TAU * 1.75, "{c}");
}

#[test]
fn conservation_holds_with_clamped_queue() {
    let problem = Problem::new(cases::tiny()).unwrap();
    let arrivals = ArrivalRealization::for_config(&problem.config).unwrap();
    // The agent never leaves the target, so its queue is pinned at zero.
    let theta = ParamVector::new(ParamLayout::ellipse(&[1]), vec![7.0, 5.0, 0.1, 0.1, 0.0]).unwrap();
    let (_, trace) = problem.simulate(&theta, &arrivals).unwrap();
    let idx = trace.index;
    assert!((0..trace.node_count()).all(|k| trace.state(k)[idx.x(0)] == 0.0));
    assert!(conservation_audit(&trace, &arrivals).max_rel <= 1e-9);
}

#[test]
fn conservation_holds_on_reference_cases() {
    for (config, family) in [
        (cases::case_one(), Family::Ellipse),
        (cases::case_one(), Family::Fourier),
        (cases::case_two(), Family::Ellipse),
    ] {
        let problem = Problem::new(config).unwrap();
        let arrivals = ArrivalRealization::for_config(&problem.config).unwrap();
        let theta = initial_theta(&problem.config, family, 1, 7).unwrap();
        let (_, trace) = problem.simulate(&theta, &arrivals).unwrap();
        let audit = conservation_audit(&trace, &arrivals);
        assert!(audit.max_rel <= 1e-6, "{family}: {audit:?}");
    }
}

#[test]
fn stochastic_arrivals_are_conserved() {
    let problem = Problem::new(cases::case_three(true)).unwrap();
    let arrivals = ArrivalRealization::sample(&problem.config, 42).unwrap();
    let theta = initial_theta(&problem.config, Family::Ellipse, 1, 7).unwrap();
    let (_, trace) = problem.simulate(&theta, &arrivals).unwrap();
    assert!(conservation_audit(&trace, &arrivals).max_rel <= 1e-6);
}
