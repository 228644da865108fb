use harvest_core::cases;
use harvest_core::ipa::{assemble_gradient, evaluate_with_gradient, IpaOptions};
use harvest_core::model::ArrivalRealization;
use harvest_core::optimizer::initial_theta;
use harvest_core::oracle::{fd_objective_gradient, FD_STEPS};
use harvest_core::{Family, ParamLayout, ParamVector, Problem};

fn tiny() -> (Problem, ArrivalRealization) {
    let problem = Problem::new(cases::tiny()).unwrap();
    let arrivals = ArrivalRealization::for_config(&problem.config).unwrap();
    (problem, arrivals)
}

fn assert_matches_fd(problem: &Problem, theta: &ParamVector, arrivals: &ArrivalRealization) {
    let (_, ipa) = evaluate_with_gradient(problem, theta, arrivals, IpaOptions::default()).unwrap();
    let fd = fd_objective_gradient(problem, theta, arrivals, &FD_STEPS).unwrap();
    for k in 0..theta.dim() {
        let (g, f) = (ipa.total[k], fd.gradient[k]);
        if g.abs().max(f.abs()) > 1e-6 {
            assert!(
                (g - f).abs() <= 0.05 * f.abs(),
                "{}: ipa {g} fd {f}",
                theta.layout.label(k)
            );
        }
    }
}

#[test]
fn tiny_gradients_match_finite_differences() {
    let (problem, arrivals) = tiny();
    for family in [Family::Ellipse, Family::Fourier] {
        let theta = initial_theta(&problem.config, family, 1, 7).unwrap();
        assert_matches_fd(&problem, &theta, &arrivals);
    }
}

#[test]
fn event_free_path_has_running_gradient_only() {
    let (problem, arrivals) = tiny();
    // Circles the target without ever leaving its range or reaching the base.
    let theta = ParamVector::new(ParamLayout::ellipse(&[1]), vec![7.0, 5.1, 0.3, 0.2, 0.4]).unwrap();
    let (_, grad) = evaluate_with_gradient(&problem, &theta, &arrivals, IpaOptions::default()).unwrap();
    assert!(grad.events.is_empty());
    assert!(grad.switching.iter().all(|&v| v == 0.0));
    assert_matches_fd(&problem, &theta, &arrivals);
}

#[test]
fn arrival_annotations_do_not_enter_the_gradient() {
    let problem = Problem::new(cases::case_one()).unwrap();
    let arrivals = ArrivalRealization::for_config(&problem.config).unwrap();
    let theta = initial_theta(&problem.config, Family::Ellipse, 1, 7).unwrap();
    let (traj, trace) = problem.simulate(&theta, &arrivals).unwrap();
    assert!(!trace.events.is_empty());
    let mut altered = trace.clone();
    for e in &mut altered.events {
        e.sigma = e.sigma.map(|s| 3.0 * s + 1.0);
        e.sigma_slope = Some(-7.0);
    }
    let a = assemble_gradient(&problem, &traj, &trace, &arrivals, IpaOptions::default()).unwrap();
    let b = assemble_gradient(&problem, &traj, &altered, &arrivals, IpaOptions::default()).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.total), bits(&b.total));
}

#[test]
fn total_data_sensitivity_stays_zero_across_jumps() {
    // Σ X + Σ Z + Σ Y equals the arrived data, which no parameter changes.
    let problem = Problem::new(cases::case_one()).unwrap();
    let arrivals = ArrivalRealization::for_config(&problem.config).unwrap();
    let theta = initial_theta(&problem.config, Family::Ellipse, 1, 7).unwrap();
    let options = IpaOptions {
        record_jumps: true,
        ..IpaOptions::default()
    };
    let (_, grad) = evaluate_with_gradient(&problem, &theta, &arrivals, options).unwrap();
    assert!(!grad.jumps.is_empty());
    let (m, n) = (problem.config.targets.len(), problem.config.agents);
    let idx = grad.final_state.index;
    let rows: Vec<usize> = (0..m)
        .flat_map(|i| {
            std::iter::once(idx.x(i))
                .chain((0..n).map(move |j| idx.z(i, j)))
                .chain(std::iter::once(idx.y(i)))
        })
        .collect();
    for jump in &grad.jumps {
        for d in [&jump.before, &jump.after] {
            for q in 0..theta.dim() {
                let sum: f64 = rows.iter().map(|&r| d.queue_row(r)[q]).sum();
                let scale: f64 = rows.iter().map(|&r| d.queue_row(r)[q].abs()).sum();
                assert!(sum.abs() <= 1e-8 * (1.0 + scale), "t={} q={q}: {sum}", jump.time);
            }
        }
    }
}
