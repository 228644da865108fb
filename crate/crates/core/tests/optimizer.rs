use harvest_core::cases;
use harvest_core::optimizer::{initial_theta, optimize, OptimizerOptions};
use harvest_core::{Family, Problem};

fn short_run(config: harvest_core::MissionConfig, family: Family, iterations: usize) -> harvest_core::optimizer::OptimizeOutcome {
    let problem = Problem::new(config).unwrap();
    let theta = initial_theta(&problem.config, family, 1, 7).unwrap();
    let mut opts = OptimizerOptions::for_config(&problem.config);
    opts.iterations = iterations;
    opts.seed = 7;
    optimize(&problem, &theta, &opts).unwrap()
}

#[test]
fn single_target_cost_decreases() {
    let out = short_run(cases::tiny(), Family::Ellipse, 15);
    assert!(out.best_cost < out.initial_cost(), "{} -> {}", out.initial_cost(), out.best_cost);
}

#[test]
fn repeated_runs_are_identical() {
    let a = short_run(cases::tiny(), Family::Fourier, 5);
    let b = short_run(cases::tiny(), Family::Fourier, 5);
    assert_eq!(a, b);
}

#[test]
fn stochastic_runs_are_reproducible() {
    let mut config = cases::tiny();
    config.targets[0].arrival = harvest_core::model::ArrivalSpec::PiecewiseLinear {
        mean: 0.5,
        amplitude: 1.0,
        interval: None,
    };
    let a = short_run(config.clone(), Family::Ellipse, 3);
    let b = short_run(config, Family::Ellipse, 3);
    assert_eq!(a.history.len(), 4);
    assert!(a.history.iter().all(|r| r.replications == OptimizerOptions::STOCHASTIC_REPLICATIONS));
    assert_eq!(a, b);
}

#[test]
fn costs_respect_the_lower_bound() {
    let out = short_run(cases::tiny(), Family::Ellipse, 10);
    let bound = -(1.0 - cases::tiny().tradeoff);
    assert!(out.history.iter().all(|r| r.cost.total >= bound));
}

#[test]
fn ellipse_iterates_keep_passing_through_the_base() {
    let config = cases::tiny();
    let out = short_run(config.clone(), Family::Ellipse, 10);
    let problem = Problem::new(config).unwrap();
    let traj = problem.trajectories(&out.theta).unwrap();
    assert!(traj.agent_penalties().iter().all(|&c| c <= 1e-6), "{:?}", traj.agent_penalties());
}
