//! Reference scenarios: a two-target mission, a 3x3 target grid and a
//! 12-target field with optional stochastic arrivals.

use crate::model::{ArrivalSpec, BaseSpec, MissionConfig, TargetSpec, Vec2};

#[allow(clippy::too_many_arguments)]
fn mission(
    targets: &[Vec2],
    base: Vec2,
    agents: usize,
    arrival: ArrivalSpec,
    mu: f64,
    beta: f64,
    r: f64,
    r_base: f64,
    horizon: f64,
) -> MissionConfig {
    MissionConfig {
        width: 10.0,
        height: 10.0,
        targets: targets
            .iter()
            .map(|&position| TargetSpec {
                position,
                range: vec![r; agents],
                weight: 1.0,
                collection_rate: vec![mu; agents],
                arrival: arrival.clone(),
                initial_queue: 0.0,
            })
            .collect(),
        base: BaseSpec {
            position: base,
            range: vec![r_base; agents],
            delivery_rate: vec![vec![beta; agents]; targets.len()],
        },
        agents,
        horizon,
        tradeoff: 0.5,
        penalty: MissionConfig::DEFAULT_PENALTY,
        grid: MissionConfig::DEFAULT_GRID,
        step: horizon / MissionConfig::DEFAULT_STEPS,
        event_tolerance: MissionConfig::DEFAULT_EVENT_TOLERANCE,
        arrival_seed: 0,
    }
}

const SIGMA: ArrivalSpec = ArrivalSpec::Constant { rate: 0.5 };

/// Two targets, two agents, `σ = 0.5`, `μ = 100`, `β = 500`, `r = 0.5`, `T = 20`.
pub fn case_one() -> MissionConfig {
    mission(
        &[Vec2::new(2.5, 7.5), Vec2::new(7.5, 7.5)],
        Vec2::new(5.0, 2.5),
        2,
        SIGMA,
        100.0,
        500.0,
        0.5,
        0.5,
        20.0,
    )
}

/// Nine targets on a 3x3 grid, two agents, base at the mission center,
/// `μ = 50`, `β = 500`, `r = 0.55`, `r_B = 0.65`, `T = 50`.
pub fn case_two() -> MissionConfig {
    let mut targets = Vec::new();
    for y in [2.0, 4.0, 6.0] {
        for x in [2.0, 4.0, 6.0] {
            targets.push(Vec2::new(x, y));
        }
    }
    mission(&targets, Vec2::new(5.0, 5.0), 2, SIGMA, 50.0, 500.0, 0.55, 0.65, 50.0)
}

/// Twelve targets spread uniformly over the mission, two agents, `T = 50`.
/// With `stochastic`, arrivals are seeded piecewise-linear rates of mean 0.5.
pub fn case_three(stochastic: bool) -> MissionConfig {
    let mut targets = Vec::new();
    for y in [5.0 / 3.0, 5.0, 25.0 / 3.0] {
        for x in [1.25, 3.75, 6.25, 8.75] {
            targets.push(Vec2::new(x, y));
        }
    }
    let arrival = if stochastic {
        ArrivalSpec::PiecewiseLinear {
            mean: 0.5,
            amplitude: 1.0,
            interval: None,
        }
    } else {
        SIGMA
    };
    mission(&targets, Vec2::new(5.0, 5.0), 2, arrival, 50.0, 500.0, 0.55, 0.65, 50.0)
}

/// One target, one agent, short horizon; fast enough for smoke tests.
pub fn tiny() -> MissionConfig {
    mission(
        &[Vec2::new(7.0, 5.0)],
        Vec2::new(5.0, 5.0),
        1,
        SIGMA,
        100.0,
        500.0,
        0.5,
        0.5,
        10.0,
    )
}
