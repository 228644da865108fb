//! Mission description, queue state, proximity functions and the event taxonomy.

mod arrival;
mod config;
mod event;
mod geometry;
mod scenario;
mod state;

pub use arrival::{arrival_rate, ArrivalRealization, RateProfile};
pub use config::{ArrivalSpec, BaseSpec, MissionConfig, TargetSpec};
pub use event::{EventKind, EventRecord, FlowSnapshot};
pub use geometry::{excess_distance, idling_from_excess, proximity, Vec2};
pub(crate) use geometry::{proximity_at, unit_from};
pub use scenario::{
    BaseEntry, IntegratorEntry, PerAgent, PerPair, ScenarioFile, TargetEntry, SCHEMA_VERSION,
};
pub use state::SystemState;

/// `d⁺ = max(0, d - r)`.
pub fn d_plus(d: f64, r: f64) -> f64 {
    excess_distance(d, r)
}

/// Idling metric of an agent at `s`.
pub fn idling(s: Vec2, config: &MissionConfig, agent: usize) -> f64 {
    let base = d_plus(s.distance(config.base.position), config.base.range[agent]);
    let excess: Vec<f64> = config
        .targets
        .iter()
        .map(|t| d_plus(s.distance(t.position), t.range[agent]))
        .collect();
    idling_from_excess(base, &excess)
}
