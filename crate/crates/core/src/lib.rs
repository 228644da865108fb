//! Fluid-queue model of agents harvesting data from fixed targets and
//! ferrying it to a base, with event-driven simulation, infinitesimal
//! perturbation analysis of the trajectory parameters, and a stochastic
//! approximation optimizer over elliptical and Fourier trajectories.

pub mod cases;
pub mod error;
pub mod field;
pub mod ipa;
pub mod model;
pub mod objective;
pub mod optimizer;
pub mod oracle;
pub mod simulator;
pub mod trajectory;

pub use error::{HarvestError, Result};
pub use model::{
    ArrivalRealization, ArrivalSpec, BaseSpec, EventKind, EventRecord, MissionConfig, SystemState,
    TargetSpec, Vec2,
};
pub use objective::{CostBreakdown, Problem};
pub use simulator::{simulate, SimOptions, SimTrace};
pub use trajectory::{Family, ParamLayout, ParamVector, TrajectorySet};
