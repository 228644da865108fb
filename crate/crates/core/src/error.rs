use thiserror::Error;

/// Errors raised while validating, simulating, or differentiating a mission.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarvestError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("trajectory is singular at phase {phase}: speed {speed:e}")]
    SingularTrajectory { phase: f64, speed: f64 },

    #[error("integrator failure at t={time}: {reason}")]
    IntegratorFailure { time: f64, reason: String },

    #[error("event at t={time} is grazing (|dg/dt| = {rate:e}); derivative undefined")]
    GrazingEvent { time: f64, rate: f64 },

    #[error("degenerate convex hull: {0}")]
    DegenerateHull(String),

    #[error("malformed scenario: {0}")]
    Scenario(String),
}

pub type Result<T> = std::result::Result<T, HarvestError>;

impl HarvestError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        HarvestError::InvalidConfig(msg.into())
    }

    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        HarvestError::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}
