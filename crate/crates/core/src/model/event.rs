use serde::{Deserialize, Serialize};

/// Hybrid-system event taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// `ξ⁰_i`: target queue `X_i` reaches zero.
    QueueEmptied { target: usize },
    /// `ξ⁺_i`: `X_i` leaves zero because arrivals exceed the collection rate.
    QueueResumed { target: usize },
    /// `ζ⁰_ij`: on-board queue `Z_ij` reaches zero.
    OnboardEmptied { target: usize, agent: usize },
    /// `δ⁺_ij`: agent leaves the range of a target.
    LeftTarget { target: usize, agent: usize },
    /// `δ⁰_ij`: agent enters the range of a target.
    EnteredTarget { target: usize, agent: usize },
    /// `Δ⁺_j`: agent leaves the base range.
    LeftBase { agent: usize },
    /// `Δ⁰_j`: agent enters the base range.
    EnteredBase { agent: usize },
    /// `κ_i`: exogenous jump in the slope of an arrival rate.
    RateBreakpoint { target: usize },
    /// Agent finishes an ellipse and switches to the next one.
    SegmentCompleted { agent: usize, segment: usize },
}

impl EventKind {
    /// Short code used in CSV output.
    pub fn code(&self) -> &'static str {
        match self {
            EventKind::QueueEmptied { .. } => "xi0",
            EventKind::QueueResumed { .. } => "xi+",
            EventKind::OnboardEmptied { .. } => "zeta0",
            EventKind::LeftTarget { .. } => "delta+",
            EventKind::EnteredTarget { .. } => "delta0",
            EventKind::LeftBase { .. } => "Delta+",
            EventKind::EnteredBase { .. } => "Delta0",
            EventKind::RateBreakpoint { .. } => "kappa",
            EventKind::SegmentCompleted { .. } => "segment",
        }
    }

    pub fn target(&self) -> Option<usize> {
        match *self {
            EventKind::QueueEmptied { target }
            | EventKind::QueueResumed { target }
            | EventKind::OnboardEmptied { target, .. }
            | EventKind::LeftTarget { target, .. }
            | EventKind::EnteredTarget { target, .. }
            | EventKind::RateBreakpoint { target } => Some(target),
            _ => None,
        }
    }

    pub fn agent(&self) -> Option<usize> {
        match *self {
            EventKind::OnboardEmptied { agent, .. }
            | EventKind::LeftTarget { agent, .. }
            | EventKind::EnteredTarget { agent, .. }
            | EventKind::LeftBase { agent }
            | EventKind::EnteredBase { agent }
            | EventKind::SegmentCompleted { agent, .. } => Some(agent),
            _ => None,
        }
    }

    /// Whether the event time depends on the trajectory parameters.
    pub fn is_endogenous(&self) -> bool {
        !matches!(self, EventKind::RateBreakpoint { .. })
    }

    /// Processing order for coincident events; lower first.
    pub fn priority(&self) -> (u8, usize, usize) {
        let class = match self {
            EventKind::SegmentCompleted { .. } => 0,
            EventKind::LeftTarget { .. }
            | EventKind::EnteredTarget { .. }
            | EventKind::LeftBase { .. }
            | EventKind::EnteredBase { .. } => 1,
            EventKind::QueueEmptied { .. }
            | EventKind::QueueResumed { .. }
            | EventKind::OnboardEmptied { .. } => 2,
            EventKind::RateBreakpoint { .. } => 3,
        };
        (
            class,
            self.target().unwrap_or(0),
            self.agent().unwrap_or(0),
        )
    }
}

/// Queue flow rates at an instant.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FlowSnapshot {
    /// `dX_i/dt`.
    pub target: Vec<f64>,
    /// `dZ_ij/dt`, row-major `[i * N + j]`.
    pub onboard: Vec<f64>,
    /// `dY_i/dt`.
    pub base: Vec<f64>,
}

/// One logged event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
    /// Index of the trace node at the event time.
    pub node: usize,
    /// `p_ij(τ)` for the event's (target, agent) pair, or of the owner for queue events.
    pub p_target: f64,
    /// `p_Bj(τ)` for the event's agent.
    pub p_base: f64,
    /// Agent that takes over a connection at a departure.
    pub handoff: Option<usize>,
    /// Arrival rate `σ_i(τ)` and its slope, for target events.
    pub sigma: Option<f64>,
    pub sigma_slope: Option<f64>,
    /// Flow rates at `τ⁻` and `τ⁺`.
    pub before: FlowSnapshot,
    pub after: FlowSnapshot,
    /// Coincides with another event it was not caused by.
    pub simultaneous: bool,
    /// Caused by another event at the same instant rather than by its own guard.
    pub induced: bool,
}
