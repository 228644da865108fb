use serde::{Deserialize, Serialize};

use super::geometry::Vec2;
use crate::error::{HarvestError, Result};

/// Data arrival process at a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalSpec {
    /// Constant rate `σ`.
    Constant { rate: f64 },
    /// Seeded piecewise-linear rate. Node values are drawn uniformly from
    /// `[mean (1 - amplitude), mean (1 + amplitude)]` every `interval`
    /// time units (default `T / 20`).
    PiecewiseLinear {
        mean: f64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        interval: Option<f64>,
    },
}

fn default_amplitude() -> f64 {
    1.0
}

impl ArrivalSpec {
    /// Rate used by the normalizers: the constant rate, or the mean.
    pub fn nominal_rate(&self) -> f64 {
        match *self {
            ArrivalSpec::Constant { rate } => rate,
            ArrivalSpec::PiecewiseLinear { mean, .. } => mean,
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, ArrivalSpec::PiecewiseLinear { amplitude, .. } if *amplitude > 0.0)
    }

    fn validate(&self, i: usize, horizon: f64) -> Result<()> {
        match *self {
            ArrivalSpec::Constant { rate } => {
                if !(rate >= 0.0) || !rate.is_finite() {
                    return Err(HarvestError::config(format!(
                        "targets[{i}].arrival.rate must be non-negative, got {rate}"
                    )));
                }
            }
            ArrivalSpec::PiecewiseLinear {
                mean,
                amplitude,
                interval,
            } => {
                if !(mean >= 0.0) || !mean.is_finite() {
                    return Err(HarvestError::config(format!(
                        "targets[{i}].arrival.mean must be non-negative, got {mean}"
                    )));
                }
                if !(0.0..=1.0).contains(&amplitude) {
                    return Err(HarvestError::config(format!(
                        "targets[{i}].arrival.amplitude must lie in [0, 1], got {amplitude}"
                    )));
                }
                if let Some(d) = interval {
                    if !(d > 0.0) || d > horizon {
                        return Err(HarvestError::config(format!(
                            "targets[{i}].arrival.interval must lie in (0, T], got {d}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A data source at a fixed location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub position: Vec2,
    /// Range `r_ij`, one entry per agent.
    pub range: Vec<f64>,
    /// Weight `α_i`.
    pub weight: f64,
    /// Maximum collection rate `μ_ij`, one entry per agent.
    pub collection_rate: Vec<f64>,
    pub arrival: ArrivalSpec,
    /// Queue content `X_i(0)`.
    pub initial_queue: f64,
}

/// The base that receives delivered data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseSpec {
    pub position: Vec2,
    /// Range `r_Bj`, one entry per agent.
    pub range: Vec<f64>,
    /// Delivery rate `β_ij`, indexed `[target][agent]`.
    pub delivery_rate: Vec<Vec<f64>>,
}

/// Immutable mission description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionConfig {
    /// Mission rectangle `[0, width] x [0, height]`.
    pub width: f64,
    pub height: f64,
    pub targets: Vec<TargetSpec>,
    pub base: BaseSpec,
    pub agents: usize,
    pub horizon: f64,
    /// Tradeoff weight `q` between backlog and delivered data.
    pub tradeoff: f64,
    /// Multiplier `M_C` on the ellipse base-passage penalty.
    pub penalty: f64,
    /// Quadrature grid resolution `(n_x, n_y)`.
    pub grid: [usize; 2],
    /// Fixed integrator step.
    pub step: f64,
    /// Event localization tolerance, relative to the horizon.
    pub event_tolerance: f64,
    /// Seed of the arrival realization.
    pub arrival_seed: u64,
}

impl MissionConfig {
    pub const DEFAULT_STEPS: f64 = 20_000.0;
    pub const DEFAULT_EVENT_TOLERANCE: f64 = 1e-10;
    pub const DEFAULT_PENALTY: f64 = 1e4;
    pub const DEFAULT_GRID: [usize; 2] = [50, 50];

    pub fn target_count(&self) -> usize {
        self.targets.len()
    }

    /// Clamp radius `r_i = min_j r_ij` of the target potential.
    pub fn target_clamp(&self, i: usize) -> f64 {
        self.targets[i]
            .range
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Clamp radius `r_B = min_j r_Bj` of the base potential.
    pub fn base_clamp(&self) -> f64 {
        self.base.range.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Mean clamp radius over targets.
    pub fn mean_target_clamp(&self) -> f64 {
        let m = self.target_count();
        (0..m).map(|i| self.target_clamp(i)).sum::<f64>() / m as f64
    }

    /// `Σ_i σ_i(0)` using each arrival's nominal rate.
    pub fn nominal_arrival_total(&self) -> f64 {
        self.targets.iter().map(|t| t.arrival.nominal_rate()).sum()
    }

    pub fn is_stochastic(&self) -> bool {
        self.targets.iter().any(|t| t.arrival.is_stochastic())
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.y >= 0.0 && p.y <= self.height
    }

    /// Absolute event localization tolerance.
    pub fn time_tolerance(&self) -> f64 {
        self.event_tolerance * self.horizon
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarvestError::config(msg));
        let n = self.agents;
        let m = self.targets.len();
        if n == 0 {
            return bad("agents must be at least 1".into());
        }
        if m == 0 {
            return bad("targets must not be empty".into());
        }
        if !(self.width > 0.0 && self.width.is_finite())
            || !(self.height > 0.0 && self.height.is_finite())
        {
            return bad(format!(
                "mission_size must be positive, got [{}, {}]",
                self.width, self.height
            ));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(0.0..=1.0).contains(&self.tradeoff) {
            return bad(format!("tradeoff must lie in [0, 1], got {}", self.tradeoff));
        }
        if !(self.penalty >= 0.0) || !self.penalty.is_finite() {
            return bad(format!(
                "penalty_multiplier must be non-negative, got {}",
                self.penalty
            ));
        }
        if self.grid[0] == 0 || self.grid[1] == 0 {
            return bad("grid resolution must be at least 1x1".into());
        }
        if !(self.step > 0.0) || self.step > self.horizon {
            return bad(format!("integrator step must lie in (0, T], got {}", self.step));
        }
        if !(self.event_tolerance > 0.0) || self.event_tolerance >= 1e-3 {
            return bad(format!(
                "event_tolerance must lie in (0, 1e-3), got {}",
                self.event_tolerance
            ));
        }
        let base = &self.base;
        if !base.position.is_finite() || !self.contains(base.position) {
            return bad(format!(
                "base.position {:?} lies outside the mission rectangle",
                base.position
            ));
        }
        check_per_agent("base.range", &base.range, n)?;
        if base.delivery_rate.len() != m {
            return bad(format!(
                "base.delivery_rate has {} rows, expected one per target ({m})",
                base.delivery_rate.len()
            ));
        }
        for (i, row) in base.delivery_rate.iter().enumerate() {
            check_per_agent(&format!("base.delivery_rate[{i}]"), row, n)?;
        }
        for (i, t) in self.targets.iter().enumerate() {
            if !t.position.is_finite() || !self.contains(t.position) {
                return bad(format!(
                    "targets[{i}].position {:?} lies outside the mission rectangle",
                    t.position
                ));
            }
            check_per_agent(&format!("targets[{i}].range"), &t.range, n)?;
            check_per_agent(&format!("targets[{i}].collection_rate"), &t.collection_rate, n)?;
            if !(t.weight > 0.0) || !t.weight.is_finite() {
                return bad(format!("targets[{i}].weight must be positive"));
            }
            if !(t.initial_queue >= 0.0) || !t.initial_queue.is_finite() {
                return bad(format!("targets[{i}].initial_queue must be non-negative"));
            }
            t.arrival.validate(i, self.horizon)?;
            let sep = t.position.distance(base.position);
            for j in 0..n {
                if sep <= t.range[j] + base.range[j] {
                    return bad(format!(
                        "target {i} and the base are {sep} apart, not more than r_{i}{j} + r_B{j} = {}: \
                         agent {j} could collect and deliver at once",
                        t.range[j] + base.range[j]
                    ));
                }
            }
        }
        Ok(())
    }
}

fn check_per_agent(name: &str, values: &[f64], n: usize) -> Result<()> {
    if values.len() != n {
        return Err(HarvestError::config(format!(
            "{name} has {} entries, expected one per agent ({n})",
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(HarvestError::config(format!(
            "{name} entries must be positive, got {v}"
        )));
    }
    Ok(())
}
