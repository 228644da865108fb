//! On-disk scenario format.
//!
//! Per-agent quantities accept either a scalar (broadcast to every agent) or
//! a list with one entry per agent. Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use super::config::{ArrivalSpec, BaseSpec, MissionConfig, TargetSpec};
use super::geometry::Vec2;
use crate::error::{HarvestError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAgent {
    Scalar(f64),
    List(Vec<f64>),
}

impl PerAgent {
    fn expand(&self, n: usize) -> Vec<f64> {
        match self {
            PerAgent::Scalar(v) => vec![*v; n],
            PerAgent::List(v) => v.clone(),
        }
    }
}

/// `β_ij`: scalar, per-agent list, or `[target][agent]` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerPair {
    Scalar(f64),
    List(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

impl PerPair {
    fn expand(&self, m: usize, n: usize) -> Vec<Vec<f64>> {
        match self {
            PerPair::Scalar(v) => vec![vec![*v; n]; m],
            PerPair::List(v) => vec![v.clone(); m],
            PerPair::Matrix(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetEntry {
    pub position: Vec2,
    pub range: PerAgent,
    #[serde(default = "one")]
    pub weight: f64,
    pub collection_rate: PerAgent,
    pub arrival: ArrivalSpec,
    #[serde(default)]
    pub initial_queue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseEntry {
    pub position: Vec2,
    pub range: PerAgent,
    pub delivery_rate: PerPair,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorEntry {
    /// Fixed step; defaults to `T / 20000`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub mission_size: [f64; 2],
    pub horizon: f64,
    pub agents: usize,
    pub tradeoff: f64,
    pub targets: Vec<TargetEntry>,
    pub base: BaseEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_multiplier: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<[usize; 2]>,
    #[serde(default)]
    pub integrator: IntegratorEntry,
    #[serde(default)]
    pub arrival_seed: u64,
}

fn one() -> f64 {
    1.0
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile =
            serde_json::from_str(text).map_err(|e| HarvestError::Scenario(e.to_string()))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(HarvestError::Scenario(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Ok(file)
    }

    /// Expands broadcasts, applies defaults, and validates.
    pub fn into_config(self) -> Result<MissionConfig> {
        let n = self.agents;
        let m = self.targets.len();
        let targets = self
            .targets
            .into_iter()
            .map(|t| TargetSpec {
                position: t.position,
                range: t.range.expand(n),
                weight: t.weight,
                collection_rate: t.collection_rate.expand(n),
                arrival: t.arrival,
                initial_queue: t.initial_queue,
            })
            .collect();
        let config = MissionConfig {
            width: self.mission_size[0],
            height: self.mission_size[1],
            targets,
            base: BaseSpec {
                position: self.base.position,
                range: self.base.range.expand(n),
                delivery_rate: self.base.delivery_rate.expand(m, n),
            },
            agents: n,
            horizon: self.horizon,
            tradeoff: self.tradeoff,
            penalty: self
                .penalty_multiplier
                .unwrap_or(MissionConfig::DEFAULT_PENALTY),
            grid: self.grid.unwrap_or(MissionConfig::DEFAULT_GRID),
            step: self
                .integrator
                .step
                .unwrap_or(self.horizon / MissionConfig::DEFAULT_STEPS),
            event_tolerance: self
                .integrator
                .event_tolerance
                .unwrap_or(MissionConfig::DEFAULT_EVENT_TOLERANCE),
            arrival_seed: self.arrival_seed,
        };
        config.validate()?;
        Ok(config)
    }
}

impl MissionConfig {
    /// Parses and validates a JSON scenario document.
    pub fn from_json(text: &str) -> Result<Self> {
        ScenarioFile::from_json(text)?.into_config()
    }

    /// Scenario document equivalent to this configuration.
    pub fn to_scenario(&self, name: Option<String>) -> ScenarioFile {
        let list = |v: &[f64]| {
            if v.windows(2).all(|w| w[0] == w[1]) {
                PerAgent::Scalar(v[0])
            } else {
                PerAgent::List(v.to_vec())
            }
        };
        let beta = &self.base.delivery_rate;
        let uniform = beta
            .iter()
            .flatten()
            .all(|v| *v == beta[0][0]);
        ScenarioFile {
            schema_version: SCHEMA_VERSION,
            name,
            mission_size: [self.width, self.height],
            horizon: self.horizon,
            agents: self.agents,
            tradeoff: self.tradeoff,
            targets: self
                .targets
                .iter()
                .map(|t| TargetEntry {
                    position: t.position,
                    range: list(&t.range),
                    weight: t.weight,
                    collection_rate: list(&t.collection_rate),
                    arrival: t.arrival.clone(),
                    initial_queue: t.initial_queue,
                })
                .collect(),
            base: BaseEntry {
                position: self.base.position,
                range: list(&self.base.range),
                delivery_rate: if uniform {
                    PerPair::Scalar(beta[0][0])
                } else {
                    PerPair::Matrix(beta.clone())
                },
            },
            penalty_multiplier: Some(self.penalty),
            grid: Some(self.grid),
            integrator: IntegratorEntry {
                step: Some(self.step),
                event_tolerance: Some(self.event_tolerance),
            },
            arrival_seed: self.arrival_seed,
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"{
        "schema_version": 1,
        "mission_size": [10, 10],
        "horizon": 5,
        "agents": 2,
        "tradeoff": 0.5,
        "targets": [
            {"position": [2, 2], "range": 0.5, "collection_rate": [100, 80],
             "arrival": {"kind": "constant", "rate": 0.5}}
        ],
        "base": {"position": [5, 5], "range": 0.5, "delivery_rate": 500}
    }"#;

    #[test]
    fn scalars_broadcast() {
        let c = MissionConfig::from_json(TINY).unwrap();
        assert_eq!(c.targets[0].range, vec![0.5, 0.5]);
        assert_eq!(c.targets[0].collection_rate, vec![100.0, 80.0]);
        assert_eq!(c.base.delivery_rate, vec![vec![500.0, 500.0]]);
        assert_eq!(c.step, 5.0 / 20_000.0);
        assert_eq!(c.grid, [50, 50]);
        assert_eq!(c.targets[0].weight, 1.0);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = TINY.replace("\"horizon\": 5", "\"horizon\": 5, \"horizn\": 3");
        let err = MissionConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("horizn"), "{err}");
    }

    #[test]
    fn overlapping_ranges_rejected() {
        let text = TINY.replace("[2, 2], \"range\": 0.5", "[5, 5.8], \"range\": 0.5");
        let err = MissionConfig::from_json(&text).unwrap_err();
        assert!(matches!(err, HarvestError::InvalidConfig(_)), "{err}");
    }

    #[test]
    fn wrong_schema_version() {
        let text = TINY.replace("\"schema_version\": 1", "\"schema_version\": 7");
        assert!(MissionConfig::from_json(&text).is_err());
    }

    #[test]
    fn round_trip() {
        let c = MissionConfig::from_json(TINY).unwrap();
        let text = serde_json::to_string(&c.to_scenario(None)).unwrap();
        assert_eq!(MissionConfig::from_json(&text).unwrap(), c);
    }
}
