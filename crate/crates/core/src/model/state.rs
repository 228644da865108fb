use serde::{Deserialize, Serialize};

use super::geometry::Vec2;

/// Queue contents and agent kinematics at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub time: f64,
    /// `X_i`.
    pub target_queue: Vec<f64>,
    /// `Y_i`.
    pub delivered: Vec<f64>,
    /// `Z_ij`, row-major `[i * N + j]`.
    pub onboard: Vec<f64>,
    pub positions: Vec<Vec2>,
    /// Trajectory phase `ρ_j`.
    pub phases: Vec<f64>,
    /// Agent connected to each target.
    pub owner: Vec<Option<usize>>,
}

impl SystemState {
    pub fn agents(&self) -> usize {
        self.positions.len()
    }

    pub fn onboard_at(&self, i: usize, j: usize) -> f64 {
        self.onboard[i * self.agents() + j]
    }

    /// `Σ X + Σ Z + Σ Y`.
    pub fn total_data(&self) -> f64 {
        self.target_queue.iter().sum::<f64>()
            + self.onboard.iter().sum::<f64>()
            + self.delivered.iter().sum::<f64>()
    }
}
