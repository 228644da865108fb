use std::ops::Range;

use crate::simulator::StateIndex;
use crate::trajectory::ParamLayout;

/// Parameter sensitivities of the continuous state at one instant.
///
/// Phase rows only depend on the agent's own parameters and are stored
/// over that block; queue rows span the full parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeState {
    pub time: f64,
    pub index: StateIndex,
    pub dim: usize,
    pub blocks: Vec<Range<usize>>,
    /// `ρ'_j` over agent `j`'s block.
    pub rho: Vec<Vec<f64>>,
    /// Rows of `X', Z', Y'` in state order, each of length `dim`.
    pub queues: Vec<f64>,
}

impl DerivativeState {
    pub fn zeros(index: StateIndex, layout: &ParamLayout) -> Self {
        let dim = layout.dim();
        let blocks: Vec<Range<usize>> = (0..index.agents).map(|j| layout.agent_range(j)).collect();
        DerivativeState {
            time: 0.0,
            index,
            dim,
            rho: blocks.iter().map(|b| vec![0.0; b.len()]).collect(),
            blocks,
            queues: vec![0.0; (index.len() - index.agents) * dim],
        }
    }

    /// Row of state component `q` (as laid out by `StateIndex`).
    pub fn row(&self, q: usize) -> Vec<f64> {
        let n = self.index.agents;
        if q < n {
            let mut out = vec![0.0; self.dim];
            out[self.blocks[q].clone()].copy_from_slice(&self.rho[q]);
            out
        } else {
            self.queue_row(q).to_vec()
        }
    }

    pub fn queue_row(&self, q: usize) -> &[f64] {
        let r = q - self.index.agents;
        &self.queues[r * self.dim..(r + 1) * self.dim]
    }

    pub fn queue_row_mut(&mut self, q: usize) -> &mut [f64] {
        let r = q - self.index.agents;
        &mut self.queues[r * self.dim..(r + 1) * self.dim]
    }

    pub fn x(&self, i: usize) -> &[f64] {
        self.queue_row(self.index.x(i))
    }

    pub fn z(&self, i: usize, j: usize) -> &[f64] {
        self.queue_row(self.index.z(i, j))
    }

    pub fn y(&self, i: usize) -> &[f64] {
        self.queue_row(self.index.y(i))
    }

    pub fn is_finite(&self) -> bool {
        self.queues.iter().chain(self.rho.iter().flatten()).all(|v| v.is_finite())
    }
}
