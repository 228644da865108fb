//! Flow rates and guard functions of the hybrid system in a fixed mode.

use std::f64::consts::TAU;

use crate::error::Result;
use crate::model::{proximity_at, unit_from, ArrivalRealization, MissionConfig, Vec2};
use crate::trajectory::{Kinematics, TrajectorySet};

/// Discrete state: everything that selects the active vector field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mode {
    /// Active ellipse of each agent.
    pub segment: Vec<usize>,
    /// Agent connected to each target.
    pub owner: Vec<Option<usize>>,
    /// `X_i > 0` dynamics (otherwise clamped at zero).
    pub queue_active: Vec<bool>,
    /// `Z_ij` evolves (otherwise frozen at zero), `[i * N + j]`.
    pub onboard_active: Vec<bool>,
    /// Agent within range of target, `[i * N + j]`.
    pub in_target: Vec<bool>,
    /// Agent within range of the base.
    pub in_base: Vec<bool>,
}

/// Index map of the continuous state `(ρ, X, Z, Y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateIndex {
    pub agents: usize,
    pub targets: usize,
}

impl StateIndex {
    pub fn rho(&self, j: usize) -> usize {
        j
    }
    pub fn x(&self, i: usize) -> usize {
        self.agents + i
    }
    pub fn z(&self, i: usize, j: usize) -> usize {
        self.agents + self.targets + i * self.agents + j
    }
    pub fn y(&self, i: usize) -> usize {
        self.agents + self.targets * (1 + self.agents) + i
    }
    pub fn len(&self) -> usize {
        self.agents + self.targets * (2 + self.agents)
    }
    pub fn queues(&self) -> std::ops::Range<usize> {
        self.agents..self.len()
    }
}

/// A switching surface watched in the current mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Guard {
    /// `X_i` while active; fires when negative.
    Queue(usize),
    /// `σ_i - μ p_owner` while clamped; fires when positive.
    Resume(usize),
    /// `Z_ij` while delivering; fires when negative.
    Onboard(usize, usize),
    /// `d_ij - r_ij`; fires on a change of side.
    Target(usize, usize),
    /// `d_Bj - r_Bj`; fires on a change of side.
    Base(usize),
    /// `ρ_j - 2π(κ+1)`; fires when non-negative.
    Segment(usize),
}

impl Guard {
    /// Side of the surface a guard value lies on; an event is a change of side.
    pub fn side(&self, value: f64) -> bool {
        match self {
            Guard::Queue(_) | Guard::Onboard(..) => value < 0.0,
            Guard::Resume(_) | Guard::Target(..) | Guard::Base(_) => value > 0.0,
            Guard::Segment(_) => value >= 0.0,
        }
    }
}

/// Rates, kinematics and guard values at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub rates: Vec<f64>,
    pub kin: Vec<Kinematics>,
    /// `(value, time derivative)` per guard.
    pub guards: Vec<(f64, f64)>,
}

pub(crate) struct Plant<'a> {
    pub config: &'a MissionConfig,
    pub traj: &'a TrajectorySet,
    pub arrivals: &'a ArrivalRealization,
    pub idx: StateIndex,
}

impl<'a> Plant<'a> {
    pub fn new(
        config: &'a MissionConfig,
        traj: &'a TrajectorySet,
        arrivals: &'a ArrivalRealization,
    ) -> Self {
        let idx = StateIndex {
            agents: config.agents,
            targets: config.targets.len(),
        };
        Plant {
            config,
            traj,
            arrivals,
            idx,
        }
    }

    pub fn kinematics(&self, mode: &Mode, y: &[f64]) -> Result<Vec<Kinematics>> {
        (0..self.idx.agents)
            .map(|j| self.traj.kinematics(j, mode.segment[j], y[self.idx.rho(j)]))
            .collect()
    }

    pub fn positions(&self, mode: &Mode, y: &[f64]) -> Vec<Vec2> {
        (0..self.idx.agents)
            .map(|j| self.traj.position(j, mode.segment[j], y[self.idx.rho(j)]))
            .collect()
    }

    pub fn target_proximity(&self, i: usize, j: usize, s: Vec2) -> f64 {
        let t = &self.config.targets[i];
        proximity_at(s.distance(t.position), t.range[j])
    }

    pub fn base_proximity(&self, j: usize, s: Vec2) -> f64 {
        let b = &self.config.base;
        proximity_at(s.distance(b.position), b.range[j])
    }

    /// Queue flow rates given agent positions; `out` covers the queue part only
    /// when `queues_only`.
    pub fn queue_rates(&self, t: f64, mode: &Mode, pos: &[Vec2], out: &mut [f64]) {
        let (n, m) = (self.idx.agents, self.idx.targets);
        for i in 0..m {
            out[self.idx.y(i)] = 0.0;
        }
        for i in 0..m {
            let target = &self.config.targets[i];
            let sigma = self.arrivals.rate(i, t);
            let active = mode.queue_active[i];
            let collect = match mode.owner[i] {
                Some(o) if active => target.collection_rate[o] * self.target_proximity(i, o, pos[o]),
                Some(_) => sigma,
                None => 0.0,
            };
            out[self.idx.x(i)] = if active { sigma - collect } else { 0.0 };
            for j in 0..n {
                let k = i * n + j;
                let zi = self.idx.z(i, j);
                if !mode.onboard_active[k] {
                    out[zi] = 0.0;
                    continue;
                }
                let inflow = if mode.owner[i] == Some(j) { collect } else { 0.0 };
                let deliver =
                    self.config.base.delivery_rate[i][j] * self.base_proximity(j, pos[j]);
                out[zi] = inflow - deliver;
                out[self.idx.y(i)] += deliver;
            }
        }
    }

    pub fn evaluate(&self, t: f64, y: &[f64], mode: &Mode, guards: &[Guard]) -> Result<Evaluation> {
        let kin = self.kinematics(mode, y)?;
        let mut rates = vec![0.0; self.idx.len()];
        for (j, k) in kin.iter().enumerate() {
            rates[self.idx.rho(j)] = k.phase_rate;
        }
        let pos: Vec<Vec2> = kin.iter().map(|k| k.position).collect();
        self.queue_rates(t, mode, &pos, &mut rates);
        let guards = guards
            .iter()
            .map(|g| self.guard_value(*g, t, y, mode, &kin, &rates))
            .collect();
        Ok(Evaluation { rates, kin, guards })
    }

    /// Step-doubling estimate of the RK4 phase error over `h`, maximized over
    /// agents. Phase motion does not depend on the queues, so this is cheap.
    pub fn phase_error(&self, mode: &Mode, y: &[f64], rates: &[f64], h: f64) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for j in 0..self.idx.agents {
            let seg = mode.segment[j];
            let f = |r: f64| self.traj.phase_rate(j, seg, r);
            let step = |r: f64, k1: f64, h: f64| -> Result<f64> {
                let k2 = f(r + 0.5 * h * k1)?;
                let k3 = f(r + 0.5 * h * k2)?;
                let k4 = f(r + h * k3)?;
                Ok(r + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
            };
            let r0 = y[self.idx.rho(j)];
            let k1 = rates[self.idx.rho(j)];
            let full = step(r0, k1, h)?;
            let mid = step(r0, k1, 0.5 * h)?;
            let half = step(mid, f(mid)?, 0.5 * h)?;
            worst = worst.max((full - half).abs());
        }
        Ok(worst)
    }

    /// Only the RK4 right-hand side.
    pub fn rates(&self, t: f64, y: &[f64], mode: &Mode, out: &mut [f64]) -> Result<()> {
        let kin = self.kinematics(mode, y)?;
        for (j, k) in kin.iter().enumerate() {
            out[self.idx.rho(j)] = k.phase_rate;
        }
        let pos: Vec<Vec2> = kin.iter().map(|k| k.position).collect();
        self.queue_rates(t, mode, &pos, out);
        Ok(())
    }

    fn guard_value(
        &self,
        g: Guard,
        t: f64,
        y: &[f64],
        mode: &Mode,
        kin: &[Kinematics],
        rates: &[f64],
    ) -> (f64, f64) {
        match g {
            Guard::Queue(i) => (y[self.idx.x(i)], rates[self.idx.x(i)]),
            Guard::Onboard(i, j) => (y[self.idx.z(i, j)], rates[self.idx.z(i, j)]),
            Guard::Resume(i) => {
                let sigma = self.arrivals.rate(i, t);
                let slope = self.arrivals.slope(i, t);
                match mode.owner[i] {
                    Some(o) => {
                        let target = &self.config.targets[i];
                        let (mu, r) = (target.collection_rate[o], target.range[o]);
                        let (n, d) = unit_from(kin[o].position, target.position);
                        let p = proximity_at(d, r);
                        let dp = if d < r { -n.dot(kin[o].velocity()) / r } else { 0.0 };
                        (sigma - mu * p, slope - mu * dp)
                    }
                    None => (sigma, slope),
                }
            }
            Guard::Target(i, j) => {
                let target = &self.config.targets[i];
                let (n, d) = unit_from(kin[j].position, target.position);
                (d - target.range[j], n.dot(kin[j].velocity()))
            }
            Guard::Base(j) => {
                let base = &self.config.base;
                let (n, d) = unit_from(kin[j].position, base.position);
                (d - base.range[j], n.dot(kin[j].velocity()))
            }
            Guard::Segment(j) => {
                let end = TAU * (mode.segment[j] + 1) as f64;
                (y[self.idx.rho(j)] - end, kin[j].phase_rate)
            }
        }
    }

    /// Guards watched in `mode`, in a fixed order.
    pub fn guards_for(&self, mode: &Mode) -> Vec<Guard> {
        let (n, m) = (self.idx.agents, self.idx.targets);
        let mut g = Vec::new();
        for j in 0..n {
            if self.traj.segment_end(j, mode.segment[j]).is_some() {
                g.push(Guard::Segment(j));
            }
        }
        for i in 0..m {
            for j in 0..n {
                g.push(Guard::Target(i, j));
            }
        }
        for j in 0..n {
            g.push(Guard::Base(j));
        }
        for i in 0..m {
            g.push(if mode.queue_active[i] {
                Guard::Queue(i)
            } else {
                Guard::Resume(i)
            });
            for j in 0..n {
                if mode.onboard_active[i * n + j] && mode.owner[i] != Some(j) {
                    g.push(Guard::Onboard(i, j));
                }
            }
        }
        g
    }

    /// Side a guard currently sits on according to the mode.
    pub fn mode_side(&self, g: Guard, mode: &Mode) -> bool {
        let n = self.idx.agents;
        match g {
            Guard::Target(i, j) => !mode.in_target[i * n + j],
            Guard::Base(j) => !mode.in_base[j],
            _ => false,
        }
    }

    /// Classic RK4 step.
    pub fn rk4(
        &self,
        t: f64,
        y: &[f64],
        h: f64,
        mode: &Mode,
        k1: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        let len = y.len();
        let mut tmp = vec![0.0; len];
        let mut k2 = vec![0.0; len];
        let mut k3 = vec![0.0; len];
        let mut k4 = vec![0.0; len];
        for q in 0..len {
            tmp[q] = y[q] + 0.5 * h * k1[q];
        }
        self.rates(t + 0.5 * h, &tmp, mode, &mut k2)?;
        for q in 0..len {
            tmp[q] = y[q] + 0.5 * h * k2[q];
        }
        self.rates(t + 0.5 * h, &tmp, mode, &mut k3)?;
        for q in 0..len {
            tmp[q] = y[q] + h * k3[q];
        }
        self.rates(t + h, &tmp, mode, &mut k4)?;
        for q in 0..len {
            out[q] = y[q] + h / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
        }
        Ok(())
    }
}
