//! Event-driven integration of the hybrid queue system along fixed
//! trajectories.

mod detect;
mod plant;

pub use detect::{detect_events, hermite_excursion, localize, Crossing, StepScan};
pub use plant::{Guard, Mode, StateIndex};
pub(crate) use plant::Plant;

use log::warn;

use crate::error::{HarvestError, Result};
use crate::model::{
    proximity_at, ArrivalRealization, EventKind, EventRecord, MissionConfig, SystemState, Vec2,
};
use crate::trajectory::TrajectorySet;

/// Integrator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Nominal step; steps end on the uniform grid `k T / n`.
    pub step: f64,
    /// Absolute event-time tolerance.
    pub tolerance: f64,
    /// Smallest step reached by halving when a guard might cross twice.
    pub min_step: f64,
    /// Largest step-doubling phase error accepted per step; steps are halved
    /// until it holds. Matters near cusps where the phase rate spikes.
    pub phase_tolerance: f64,
}

impl SimOptions {
    pub fn for_config(config: &MissionConfig) -> Self {
        SimOptions {
            step: config.step,
            tolerance: config.time_tolerance(),
            min_step: config.step * 1e-6,
            phase_tolerance: 1e-10,
        }
    }
}

/// Largest negative queue value tolerated before the run is aborted.
pub const NEGATIVE_QUEUE_LIMIT: f64 = -1e-9;

/// Complete sample path: integrator nodes, modes and the event log.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub index: StateIndex,
    pub times: Vec<f64>,
    /// Node states, flat with stride `index.len()`.
    pub states: Vec<f64>,
    /// Mode of each step between consecutive nodes, as an index into `modes`.
    pub step_modes: Vec<usize>,
    pub modes: Vec<Mode>,
    pub events: Vec<EventRecord>,
    pub warnings: Vec<String>,
    /// Data present at `t = 0`.
    pub initial_data: f64,
}

/// Connection of one agent to one target over a time interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectionInterval {
    pub target: usize,
    pub agent: usize,
    pub start: f64,
    pub end: f64,
}

impl SimTrace {
    pub fn node_count(&self) -> usize {
        self.times.len()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        let w = self.index.len();
        &self.states[k * w..(k + 1) * w]
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trace has nodes")
    }

    /// Mode in force just after node `k` (or the last mode at the final node).
    pub fn mode_after(&self, k: usize) -> &Mode {
        let s = k.min(self.step_modes.len() - 1);
        &self.modes[self.step_modes[s]]
    }

    /// Mode in force just before node `k` (or the first mode at node 0).
    pub fn mode_before(&self, k: usize) -> &Mode {
        &self.modes[self.step_modes[k.saturating_sub(1)]]
    }

    /// Agent positions at node `k` on the side selected by `after`.
    pub fn positions(&self, traj: &TrajectorySet, k: usize, after: bool) -> Vec<Vec2> {
        let mode = if after {
            self.mode_after(k)
        } else {
            self.mode_before(k)
        };
        let y = self.state(k);
        (0..self.index.agents)
            .map(|j| traj.position(j, mode.segment[j], y[self.index.rho(j)]))
            .collect()
    }

    pub fn system_state(&self, traj: &TrajectorySet, k: usize) -> SystemState {
        let y = self.state(k);
        let idx = self.index;
        let (n, m) = (idx.agents, idx.targets);
        SystemState {
            time: self.times[k],
            target_queue: (0..m).map(|i| y[idx.x(i)]).collect(),
            delivered: (0..m).map(|i| y[idx.y(i)]).collect(),
            onboard: (0..m * n).map(|q| y[idx.z(q / n, q % n)]).collect(),
            positions: self.positions(traj, k, true),
            phases: (0..n).map(|j| y[idx.rho(j)]).collect(),
            owner: self.mode_after(k).owner.clone(),
        }
    }

    pub fn final_state(&self, traj: &TrajectorySet) -> SystemState {
        self.system_state(traj, self.node_count() - 1)
    }

    /// Total queued, on-board and delivered data at node `k`.
    pub fn total_data(&self, k: usize) -> f64 {
        self.state(k)[self.index.queues()].iter().sum()
    }

    /// Intervals during which each agent held each target's connection.
    pub fn connection_intervals(&self) -> Vec<ConnectionInterval> {
        let m = self.index.targets;
        let mut open: Vec<Option<(usize, f64)>> = vec![None; m];
        let mut out = Vec::new();
        for (s, &mi) in self.step_modes.iter().enumerate() {
            let t = self.times[s];
            for i in 0..m {
                let owner = self.modes[mi].owner[i];
                if open[i].map(|o| o.0) != owner {
                    if let Some((agent, start)) = open[i].take() {
                        out.push(ConnectionInterval {
                            target: i,
                            agent,
                            start,
                            end: t,
                        });
                    }
                    open[i] = owner.map(|o| (o, t));
                }
            }
        }
        let end = self.final_time();
        for (i, o) in open.into_iter().enumerate() {
            if let Some((agent, start)) = o {
                out.push(ConnectionInterval {
                    target: i,
                    agent,
                    start,
                    end,
                });
            }
        }
        out.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.target.cmp(&b.target)));
        out
    }
}

/// Simulates the mission over `[0, T]` with the configuration's integrator settings.
pub fn simulate(
    config: &MissionConfig,
    traj: &TrajectorySet,
    arrivals: &ArrivalRealization,
) -> Result<SimTrace> {
    simulate_with(config, traj, arrivals, SimOptions::for_config(config))
}

pub fn simulate_with(
    config: &MissionConfig,
    traj: &TrajectorySet,
    arrivals: &ArrivalRealization,
    options: SimOptions,
) -> Result<SimTrace> {
    if traj.agents() != config.agents {
        return Err(HarvestError::config(format!(
            "trajectory set has {} agents, mission has {}",
            traj.agents(),
            config.agents
        )));
    }
    if arrivals.profiles.len() != config.targets.len() {
        return Err(HarvestError::config(
            "arrival realization does not match the target count",
        ));
    }
    let plant = Plant::new(config, traj, arrivals);
    Runner::new(plant, options)?.run()
}

/// Connection arbiter: the earliest entrant keeps a target; on its departure
/// the lowest-index agent still in range takes over.
pub fn connection_arbiter(current: Option<usize>, departing: Option<usize>, in_range: &[bool]) -> Option<usize> {
    match current {
        Some(o) if departing != Some(o) && in_range[o] => Some(o),
        _ => in_range
            .iter()
            .enumerate()
            .find(|&(j, &r)| r && departing != Some(j))
            .map(|(j, _)| j),
    }
}

struct Runner<'a> {
    plant: Plant<'a>,
    opts: SimOptions,
    trace: SimTrace,
    mode: Mode,
    guards: Vec<Guard>,
    t: f64,
    y: Vec<f64>,
    eval: plant::Evaluation,
}

impl<'a> Runner<'a> {
    fn new(plant: Plant<'a>, opts: SimOptions) -> Result<Self> {
        let idx = plant.idx;
        let (n, m) = (idx.agents, idx.targets);
        let mut y = vec![0.0; idx.len()];
        for i in 0..m {
            y[idx.x(i)] = plant.config.targets[i].initial_queue;
        }
        let segment = vec![0; n];
        let pos: Vec<Vec2> = (0..n).map(|j| plant.traj.position(j, 0, 0.0)).collect();
        let mut in_target = vec![false; m * n];
        for i in 0..m {
            for j in 0..n {
                let t = &plant.config.targets[i];
                in_target[i * n + j] = pos[j].distance(t.position) - t.range[j] <= 0.0;
            }
        }
        let in_base = (0..n)
            .map(|j| pos[j].distance(plant.config.base.position) - plant.config.base.range[j] <= 0.0)
            .collect();
        let owner: Vec<Option<usize>> = (0..m)
            .map(|i| connection_arbiter(None, None, &in_target[i * n..(i + 1) * n]))
            .collect();
        let mut onboard_active = vec![false; m * n];
        let mut queue_active = vec![false; m];
        for i in 0..m {
            if let Some(o) = owner[i] {
                onboard_active[i * n + o] = true;
            }
            let sigma = plant.arrivals.rate(i, 0.0);
            let collect = owner[i].map_or(0.0, |o| {
                plant.config.targets[i].collection_rate[o] * plant.target_proximity(i, o, pos[o])
            });
            queue_active[i] = y[idx.x(i)] > 0.0 || sigma - collect > 0.0;
        }
        let mode = Mode {
            segment,
            owner,
            queue_active,
            onboard_active,
            in_target,
            in_base,
        };
        let guards = plant.guards_for(&mode);
        let eval = plant.evaluate(0.0, &y, &mode, &guards)?;
        let trace = SimTrace {
            index: idx,
            times: vec![0.0],
            states: y.clone(),
            step_modes: Vec::new(),
            modes: vec![mode.clone()],
            events: Vec::new(),
            warnings: Vec::new(),
            initial_data: y[idx.queues()].iter().sum(),
        };
        Ok(Runner {
            plant,
            opts,
            trace,
            mode,
            guards,
            t: 0.0,
            y,
            eval,
        })
    }

    fn run(mut self) -> Result<SimTrace> {
        let horizon = self.plant.config.horizon;
        let n_grid = ((horizon / self.opts.step).round() as usize).max(1);
        let grid = |k: usize| {
            if k >= n_grid {
                horizon
            } else {
                horizon * k as f64 / n_grid as f64
            }
        };
        let mut k = 1;
        while self.t < horizon {
            while grid(k) <= self.t {
                k += 1;
            }
            let mut target = grid(k);
            let mut breakpoint = false;
            if let Some(b) = self.plant.arrivals.next_breakpoint(self.t) {
                if b <= target {
                    breakpoint = true;
                    target = b;
                }
            }
            let reached = self.advance(target)?;
            if reached && breakpoint {
                self.breakpoint_events();
            }
        }
        Ok(self.trace)
    }

    fn push_node(&mut self) {
        let current = self.trace.modes.len() - 1;
        if self.trace.modes[current] != self.mode {
            self.trace.modes.push(self.mode.clone());
        }
        self.trace.times.push(self.t);
        self.trace.states.extend_from_slice(&self.y);
    }

    fn mode_index(&mut self) -> usize {
        let current = self.trace.modes.len() - 1;
        if self.trace.modes[current] != self.mode {
            self.trace.modes.push(self.mode.clone());
        }
        self.trace.modes.len() - 1
    }

    /// Advances towards `target`; returns whether it was reached without an event.
    fn advance(&mut self, target: f64) -> Result<bool> {
        let mut h = target - self.t;
        let len = self.y.len();
        let mut y1 = vec![0.0; len];
        loop {
            if h > self.opts.min_step
                && self.plant.phase_error(&self.mode, &self.y, &self.eval.rates, h)? > self.opts.phase_tolerance
            {
                h *= 0.5;
                continue;
            }
            self.plant
                .rk4(self.t, &self.y, h, &self.mode, &self.eval.rates, &mut y1)?;
            let t1 = if h == target - self.t { target } else { self.t + h };
            let e1 = self.plant.evaluate(t1, &y1, &self.mode, &self.guards)?;
            let mut flipped = Vec::new();
            let mut ambiguous = false;
            for (g, guard) in self.guards.iter().enumerate() {
                let old = self.plant.mode_side(*guard, &self.mode);
                let (g0, d0) = self.eval.guards[g];
                let (g1, d1) = e1.guards[g];
                if guard.side(g1) != old {
                    flipped.push(g);
                } else if h > self.opts.min_step
                    && hermite_excursion(g0, d0, g1, d1, h, |v| guard.side(v), old)
                {
                    ambiguous = true;
                    break;
                }
            }
            if ambiguous {
                h *= 0.5;
                continue;
            }
            if flipped.is_empty() {
                self.accept(t1, &y1, e1)?;
                return Ok(t1 == target);
            }
            self.handle_crossings(h, &y1, e1, &flipped)?;
            return Ok(false);
        }
    }

    fn accept(&mut self, t1: f64, y1: &[f64], e1: plant::Evaluation) -> Result<()> {
        let mi = self.mode_index();
        let queues = &y1[self.plant.idx.queues()];
        if let Some(q) = queues.iter().position(|v| *v < NEGATIVE_QUEUE_LIMIT) {
            return Err(HarvestError::IntegratorFailure {
                time: t1,
                reason: format!("queue component {q} fell to {:e}", queues[q]),
            });
        }
        self.trace.step_modes.push(mi);
        self.t = t1;
        self.y.copy_from_slice(y1);
        self.eval = e1;
        self.push_node();
        Ok(())
    }

    fn handle_crossings(
        &mut self,
        h: f64,
        y1: &[f64],
        e1: plant::Evaluation,
        flipped: &[usize],
    ) -> Result<()> {
        let t0 = self.t;
        let tol = self.opts.tolerance;
        let mut tau = t0 + h;
        let mut ytmp = vec![0.0; y1.len()];
        for &g in flipped {
            let guard = self.guards[g];
            let old = self.plant.mode_side(guard, &self.mode);
            let plant = &self.plant;
            let (mode, y0, k1, guards) = (&self.mode, &self.y, &self.eval.rates, &self.guards);
            let root = localize(
                |s| {
                    plant.rk4(t0, y0, s - t0, mode, k1, &mut ytmp)?;
                    Ok(plant.evaluate(s, &ytmp, mode, guards)?.guards[g].0)
                },
                |v| guard.side(v),
                old,
                t0,
                self.eval.guards[g].0,
                t0 + h,
                e1.guards[g].0,
                tol,
            )?;
            tau = tau.min(root);
        }
        let mut yt = vec![0.0; y1.len()];
        self.plant
            .rk4(t0, &self.y, tau - t0, &self.mode, &self.eval.rates, &mut yt)?;
        let et = self.plant.evaluate(tau, &yt, &self.mode, &self.guards)?;
        let primary: Vec<Guard> = self
            .guards
            .iter()
            .enumerate()
            .filter(|(g, guard)| guard.side(et.guards[*g].0) != self.plant.mode_side(**guard, &self.mode))
            .map(|(_, guard)| *guard)
            .collect();
        // The step up to the event runs in the old mode.
        let mi = self.mode_index();
        self.trace.step_modes.push(mi);
        self.t = tau;
        self.y = yt;
        self.apply_events(&primary, et)
    }

    fn apply_events(&mut self, primary: &[Guard], pre: plant::Evaluation) -> Result<()> {
        let plant = &self.plant;
        let idx = plant.idx;
        let (n, m) = (idx.agents, idx.targets);
        let t = self.t;
        let pre_mode = self.mode.clone();
        let mut mode = self.mode.clone();
        let mut kinds: Vec<(EventKind, Option<usize>, bool)> = Vec::new();
        let simultaneous = primary.len() > 1;
        if simultaneous {
            let msg = format!("{} coincident events at t={t}", primary.len());
            warn!("{msg}");
            self.trace.warnings.push(msg);
        }

        for g in primary {
            if let Guard::Segment(j) = *g {
                mode.segment[j] += 1;
                kinds.push((
                    EventKind::SegmentCompleted {
                        agent: j,
                        segment: mode.segment[j],
                    },
                    None,
                    true,
                ));
            }
        }
        let pos: Vec<Vec2> = (0..n)
            .map(|j| plant.traj.position(j, mode.segment[j], self.y[idx.rho(j)]))
            .collect();
        let is_primary_range = |g: Guard| primary.contains(&g);
        for i in 0..m {
            let target = &plant.config.targets[i];
            for j in 0..n {
                let inside = pos[j].distance(target.position) - target.range[j] <= 0.0;
                if inside == mode.in_target[i * n + j] {
                    continue;
                }
                mode.in_target[i * n + j] = inside;
                let caused_here = is_primary_range(Guard::Target(i, j));
                if inside {
                    if mode.owner[i].is_none() {
                        mode.owner[i] = Some(j);
                        mode.onboard_active[i * n + j] = true;
                    }
                    kinds.push((EventKind::EnteredTarget { target: i, agent: j }, None, caused_here));
                } else {
                    let mut handoff = None;
                    if mode.owner[i] == Some(j) {
                        let range = &mode.in_target[i * n..(i + 1) * n];
                        let next = connection_arbiter(Some(j), Some(j), range);
                        mode.owner[i] = next;
                        mode.onboard_active[i * n + j] = self.y[idx.z(i, j)] > 0.0;
                        if let Some(l) = next {
                            mode.onboard_active[i * n + l] = true;
                            handoff = Some(l);
                        }
                    }
                    kinds.push((EventKind::LeftTarget { target: i, agent: j }, handoff, caused_here));
                }
            }
        }
        for j in 0..n {
            let base = &plant.config.base;
            let inside = pos[j].distance(base.position) - base.range[j] <= 0.0;
            if inside != mode.in_base[j] {
                mode.in_base[j] = inside;
                let kind = if inside {
                    EventKind::EnteredBase { agent: j }
                } else {
                    EventKind::LeftBase { agent: j }
                };
                kinds.push((kind, None, is_primary_range(Guard::Base(j))));
            }
        }
        for g in primary {
            match *g {
                Guard::Queue(i) => {
                    self.y[idx.x(i)] = 0.0;
                    mode.queue_active[i] = false;
                    kinds.push((EventKind::QueueEmptied { target: i }, None, true));
                }
                Guard::Resume(i) => {
                    mode.queue_active[i] = true;
                    kinds.push((EventKind::QueueResumed { target: i }, None, true));
                }
                Guard::Onboard(i, j) => {
                    self.y[idx.z(i, j)] = 0.0;
                    if mode.owner[i] != Some(j) {
                        mode.onboard_active[i * n + j] = false;
                    }
                    kinds.push((EventKind::OnboardEmptied { target: i, agent: j }, None, true));
                }
                _ => {}
            }
        }
        // Clamped queues whose connection changed may need to resume at once.
        for i in 0..m {
            if mode.queue_active[i] {
                continue;
            }
            let sigma = plant.arrivals.rate(i, t);
            let collect = mode.owner[i].map_or(0.0, |o| {
                plant.config.targets[i].collection_rate[o] * plant.target_proximity(i, o, pos[o])
            });
            if sigma - collect > 0.0 {
                mode.queue_active[i] = true;
                kinds.push((EventKind::QueueResumed { target: i }, None, false));
            }
        }

        self.mode = mode;
        self.guards = plant.guards_for(&self.mode);
        let post = plant.evaluate(t, &self.y, &self.mode, &self.guards)?;
        let before = snapshot(idx, &pre.rates);
        let after = snapshot(idx, &post.rates);
        let node = self.trace.node_count();
        let mut records = Vec::with_capacity(kinds.len());
        for (kind, handoff, primary_event) in kinds {
            let agent = kind.agent().or_else(|| {
                kind.target().and_then(|i| pre_mode.owner[i].or(self.mode.owner[i]))
            });
            let p_target = match (kind.target(), agent) {
                (Some(i), Some(j)) => proximity_at(
                    pos[j].distance(plant.config.targets[i].position),
                    plant.config.targets[i].range[j],
                ),
                _ => 0.0,
            };
            let p_base = agent.map_or(0.0, |j| plant.base_proximity(j, pos[j]));
            let sigma = kind.target().map(|i| plant.arrivals.rate(i, t));
            let sigma_slope = kind.target().map(|i| plant.arrivals.slope(i, t));
            records.push(EventRecord {
                time: t,
                kind,
                node,
                p_target,
                p_base,
                handoff,
                sigma,
                sigma_slope,
                before: before.clone(),
                after: after.clone(),
                simultaneous: simultaneous && primary_event,
                induced: !primary_event,
            });
        }
        self.push_node();
        self.trace.events.extend(records);
        self.eval = post;
        Ok(())
    }

    fn breakpoint_events(&mut self) {
        let t = self.t;
        let node = self.trace.node_count() - 1;
        let flows = snapshot(self.plant.idx, &self.eval.rates);
        let targets: Vec<usize> = self.plant.arrivals.breakpoints_at(t).collect();
        for i in targets {
            let owner = self.mode.owner[i];
            let pos = owner.map(|o| self.eval.kin[o].position);
            self.trace.events.push(EventRecord {
                time: t,
                kind: EventKind::RateBreakpoint { target: i },
                node,
                p_target: owner
                    .zip(pos)
                    .map_or(0.0, |(o, p)| self.plant.target_proximity(i, o, p)),
                p_base: 0.0,
                handoff: None,
                sigma: Some(self.plant.arrivals.rate(i, t)),
                sigma_slope: Some(self.plant.arrivals.slope(i, t)),
                before: flows.clone(),
                after: flows.clone(),
                simultaneous: false,
                induced: false,
            });
        }
    }
}

fn snapshot(idx: StateIndex, rates: &[f64]) -> crate::model::FlowSnapshot {
    let (n, m) = (idx.agents, idx.targets);
    crate::model::FlowSnapshot {
        target: (0..m).map(|i| rates[idx.x(i)]).collect(),
        onboard: (0..m * n).map(|q| rates[idx.z(q / n, q % n)]).collect(),
        base: (0..m).map(|i| rates[idx.y(i)]).collect(),
    }
}
