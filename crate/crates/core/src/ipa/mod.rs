//! Infinitesimal perturbation analysis of a sample path: event-time
//! derivatives, state-derivative jumps, propagation between events and the
//! gradient of the objective.
//!
//! Between events the sensitivities follow the variational equation of the
//! active mode, integrated with the same RK4 stages as the state. At an event
//! with guard `g` the event time moves by `τ' = -(dg/dΘ) / ġ` and the state
//! derivatives jump by `y'⁺ = R(y'⁻ + f⁻τ') - f⁺τ'`, `R` being the reset of the
//! emptied queue.

mod state;

pub use state::DerivativeState;

use crate::error::{HarvestError, Result};
use crate::model::{d_plus, unit_from, ArrivalRealization, EventKind, EventRecord, Vec2};
use crate::objective::{idling_step_weights, CostBreakdown, Problem};
use crate::simulator::{Mode, Plant, SimTrace, StateIndex};
use crate::trajectory::{Kinematics, ParamVector, Scratch, TrajectorySet};

/// Smallest guard rate `|ġ|` at an event for which `τ'` is defined.
pub const GRAZING_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IpaOptions {
    /// Account for the agents' phases shifting with the parameters. When off,
    /// positions are differentiated at fixed phase.
    pub phase_sensitivity: bool,
    /// Keep the derivative state on both sides of every event.
    pub record_jumps: bool,
}

impl Default for IpaOptions {
    fn default() -> Self {
        IpaOptions {
            phase_sensitivity: true,
            record_jumps: false,
        }
    }
}

/// `τ'` of one event that was triggered by its own guard.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSensitivity {
    pub node: usize,
    pub time: f64,
    pub kind: EventKind,
    pub tau_prime: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    pub node: usize,
    pub time: f64,
    pub before: DerivativeState,
    pub after: DerivativeState,
}

/// Objective gradient split by origin, plus the event sensitivities.
#[derive(Debug, Clone, PartialEq)]
pub struct IpaGradient {
    pub total: Vec<f64>,
    /// `(1/T) ∫ dL/dΘ dt`.
    pub running: Vec<f64>,
    /// `(1/T) Σ (L⁻ - L⁺) τ'` over segment changes, where positions jump.
    pub switching: Vec<f64>,
    pub terminal: Vec<f64>,
    pub penalty: Vec<f64>,
    pub events: Vec<EventSensitivity>,
    pub jumps: Vec<JumpRecord>,
    pub final_state: DerivativeState,
}

/// Simulates at `theta` and returns the cost with its IPA gradient.
pub fn evaluate_with_gradient(
    problem: &Problem,
    theta: &ParamVector,
    arrivals: &ArrivalRealization,
    options: IpaOptions,
) -> Result<(CostBreakdown, IpaGradient)> {
    let (traj, trace) = problem.simulate(theta, arrivals)?;
    let cost = problem.total_cost(&traj, &trace);
    let grad = assemble_gradient(problem, &traj, &trace, arrivals, options)?;
    Ok((cost, grad))
}

/// Gradient of the objective along a simulated path.
///
/// Reads the trace's nodes, modes and event kinds; the annotations stored on
/// event records are not used.
pub fn assemble_gradient(
    problem: &Problem,
    traj: &TrajectorySet,
    trace: &SimTrace,
    arrivals: &ArrivalRealization,
    options: IpaOptions,
) -> Result<IpaGradient> {
    if trace.step_modes.is_empty() {
        return Err(HarvestError::IntegratorFailure {
            time: 0.0,
            reason: "trace has no integration steps".into(),
        });
    }
    let mut engine = Engine::new(problem, traj, trace, arrivals, options);
    let dim = traj.layout.dim();
    let horizon = problem.config.horizon;
    let mut d = DerivativeState::zeros(trace.index, &traj.layout);
    let mut out = Jumps {
        switching: vec![0.0; dim],
        events: Vec::new(),
        records: Vec::new(),
    };
    let mut running = vec![0.0; dim];
    let steps = trace.step_modes.len();
    let events = &trace.events;
    let mut ev = 0;
    let mut g_prev = engine.integrand(0, trace.mode_after(0), &d)?;
    for k in 0..steps {
        let mode = &trace.modes[trace.step_modes[k]];
        engine.propagate(k, &mut d)?;
        let node = k + 1;
        let h = trace.times[node] - trace.times[k];
        let g_minus = engine.integrand(node, mode, &d)?;
        engine.accumulate(h, &g_prev, &g_minus, &mut running);
        while ev < events.len() && events[ev].node < node {
            ev += 1;
        }
        let start = ev;
        while ev < events.len() && events[ev].node == node {
            ev += 1;
        }
        let changed = start < ev || (node < steps && trace.step_modes[node] != trace.step_modes[k]);
        if changed && node < steps {
            engine.jump(node, &events[start..ev], &mut d, &mut out)?;
            g_prev = engine.integrand(node, trace.mode_after(node), &d)?;
        } else {
            g_prev = g_minus;
        }
        if !d.is_finite() {
            return Err(HarvestError::IntegratorFailure {
                time: trace.times[node],
                reason: "state sensitivities became non-finite".into(),
            });
        }
    }
    for v in running.iter_mut() {
        *v /= horizon;
    }
    let idx = trace.index;
    let mut terminal = vec![0.0; dim];
    let scale = 1.0 / (problem.norms.onboard * horizon);
    for i in 0..idx.targets {
        let a = problem.config.targets[i].weight * scale;
        for j in 0..idx.agents {
            axpy(&mut terminal, a, d.z(i, j));
        }
    }
    let penalty: Vec<f64> = traj
        .penalty()
        .1
        .into_iter()
        .map(|g| problem.config.penalty * g)
        .collect();
    let total: Vec<f64> = (0..dim)
        .map(|q| running[q] + out.switching[q] + terminal[q] + penalty[q])
        .collect();
    if let Some(q) = total.iter().position(|v| !v.is_finite()) {
        return Err(HarvestError::param(
            traj.layout.label(q),
            "has a non-finite gradient component",
        ));
    }
    Ok(IpaGradient {
        total,
        running,
        switching: out.switching,
        terminal,
        penalty,
        events: out.events,
        jumps: out.records,
        final_state: d,
    })
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Gradient integrand at a node. The idling part is kept apart as each
/// agent's product `u` and its sensitivity over the agent's block, for the
/// rule of `idling_step_weights`.
struct Integrand {
    smooth: Vec<f64>,
    idling: Vec<(f64, Vec<f64>)>,
}

struct Jumps {
    switching: Vec<f64>,
    events: Vec<EventSensitivity>,
    records: Vec<JumpRecord>,
}

/// Position sensitivity of one agent over its own parameter block.
#[derive(Debug, Clone)]
struct AgentSens {
    kin: Kinematics,
    sx: Vec<f64>,
    sy: Vec<f64>,
    /// `dρ'/dt`.
    rate: Vec<f64>,
}

struct Engine<'a> {
    problem: &'a Problem,
    traj: &'a TrajectorySet,
    trace: &'a SimTrace,
    plant: Plant<'a>,
    opts: IpaOptions,
    idx: StateIndex,
    dim: usize,
    scratch: Scratch,
    sens: Vec<AgentSens>,
    zeros: Vec<Vec<f64>>,
}

const RK_NODES: [f64; 4] = [0.0, 0.5, 0.5, 1.0];
const RK_WEIGHTS: [f64; 4] = [1.0, 2.0, 2.0, 1.0];

impl<'a> Engine<'a> {
    fn new(
        problem: &'a Problem,
        traj: &'a TrajectorySet,
        trace: &'a SimTrace,
        arrivals: &'a ArrivalRealization,
        opts: IpaOptions,
    ) -> Self {
        let idx = trace.index;
        let layout = &traj.layout;
        let sens = (0..idx.agents)
            .map(|j| {
                let len = layout.agent_range(j).len();
                AgentSens {
                    kin: Kinematics {
                        position: Vec2::ZERO,
                        tangent: Vec2::ZERO,
                        phase_rate: 0.0,
                    },
                    sx: vec![0.0; len],
                    sy: vec![0.0; len],
                    rate: vec![0.0; len],
                }
            })
            .collect();
        Engine {
            problem,
            traj,
            trace,
            plant: Plant::new(&problem.config, traj, arrivals),
            opts,
            idx,
            dim: layout.dim(),
            scratch: Scratch::default(),
            sens,
            zeros: (0..idx.agents)
                .map(|j| vec![0.0; layout.agent_range(j).len()])
                .collect(),
        }
    }

    fn agent(&mut self, j: usize, seg: usize, rho: f64, rho_sens: &[f64], with_rate: bool) -> Result<Kinematics> {
        let rs: &[f64] = if self.opts.phase_sensitivity {
            rho_sens
        } else {
            &self.zeros[j]
        };
        let s = &mut self.sens[j];
        let rate = if with_rate { Some(&mut s.rate[..]) } else { None };
        let kin = self
            .traj
            .sensitivity(j, seg, rho, Some(rs), &mut self.scratch, &mut s.sx, &mut s.sy, rate)?;
        s.kin = kin;
        Ok(kin)
    }

    fn block_start(&self, j: usize) -> usize {
        self.traj.layout.agent_range(j).start
    }

    /// Row offset of queue component `q` in `DerivativeState::queues`.
    fn row(&self, q: usize) -> usize {
        (q - self.idx.agents) * self.dim
    }

    /// Adds `weight · d/dΘ (queue rates)` due to agent `j`, from its current
    /// position sensitivity.
    fn queue_rates(&self, mode: &Mode, j: usize, weight: f64, d: &mut DerivativeState) {
        let cfg = &self.problem.config;
        let idx = self.idx;
        let n = idx.agents;
        let s = &self.sens[j];
        let start = self.block_start(j);
        let pos = s.kin.position;
        for i in 0..idx.targets {
            let k = i * n + j;
            let target = &cfg.targets[i];
            let collecting = mode.owner[i] == Some(j) && mode.queue_active[i] && mode.in_target[k];
            let delivering = mode.onboard_active[k] && mode.in_base[j];
            if collecting {
                let (u, _) = unit_from(pos, target.position);
                let c = -weight * target.collection_rate[j] / target.range[j];
                let (rx, rz) = (self.row(idx.x(i)), self.row(idx.z(i, j)));
                for l in 0..s.sx.len() {
                    let dp = c * (u.x * s.sx[l] + u.y * s.sy[l]);
                    d.queues[rx + start + l] -= dp;
                    d.queues[rz + start + l] += dp;
                }
            }
            if delivering {
                let (u, _) = unit_from(pos, cfg.base.position);
                let c = -weight * cfg.base.delivery_rate[i][j] / cfg.base.range[j];
                let (rz, ry) = (self.row(idx.z(i, j)), self.row(idx.y(i)));
                for l in 0..s.sx.len() {
                    let dp = c * (u.x * s.sx[l] + u.y * s.sy[l]);
                    d.queues[rz + start + l] -= dp;
                    d.queues[ry + start + l] += dp;
                }
            }
        }
    }

    /// Advances the sensitivities over integration step `k`.
    fn propagate(&mut self, k: usize, d: &mut DerivativeState) -> Result<()> {
        let trace = self.trace;
        let mode = &trace.modes[trace.step_modes[k]];
        let h = trace.times[k + 1] - trace.times[k];
        let y0 = trace.state(k);
        for j in 0..self.idx.agents {
            let rho0 = y0[self.idx.rho(j)];
            let rs0 = d.rho[j].clone();
            let len = rs0.len();
            let mut rs = rs0.clone();
            let mut acc = vec![0.0; len];
            let mut w = vec![0.0; len];
            let mut v = 0.0;
            for q in 0..4 {
                let rho = if q == 0 { rho0 } else { rho0 + RK_NODES[q] * h * v };
                if q > 0 {
                    for l in 0..len {
                        rs[l] = rs0[l] + RK_NODES[q] * h * w[l];
                    }
                }
                let kin = self.agent(j, mode.segment[j], rho, &rs, true)?;
                v = kin.phase_rate;
                w.copy_from_slice(&self.sens[j].rate);
                for l in 0..len {
                    acc[l] += RK_WEIGHTS[q] * w[l];
                }
                self.queue_rates(mode, j, h * RK_WEIGHTS[q] / 6.0, d);
            }
            if self.opts.phase_sensitivity {
                for l in 0..len {
                    d.rho[j][l] = rs0[l] + h / 6.0 * acc[l];
                }
            }
        }
        d.time = trace.times[k + 1];
        Ok(())
    }

    /// Derivative of the normalized running cost at node `node` in `mode`.
    fn integrand(&mut self, node: usize, mode: &Mode, d: &DerivativeState) -> Result<Integrand> {
        let trace = self.trace;
        let problem = self.problem;
        let cfg = &problem.config;
        let idx = self.idx;
        let (n, m) = (idx.agents, idx.targets);
        let y = trace.state(node);
        let w = problem.weights();
        let mut g = vec![0.0; self.dim];
        let mut idle = Vec::with_capacity(n);
        for i in 0..m {
            let a = cfg.targets[i].weight;
            axpy(&mut g, w[0] * a, d.x(i));
            axpy(&mut g, -w[1] * a, d.y(i));
        }
        let mut excess = vec![0.0; m];
        let mut units = vec![Vec2::ZERO; m];
        for j in 0..n {
            let kin = self.agent(j, mode.segment[j], y[idx.rho(j)], &d.rho[j], false)?;
            let s = kin.position;

            let (ub, db) = unit_from(s, cfg.base.position);
            let eb = d_plus(db, cfg.base.range[j]);
            let out_b = !mode.in_base[j];
            for (i, t) in cfg.targets.iter().enumerate() {
                let (u, dist) = unit_from(s, t.position);
                units[i] = u;
                excess[i] = d_plus(dist, t.range[j]);
            }
            let prod: f64 = excess.iter().product();
            let mut gi = if out_b { ub * prod } else { Vec2::ZERO };
            for i in 0..m {
                if mode.in_target[i * n + j] {
                    continue;
                }
                let others: f64 = (0..m).filter(|&k| k != i).map(|k| excess[k]).product();
                gi += units[i] * (eb * others);
            }
            let mut gs = Vec2::ZERO;

            let moments = &problem.moments;
            let mut load = 0.0;
            for i in 0..m {
                let a = cfg.targets[i].weight;
                let x = y[idx.x(i)];
                gs += moments.targets[i].gradient(s) * (w[3] * a * x);
                axpy(&mut g, w[3] * a * moments.targets[i].value(s), d.x(i));
                load += a * y[idx.z(i, j)];
            }
            gs += moments.base.gradient(s) * (w[3] * load);
            let vb = moments.base.value(s);
            for i in 0..m {
                axpy(&mut g, w[3] * cfg.targets[i].weight * vb, d.z(i, j));
            }

            let start = self.block_start(j);
            let sj = &self.sens[j];
            for l in 0..sj.sx.len() {
                g[start + l] += gs.x * sj.sx[l] + gs.y * sj.sy[l];
            }
            let du = (0..sj.sx.len()).map(|l| gi.x * sj.sx[l] + gi.y * sj.sy[l]).collect();
            idle.push((eb * prod, du));
        }
        Ok(Integrand { smooth: g, idling: idle })
    }

    /// Adds one step of the running-cost gradient.
    fn accumulate(&self, h: f64, a: &Integrand, b: &Integrand, running: &mut [f64]) {
        for (r, (ga, gb)) in running.iter_mut().zip(a.smooth.iter().zip(&b.smooth)) {
            *r += 0.5 * h * (ga + gb);
        }
        let w = h * self.problem.weights()[2];
        for (j, ((ua, da), (ub, db))) in a.idling.iter().zip(&b.idling).enumerate() {
            let (wa, wb) = idling_step_weights(*ua, *ub);
            let start = self.block_start(j);
            for l in 0..da.len() {
                running[start + l] += w * (wa * da[l] + wb * db[l]);
            }
        }
    }

    /// `(dd/dΘ, ḋ)` for the distance from agent `j` to `w`.
    fn distance_sensitivity(
        &mut self,
        j: usize,
        seg: usize,
        rho: f64,
        d: &DerivativeState,
        w: Vec2,
    ) -> Result<(Vec<f64>, f64)> {
        let kin = self.agent(j, seg, rho, &d.rho[j], false)?;
        let (u, _) = unit_from(kin.position, w);
        let mut row = vec![0.0; self.dim];
        let start = self.block_start(j);
        let s = &self.sens[j];
        for l in 0..s.sx.len() {
            row[start + l] = u.x * s.sx[l] + u.y * s.sy[l];
        }
        Ok((row, u.dot(kin.velocity())))
    }

    /// Event-time derivative of an event at `node`, from the derivative state
    /// just before it and the pre-event flow `fm`.
    fn tau_prime(
        &mut self,
        node: usize,
        kind: &EventKind,
        pre: &Mode,
        d: &DerivativeState,
        fm: &[f64],
    ) -> Result<Vec<f64>> {
        let trace = self.trace;
        let cfg = &self.problem.config;
        let idx = self.idx;
        let t = trace.times[node];
        let y = trace.state(node);
        let (num, den) = match *kind {
            EventKind::QueueEmptied { target } => (d.x(target).to_vec(), fm[idx.x(target)]),
            EventKind::OnboardEmptied { target, agent } => {
                (d.z(target, agent).to_vec(), fm[idx.z(target, agent)])
            }
            EventKind::LeftTarget { target, agent } | EventKind::EnteredTarget { target, agent } => {
                let rho = y[idx.rho(agent)];
                self.distance_sensitivity(agent, pre.segment[agent], rho, d, cfg.targets[target].position)?
            }
            EventKind::LeftBase { agent } | EventKind::EnteredBase { agent } => {
                let rho = y[idx.rho(agent)];
                self.distance_sensitivity(agent, pre.segment[agent], rho, d, cfg.base.position)?
            }
            EventKind::SegmentCompleted { agent, .. } => (d.row(idx.rho(agent)), fm[idx.rho(agent)]),
            EventKind::QueueResumed { target } => {
                let slope = self.plant.arrivals.slope(target, t);
                match pre.owner[target] {
                    Some(o) => {
                        let spec = &cfg.targets[target];
                        let c = spec.collection_rate[o] / spec.range[o];
                        let rho = y[idx.rho(o)];
                        let (row, rate) =
                            self.distance_sensitivity(o, pre.segment[o], rho, d, spec.position)?;
                        (row.into_iter().map(|v| c * v).collect(), slope + c * rate)
                    }
                    None => (vec![0.0; self.dim], slope),
                }
            }
            EventKind::RateBreakpoint { .. } => return Ok(vec![0.0; self.dim]),
        };
        if !(den.abs() >= GRAZING_THRESHOLD) {
            return Err(HarvestError::GrazingEvent { time: t, rate: den });
        }
        Ok(num.into_iter().map(|v| -v / den).collect())
    }

    fn weighted_cost(&self, node: usize, mode: &Mode) -> f64 {
        let y = self.trace.state(node);
        let pos = self.plant.positions(mode, y);
        let r = self.problem.running_cost(self.idx, y, &pos);
        self.problem.weighted(&r)
    }

    /// Applies the derivative jumps of all events logged at `node`.
    fn jump(
        &mut self,
        node: usize,
        records: &[EventRecord],
        d: &mut DerivativeState,
        out: &mut Jumps,
    ) -> Result<()> {
        let trace = self.trace;
        let idx = self.idx;
        let len = idx.len();
        let t = trace.times[node];
        let y = trace.state(node);
        let pre = trace.mode_before(node);
        let post = trace.mode_after(node);
        let primaries: Vec<&EventRecord> = records
            .iter()
            .filter(|r| !r.induced && r.kind.is_endogenous())
            .collect();
        if primaries.is_empty() {
            return Ok(());
        }
        let mut fm = vec![0.0; len];
        let mut fp = vec![0.0; len];
        self.plant.rates(t, y, pre, &mut fm)?;
        self.plant.rates(t, y, post, &mut fp)?;
        let mut taus = Vec::with_capacity(primaries.len());
        for r in &primaries {
            let tau = self.tau_prime(node, &r.kind, pre, d, &fm)?;
            out.events.push(EventSensitivity {
                node,
                time: t,
                kind: r.kind,
                tau_prime: tau.clone(),
            });
            taus.push(tau);
        }
        let before = self.opts.record_jumps.then(|| d.clone());

        // Further queue resets at the same instant move their content along.
        let mut skip = vec![false; len];
        for r in &primaries[1..] {
            match r.kind {
                EventKind::QueueEmptied { target } => {
                    let xr = d.x(target).to_vec();
                    if let Some(o) = pre.owner[target] {
                        axpy(d.queue_row_mut(idx.z(target, o)), 1.0, &xr);
                        skip[idx.z(target, o)] = true;
                    }
                    d.queue_row_mut(idx.x(target)).fill(0.0);
                    skip[idx.x(target)] = true;
                }
                EventKind::OnboardEmptied { target, agent } => {
                    let zr = d.z(target, agent).to_vec();
                    axpy(d.queue_row_mut(idx.y(target)), 1.0, &zr);
                    d.queue_row_mut(idx.z(target, agent)).fill(0.0);
                    skip[idx.z(target, agent)] = true;
                    skip[idx.y(target)] = true;
                }
                _ => {}
            }
        }
        let reset = match primaries[0].kind {
            EventKind::QueueEmptied { target } => Some(idx.x(target)),
            EventKind::OnboardEmptied { target, agent } => Some(idx.z(target, agent)),
            _ => None,
        };
        let tau = &taus[0];
        for q in idx.queues() {
            if skip[q] {
                continue;
            }
            let row = d.queue_row_mut(q);
            if reset == Some(q) {
                for (v, tp) in row.iter_mut().zip(tau) {
                    *v = -fp[q] * tp;
                }
            } else {
                let df = fm[q] - fp[q];
                if df != 0.0 {
                    axpy(row, df, tau);
                }
            }
        }
        if self.opts.phase_sensitivity {
            for j in 0..idx.agents {
                let df = fm[idx.rho(j)] - fp[idx.rho(j)];
                if df != 0.0 {
                    let start = self.block_start(j);
                    for (l, v) in d.rho[j].iter_mut().enumerate() {
                        *v += df * tau[start + l];
                    }
                }
            }
        }

        if let Some(pos) = primaries
            .iter()
            .position(|r| matches!(r.kind, EventKind::SegmentCompleted { .. }))
        {
            let gap = self.weighted_cost(node, pre) - self.weighted_cost(node, post);
            let scale = gap / self.problem.config.horizon;
            axpy(&mut out.switching, scale, &taus[pos]);
        }
        if let Some(before) = before {
            out.records.push(JumpRecord {
                node,
                time: t,
                before,
                after: d.clone(),
            });
        }
        Ok(())
    }
}
