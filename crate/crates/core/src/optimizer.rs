//! Stochastic-approximation descent over trajectory parameters, with
//! replication averaging, feasibility projection and the ellipse
//! segment-count search.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use log::{debug, info};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HarvestError, Result};
use crate::ipa::{assemble_gradient, IpaOptions};
use crate::model::{ArrivalRealization, MissionConfig, Vec2};
use crate::objective::{CostBreakdown, Problem};
use crate::trajectory::{
    Bounds, EllipseSegment, Family, ParamGroup, ParamLayout, ParamVector, ELLIPSE_PARAMS,
};

/// `ν_l = η₀ / (1 + l)^γ`.
pub fn step_size(l: usize, eta0: f64, decay: f64) -> f64 {
    eta0 / (1.0 + l as f64).powf(decay)
}

/// Base step size per parameter group and the decay exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub length: f64,
    pub angle: f64,
    pub frequency: f64,
    pub decay: f64,
}

impl Default for StepSizes {
    fn default() -> Self {
        StepSizes {
            length: 20.0,
            angle: 4.0,
            frequency: 0.2,
            decay: 0.602,
        }
    }
}

impl StepSizes {
    pub fn base(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Length => self.length,
            ParamGroup::Angle => self.angle,
            ParamGroup::Frequency => self.frequency,
        }
    }
}

/// Largest change of any one parameter per iteration, by group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustRegion {
    pub length: f64,
    pub angle: f64,
    pub frequency: f64,
}

impl Default for TrustRegion {
    fn default() -> Self {
        TrustRegion {
            length: 0.5,
            angle: 0.25,
            frequency: 0.05,
        }
    }
}

impl TrustRegion {
    pub fn limit(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Length => self.length,
            ParamGroup::Angle => self.angle,
            ParamGroup::Frequency => self.frequency,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOptions {
    pub iterations: usize,
    pub steps: StepSizes,
    pub trust: TrustRegion,
    /// Sample paths averaged per iteration under stochastic arrivals.
    pub replications: usize,
    pub seed: u64,
    pub grad_tol: f64,
    pub penalty_tol: f64,
    /// Worker threads for replications; `None` uses the global pool.
    pub jobs: Option<usize>,
    pub ipa: IpaOptions,
    /// Keep every ellipse through the base by restoring the passage
    /// constraint after each step and moving along its tangent.
    pub base_passage: bool,
}

impl OptimizerOptions {
    pub const STOCHASTIC_REPLICATIONS: usize = 4;

    pub fn for_config(config: &MissionConfig) -> Self {
        OptimizerOptions {
            iterations: 200,
            steps: StepSizes::default(),
            trust: TrustRegion::default(),
            replications: if config.is_stochastic() {
                Self::STOCHASTIC_REPLICATIONS
            } else {
                1
            },
            seed: 0,
            grad_tol: 1e-7,
            penalty_tol: 1e-6,
            jobs: None,
            ipa: IpaOptions::default(),
            base_passage: true,
        }
    }
}

/// One optimizer iteration, evaluated at the iterate before the update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryRow {
    pub iteration: usize,
    #[serde(flatten)]
    pub cost: CostBreakdown,
    pub grad_norm: f64,
    /// `ν_l` at the length group's base step.
    pub step: f64,
    /// Replications whose gradient was used.
    pub replications: usize,
    /// The previous direction was reused because no gradient was available.
    pub reused_direction: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    /// Last iterate.
    pub theta: ParamVector,
    /// Iterate with the lowest evaluated cost.
    pub best_theta: ParamVector,
    pub best_cost: f64,
    pub history: Vec<HistoryRow>,
}

impl OptimizeOutcome {
    pub fn initial_cost(&self) -> f64 {
        self.history.first().map_or(f64::NAN, |r| r.cost.total)
    }
}

/// Seed of replication `r` at iteration `l`.
fn replication_seed(seed: u64, l: usize, r: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(l as u64 + 1);
    let mut s = 0;
    for _ in 0..=r {
        s = rng.next_u64();
    }
    s
}

struct Sample {
    cost: CostBreakdown,
    gradient: Option<Vec<f64>>,
}

fn evaluate_sample(
    problem: &Problem,
    theta: &ParamVector,
    arrivals: &ArrivalRealization,
    ipa: IpaOptions,
) -> Result<Sample> {
    let (traj, trace) = problem.simulate(theta, arrivals)?;
    let cost = problem.total_cost(&traj, &trace);
    let gradient = match assemble_gradient(problem, &traj, &trace, arrivals, ipa) {
        Ok(g) => Some(g.total),
        Err(HarvestError::GrazingEvent { time, rate }) => {
            debug!("grazing event at t={time} (rate {rate:e}); gradient skipped");
            None
        }
        Err(e) => return Err(e),
    };
    Ok(Sample { cost, gradient })
}

fn mean_cost(samples: &[Sample]) -> CostBreakdown {
    let n = samples.len() as f64;
    let mut c = CostBreakdown::default();
    for s in samples {
        c.total += s.cost.total / n;
        c.queue += s.cost.queue / n;
        c.delivered += s.cost.delivered / n;
        c.idling += s.cost.idling / n;
        c.field += s.cost.field / n;
        c.terminal += s.cost.terminal / n;
        c.penalty += s.cost.penalty / n;
    }
    c
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Components that `bounds` would clip if moved along `dir`.
fn pinned(theta: &ParamVector, bounds: &Bounds, dir: &[f64]) -> Vec<bool> {
    let mut moved = theta.clone();
    for (v, d) in moved.values.iter_mut().zip(dir) {
        *v += 1e-9 * d.signum();
    }
    let mut clipped = moved.clone();
    bounds.project(&mut clipped);
    theta
        .layout
        .keys
        .iter()
        .enumerate()
        .map(|(k, key)| {
            let wraps = matches!(key.name.group(), ParamGroup::Angle);
            !wraps && dir[k] != 0.0 && clipped.values[k] != moved.values[k]
        })
        .collect()
}

/// Moves every ellipse back onto the base passage constraint by
/// Gauss-Newton steps on `1 - F(w_B)`, holding components that sit on a
/// bound fixed.
pub fn restore_base_passage(theta: &mut ParamVector, base: Vec2, bounds: &Bounds) {
    if theta.layout.family != Family::Ellipse {
        return;
    }
    bounds.project(theta);
    for _ in 0..50 {
        let mut step = vec![0.0; theta.dim()];
        let mut worst: f64 = 0.0;
        for (chunk, s) in theta.values.chunks(ELLIPSE_PARAMS).zip(step.chunks_mut(ELLIPSE_PARAMS)) {
            let (r, dr) = EllipseSegment::from_slice(chunk).base_residual(base);
            worst = worst.max(r.abs());
            for (v, g) in s.iter_mut().zip(dr) {
                *v = -r * g;
            }
        }
        if worst < 1e-13 {
            return;
        }
        let fixed = pinned(theta, bounds, &step);
        let mut dr_all = vec![0.0; theta.dim()];
        for (chunk, d) in theta.values.chunks(ELLIPSE_PARAMS).zip(dr_all.chunks_mut(ELLIPSE_PARAMS)) {
            d.copy_from_slice(&EllipseSegment::from_slice(chunk).base_residual(base).1);
        }
        for ((chunk, d), free) in theta
            .values
            .chunks_mut(ELLIPSE_PARAMS)
            .zip(dr_all.chunks(ELLIPSE_PARAMS))
            .zip(fixed.chunks(ELLIPSE_PARAMS))
        {
            let (r, _) = EllipseSegment::from_slice(chunk).base_residual(base);
            let n2: f64 = d.iter().zip(free).filter(|(_, f)| !**f).map(|(g, _)| g * g).sum();
            if n2 == 0.0 {
                continue;
            }
            for ((v, g), f) in chunk.iter_mut().zip(d).zip(free) {
                if !*f {
                    *v -= r * g / n2;
                }
            }
        }
        bounds.project(theta);
    }
}

/// Removes from `step` its component along each segment's passage-constraint
/// gradient, leaving components that would push through a bound at zero.
fn tangent_step(theta: &ParamVector, base: Vec2, bounds: &Bounds, step: &mut [f64]) {
    let fixed = pinned(theta, bounds, step);
    for ((chunk, s), free) in theta
        .values
        .chunks(ELLIPSE_PARAMS)
        .zip(step.chunks_mut(ELLIPSE_PARAMS))
        .zip(fixed.chunks(ELLIPSE_PARAMS))
    {
        let (_, mut dr) = EllipseSegment::from_slice(chunk).base_residual(base);
        for ((v, g), f) in s.iter_mut().zip(dr.iter_mut()).zip(free) {
            if *f {
                *v = 0.0;
                *g = 0.0;
            }
        }
        let n2: f64 = dr.iter().map(|g| g * g).sum();
        if n2 == 0.0 {
            continue;
        }
        let c = s.iter().zip(&dr).map(|(a, b)| a * b).sum::<f64>() / n2;
        for (v, g) in s.iter_mut().zip(dr) {
            *v -= c * g;
        }
    }
}

fn thread_pool(jobs: Option<usize>) -> Result<Option<rayon::ThreadPool>> {
    jobs.map(|n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| HarvestError::config(format!("cannot start {n} worker threads: {e}")))
    })
    .transpose()
}

/// Projected stochastic gradient descent from `theta0`.
pub fn optimize(problem: &Problem, theta0: &ParamVector, opts: &OptimizerOptions) -> Result<OptimizeOutcome> {
    let config = &problem.config;
    let bounds = Bounds::for_config(config);
    if !bounds.is_feasible(theta0) {
        return Err(HarvestError::param("theta0", "lies outside the feasible bounds"));
    }
    if theta0.layout.agents() != config.agents {
        return Err(HarvestError::param(
            "theta0",
            format!("describes {} agents, mission has {}", theta0.layout.agents(), config.agents),
        ));
    }
    let base = config.base.position;
    let constrained = opts.base_passage && theta0.layout.family == Family::Ellipse;
    let mut theta = theta0.clone();
    if constrained {
        restore_base_passage(&mut theta, base, &bounds);
    }
    let pool = thread_pool(opts.jobs)?;
    let stochastic = config.is_stochastic();
    let fixed = if stochastic {
        None
    } else {
        Some(ArrivalRealization::for_config(config)?)
    };
    let groups: Vec<ParamGroup> = theta.layout.keys.iter().map(|k| k.name.group()).collect();
    let dim = theta.dim();

    let mut history = Vec::with_capacity(opts.iterations + 1);
    let mut best = (f64::INFINITY, theta.clone());
    let mut prev_dir: Option<Vec<f64>> = None;
    for l in 0..=opts.iterations {
        let samples: Vec<Sample> = match &fixed {
            Some(a) => vec![evaluate_sample(problem, &theta, a, opts.ipa)?],
            None => {
                let reps = opts.replications.max(1);
                let run = || {
                    (0..reps)
                        .into_par_iter()
                        .map(|r| {
                            let a = ArrivalRealization::sample(config, replication_seed(opts.seed, l, r))?;
                            evaluate_sample(problem, &theta, &a, opts.ipa)
                        })
                        .collect::<Result<Vec<_>>>()
                };
                match &pool {
                    Some(p) => p.install(run)?,
                    None => run()?,
                }
            }
        };
        let cost = mean_cost(&samples);
        let grads: Vec<&Vec<f64>> = samples.iter().filter_map(|s| s.gradient.as_ref()).collect();
        let (dir, reused) = if grads.is_empty() {
            (prev_dir.clone().unwrap_or_else(|| vec![0.0; dim]), true)
        } else {
            let mut g = vec![0.0; dim];
            for gr in &grads {
                for (a, b) in g.iter_mut().zip(gr.iter()) {
                    *a += b / grads.len() as f64;
                }
            }
            (g, false)
        };
        if let Some(k) = dir.iter().position(|v| !v.is_finite()) {
            return Err(HarvestError::param(
                theta.layout.label(k),
                format!("non-finite gradient at iteration {l}; theta = {:?}", theta.values),
            ));
        }
        let grad_norm = norm(&dir);
        let nu = step_size(l, 1.0, opts.steps.decay);
        history.push(HistoryRow {
            iteration: l,
            cost,
            grad_norm,
            step: nu * opts.steps.length,
            replications: grads.len(),
            reused_direction: reused,
        });
        debug!("iteration {l}: J={:.6} |g|={grad_norm:.3e}", cost.total);
        if cost.total < best.0 {
            best = (cost.total, theta.clone());
        }
        if l == opts.iterations || (grad_norm < opts.grad_tol && cost.penalty < opts.penalty_tol) {
            break;
        }

        let mut step: Vec<f64> = (0..dim)
            .map(|k| -nu * opts.steps.base(groups[k]) * dir[k])
            .collect();
        if constrained {
            tangent_step(&theta, base, &bounds, &mut step);
        }
        let mut scale: f64 = 1.0;
        for (k, s) in step.iter().enumerate() {
            let lim = nu * opts.trust.limit(groups[k]);
            if s.abs() > lim {
                scale = scale.min(lim / s.abs());
            }
        }
        for (v, s) in theta.values.iter_mut().zip(&step) {
            *v += scale * s;
        }
        bounds.project(&mut theta);
        if constrained {
            restore_base_passage(&mut theta, base, &bounds);
        }
        prev_dir = Some(dir);
    }
    info!(
        "optimization finished after {} evaluations; best J = {:.6}",
        history.len(),
        best.0
    );
    Ok(OptimizeOutcome {
        theta,
        best_theta: best.1,
        best_cost: best.0,
        history,
    })
}

/// Angle each agent heads towards from the base, fanned around the
/// direction of the target centroid.
fn headings(config: &MissionConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let base = config.base.position;
    let m = config.targets.len() as f64;
    let centroid = config
        .targets
        .iter()
        .fold(Vec2::ZERO, |acc, t| acc + t.position * (1.0 / m));
    let d = centroid - base;
    let center = if d.norm() > 1e-9 { d.y.atan2(d.x) } else { 0.0 };
    let n = config.agents;
    let spread = PI / (2.0 * n as f64);
    (0..n)
        .map(|j| center + (j as f64 - 0.5 * (n as f64 - 1.0)) * spread + rng.random_range(-0.05..0.05))
        .collect()
}

fn initial_radius(config: &MissionConfig) -> f64 {
    0.25 * config.width.min(config.height)
}

/// Near-circular ellipses through the base, one per segment, each heading
/// out from the base towards the targets.
pub fn initial_ellipses(config: &MissionConfig, segments: &[usize], seed: u64) -> Result<ParamVector> {
    if segments.len() != config.agents {
        return Err(HarvestError::config(format!(
            "{} segment counts given for {} agents",
            segments.len(),
            config.agents
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let heading = headings(config, &mut rng);
    let r = initial_radius(config);
    let base = config.base.position;
    let mut values = Vec::new();
    for (j, &e) in segments.iter().enumerate() {
        for _ in 0..e {
            let psi = heading[j] + rng.random_range(-0.05..0.05);
            let a = r * (1.0 + rng.random_range(0.0..0.1));
            let b = r * (1.0 - rng.random_range(0.0..0.1));
            let c = base + Vec2::new(psi.cos(), psi.sin()) * a;
            values.extend([c.x, c.y, a, b, psi.rem_euclid(PI)]);
        }
    }
    let mut theta = ParamVector::new(ParamLayout::ellipse(segments), values)?;
    Bounds::for_config(config).project(&mut theta);
    Ok(theta)
}

/// Near-circular Fourier curves through the base with small seeded higher
/// harmonics.
pub fn initial_fourier(config: &MissionConfig, gx: usize, gy: usize, seed: u64) -> Result<ParamVector> {
    if gx == 0 || gy == 0 {
        return Err(HarvestError::config("Fourier curves need at least one harmonic per axis"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let heading = headings(config, &mut rng);
    let r = initial_radius(config);
    let mut values = Vec::new();
    for &psi in &heading {
        let (ux, uy) = (psi.cos(), psi.sin());
        let px = (-ux).atan2(-uy);
        let mut amp_x = vec![r * (1.0 + rng.random_range(-0.05..0.05))];
        let mut amp_y = vec![r * (1.0 + rng.random_range(-0.05..0.05))];
        amp_x.extend((1..gx).map(|_| rng.random_range(-0.1..0.1)));
        amp_y.extend((1..gy).map(|_| rng.random_range(-0.1..0.1)));
        let mut phase_x = vec![px.rem_euclid(TAU)];
        let mut phase_y = vec![(px + FRAC_PI_2).rem_euclid(TAU)];
        phase_x.extend((1..gx).map(|_| rng.random_range(0.0..TAU)));
        phase_y.extend((1..gy).map(|_| rng.random_range(0.0..TAU)));
        values.push(1.0);
        values.extend(amp_x);
        values.extend(amp_y);
        values.extend(phase_x);
        values.extend(phase_y);
    }
    let mut theta = ParamVector::new(ParamLayout::fourier(config.agents, gx, gy), values)?;
    Bounds::for_config(config).project(&mut theta);
    Ok(theta)
}

/// Default number of harmonics per axis for Fourier curves.
pub const DEFAULT_HARMONICS: usize = 3;

pub fn initial_theta(config: &MissionConfig, family: Family, segments: usize, seed: u64) -> Result<ParamVector> {
    match family {
        Family::Ellipse => initial_ellipses(config, &vec![segments.max(1); config.agents], seed),
        Family::Fourier => initial_fourier(config, DEFAULT_HARMONICS, DEFAULT_HARMONICS, seed),
    }
}

/// Appends one ellipse to every agent: a copy of its last segment turned
/// towards a target that the current solution serves worst.
pub fn add_segment(problem: &Problem, theta: &ParamVector) -> Result<ParamVector> {
    if theta.layout.family != Family::Ellipse {
        return Err(HarvestError::config("segments only apply to the ellipse family"));
    }
    let config = &problem.config;
    let arrivals = ArrivalRealization::for_config(config)?;
    let (_, trace) = problem.simulate(theta, &arrivals)?;
    let idx = trace.index;
    let m = idx.targets;
    let mut backlog = vec![0.0; m];
    for k in 0..trace.node_count() {
        let y = trace.state(k);
        for (i, b) in backlog.iter_mut().enumerate() {
            *b += config.targets[i].weight * y[idx.x(i)];
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| backlog[b].total_cmp(&backlog[a]).then(a.cmp(&b)));

    let base = config.base.position;
    let segments: Vec<usize> = theta.layout.segments.iter().map(|s| s + 1).collect();
    let mut values = Vec::with_capacity(theta.dim() + ELLIPSE_PARAMS * config.agents);
    for j in 0..config.agents {
        let local = &theta.values[theta.layout.agent_range(j)];
        values.extend_from_slice(local);
        let last = EllipseSegment::from_slice(&local[local.len() - ELLIPSE_PARAMS..]);
        let target = config.targets[order[j % m]].position;
        let d = target - base;
        let aim = d.y.atan2(d.x);
        let mut turn = (aim - last.orientation).rem_euclid(TAU);
        if turn > PI {
            turn -= TAU;
        }
        let psi = last.orientation + 0.5 * turn;
        let a = 0.5 * (last.a + 0.5 * d.norm());
        let c = base + Vec2::new(psi.cos(), psi.sin()) * a;
        values.extend([c.x, c.y, a, last.b.min(a), psi.rem_euclid(PI)]);
    }
    let mut out = ParamVector::new(ParamLayout::ellipse(&segments), values)?;
    restore_base_passage(&mut out, base, &Bounds::for_config(config));
    Ok(out)
}

/// Best cost found with each segment count tried.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSearch {
    pub segments: usize,
    pub theta: ParamVector,
    pub cost: f64,
    pub tried: Vec<(usize, f64)>,
    pub outcomes: Vec<OptimizeOutcome>,
}

/// Default minimum improvement for another segment to be kept.
pub const IMPROVEMENT_EPS: f64 = 1e-3;

/// Optimizes ellipse trajectories with 1, 2, … segments per agent until one
/// more segment stops improving the cost by at least `improvement_eps`.
pub fn segment_search(
    problem: &Problem,
    max_segments: usize,
    improvement_eps: f64,
    opts: &OptimizerOptions,
) -> Result<SegmentSearch> {
    if max_segments == 0 {
        return Err(HarvestError::config("segment search needs at least one segment"));
    }
    let config = &problem.config;
    let mut found: Option<SegmentSearch> = None;
    let mut tried = Vec::new();
    let mut outcomes = Vec::new();
    for e in 1..=max_segments {
        let theta0 = match &found {
            None => initial_ellipses(config, &vec![1; config.agents], opts.seed)?,
            Some(s) => add_segment(problem, &s.theta)?,
        };
        let out = optimize(problem, &theta0, opts)?;
        let cost = out.best_cost;
        info!("{e} segment(s): J* = {cost:.6}");
        tried.push((e, cost));
        let theta = out.best_theta.clone();
        outcomes.push(out);
        if let Some(s) = &found {
            if cost >= s.cost - improvement_eps {
                break;
            }
        }
        found = Some(SegmentSearch {
            segments: e,
            theta,
            cost,
            tried: Vec::new(),
            outcomes: Vec::new(),
        });
    }
    let mut s = found.expect("at least one segment count evaluated");
    s.tried = tried;
    s.outcomes = outcomes;
    Ok(s)
}
