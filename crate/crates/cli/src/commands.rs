use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::Context;
use log::{info, warn};
use serde::Serialize;

use harvest_core::field::{convex_hull, hull_constants, r_field};
use harvest_core::ipa::{evaluate_with_gradient, IpaOptions};
use harvest_core::optimizer::{self, initial_theta, segment_search, OptimizeOutcome, OptimizerOptions, IMPROVEMENT_EPS};
use harvest_core::oracle::{conservation_audit, fd_objective_gradient, FD_STEPS};
use harvest_core::trajectory::ParamFile;
use harvest_core::{ArrivalRealization, CostBreakdown, ParamVector, Problem, Vec2};

use crate::output::{self, load_scenario, Metadata, OutDir, Scenario};
use crate::{Common, FieldArgs, GradCheckArgs, OptimizeArgs, ThetaArgs};

fn load_theta(args: &ThetaArgs, sc: &Scenario, seed: u64) -> anyhow::Result<ParamVector> {
    match &args.theta {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let file: ParamFile =
                serde_json::from_str(&text).with_context(|| format!("parameter file {}", path.display()))?;
            let theta = ParamVector::from_file(file)?;
            if theta.layout.agents() != sc.config.agents {
                anyhow::bail!(
                    "parameter file describes {} agents, scenario has {}",
                    theta.layout.agents(),
                    sc.config.agents
                );
            }
            Ok(theta)
        }
        None => Ok(initial_theta(&sc.config, args.family.into(), args.segments, seed)?),
    }
}

struct Setup {
    sc: Scenario,
    problem: Problem,
    theta: ParamVector,
    arrivals: ArrivalRealization,
    out: OutDir,
}

fn setup(common: &Common, theta: &ThetaArgs) -> anyhow::Result<Setup> {
    let sc = load_scenario(&common.scenario)?;
    let problem = Problem::new(sc.config.clone())?;
    let theta = load_theta(theta, &sc, common.seed)?;
    let arrivals = ArrivalRealization::for_config(&sc.config)?;
    let out = OutDir::create(&common.out)?;
    Ok(Setup {
        sc,
        problem,
        theta,
        arrivals,
        out,
    })
}

fn metadata<'a>(command: &'a str, path: &Path, s: &'a Setup, seed: u64) -> Metadata<'a> {
    Metadata::new(command, path, &s.sc, seed).with_theta(&s.theta)
}

fn write_run(s: &Setup, theta: &ParamVector) -> anyhow::Result<CostBreakdown> {
    let (traj, trace) = s.problem.simulate(theta, &s.arrivals)?;
    let cost = s.problem.total_cost(&traj, &trace);
    output::write_trace(&s.out, &trace, &traj)?;
    output::write_events(&s.out, &trace)?;
    s.out.json("cost.json", &cost)?;
    Ok(cost)
}

pub fn simulate(common: &Common, theta: &ThetaArgs) -> anyhow::Result<ExitCode> {
    let s = setup(common, theta)?;
    s.out.json("metadata.json", &metadata("simulate", &common.scenario, &s, common.seed))?;
    output::write_theta(&s.out, "theta.json", &s.theta)?;
    let cost = write_run(&s, &s.theta)?;
    println!("J = {:.6}", cost.total);
    Ok(ExitCode::SUCCESS)
}

fn best_of_restarts(a: &OptimizeArgs, s: &Setup) -> anyhow::Result<OptimizeOutcome> {
    let mut best: Option<OptimizeOutcome> = None;
    for r in 0..=a.restarts {
        let seed = a.common.seed + r as u64;
        let mut opts = OptimizerOptions::for_config(&s.sc.config);
        opts.iterations = a.iters;
        opts.seed = seed;
        opts.jobs = a.jobs;
        let outcome = match a.max_segments {
            Some(max) => {
                let search = segment_search(&s.problem, max, IMPROVEMENT_EPS, &opts)?;
                info!("segment search kept {} segments", search.segments);
                search
                    .outcomes
                    .into_iter()
                    .nth(search.segments - 1)
                    .context("segment search returned no outcome")?
            }
            None => {
                let theta0 = if r == 0 {
                    s.theta.clone()
                } else {
                    initial_theta(&s.sc.config, a.theta.family.into(), a.theta.segments, seed)?
                };
                optimizer::optimize(&s.problem, &theta0, &opts)?
            }
        };
        info!("restart {r}: best J = {:.6}", outcome.best_cost);
        if best.as_ref().map_or(true, |b| outcome.best_cost < b.best_cost) {
            best = Some(outcome);
        }
    }
    best.context("no optimization run")
}

pub fn optimize(a: &OptimizeArgs) -> anyhow::Result<ExitCode> {
    if a.max_segments.is_some() && a.theta.theta.is_some() {
        anyhow::bail!("--max-segments builds its own initial trajectories; drop --theta");
    }
    let s = setup(&a.common, &a.theta)?;
    let mut meta = metadata("optimize", &a.common.scenario, &s, a.common.seed);
    meta.iterations = Some(a.iters);
    s.out.json("metadata.json", &meta)?;
    let outcome = best_of_restarts(a, &s)?;
    output::write_history(&s.out, "history.csv", &outcome.history)?;
    output::write_theta(&s.out, "theta.json", &outcome.theta)?;
    output::write_theta(&s.out, "best_theta.json", &outcome.best_theta)?;
    let cost = write_run(&s, &outcome.best_theta)?;
    println!(
        "J: {:.6} -> {:.6} (best) over {} iterations",
        outcome.initial_cost(),
        cost.total,
        outcome.history.len().saturating_sub(1)
    );
    Ok(ExitCode::SUCCESS)
}

pub fn grad_check(a: &GradCheckArgs) -> anyhow::Result<ExitCode> {
    let s = setup(&a.common, &a.theta)?;
    s.out.json("metadata.json", &metadata("grad-check", &a.common.scenario, &s, a.common.seed))?;
    let (_, ipa) = evaluate_with_gradient(&s.problem, &s.theta, &s.arrivals, IpaOptions::default())?;
    let fd = fd_objective_gradient(&s.problem, &s.theta, &s.arrivals, &FD_STEPS)?;
    let mut w = s.out.csv("gradcheck.csv")?;
    w.write_record(["index", "param", "ipa", "fd", "fd_step", "abs_error", "rel_error", "significant", "pass"])?;
    let mut failures = Vec::new();
    for k in 0..s.theta.dim() {
        let (g, f) = (ipa.total[k], fd.gradient[k]);
        let abs = (g - f).abs();
        let rel = abs / f.abs().max(f64::MIN_POSITIVE);
        let significant = g.abs().max(f.abs()) > a.significance || !f.is_finite();
        let pass = !significant || rel <= a.tolerance;
        let label = s.theta.layout.label(k);
        if !pass {
            failures.push(label.clone());
        }
        w.write_record([
            k.to_string(),
            label,
            g.to_string(),
            f.to_string(),
            fd.steps[k].to_string(),
            abs.to_string(),
            rel.to_string(),
            significant.to_string(),
            pass.to_string(),
        ])?;
    }
    w.flush()?;
    if failures.is_empty() {
        println!("all {} components within {:.1}%", s.theta.dim(), 100.0 * a.tolerance);
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("components above tolerance: {}", failures.join(", "));
        Ok(ExitCode::FAILURE)
    }
}

#[derive(Serialize)]
struct FieldSummary {
    time: f64,
    queues: Vec<f64>,
    /// `None` when the targets span no area.
    constants: Option<Vec<f64>>,
    /// `Σ c_i X_i`, the field's integral over the hull.
    weighted_backlog: Option<f64>,
}

pub fn field(a: &FieldArgs) -> anyhow::Result<ExitCode> {
    let s = setup(&a.common, &a.theta)?;
    s.out.json("metadata.json", &metadata("field", &a.common.scenario, &s, a.common.seed))?;
    let config = &s.sc.config;
    let time = a.time.unwrap_or(config.horizon);
    if !(0.0..=config.horizon).contains(&time) {
        anyhow::bail!("--time {time} lies outside [0, {}]", config.horizon);
    }
    let (traj, trace) = s.problem.simulate(&s.theta, &s.arrivals)?;
    let k = trace.times.partition_point(|&t| t <= time).saturating_sub(1);
    let state = trace.system_state(&traj, k);
    let hull = convex_hull(&config.targets.iter().map(|t| t.position).collect::<Vec<_>>());
    let constants = if hull.is_degenerate() {
        warn!("targets span no area; hull constants are not defined");
        None
    } else {
        Some(hull_constants(config)?)
    };
    let mut w = s.out.csv("field.csv")?;
    w.write_record(["x", "y", "in_hull", "R"])?;
    let n = a.resolution;
    for iy in 0..n {
        for ix in 0..n {
            let p = Vec2::new(
                config.width * (ix as f64 + 0.5) / n as f64,
                config.height * (iy as f64 + 0.5) / n as f64,
            );
            w.write_record([
                p.x.to_string(),
                p.y.to_string(),
                hull.contains(p).to_string(),
                r_field(config, p, &state.target_queue).to_string(),
            ])?;
        }
    }
    w.flush()?;
    let mut w = s.out.csv("constants.csv")?;
    w.write_record(["target", "x", "y", "c"])?;
    for (i, t) in config.targets.iter().enumerate() {
        let c = constants.as_ref().map_or(String::new(), |c| c[i].to_string());
        w.write_record([i.to_string(), t.position.x.to_string(), t.position.y.to_string(), c])?;
    }
    w.flush()?;
    let weighted_backlog = constants
        .as_ref()
        .map(|c| c.iter().zip(&state.target_queue).map(|(c, x)| c * x).sum());
    s.out.json(
        "field.json",
        &FieldSummary {
            time: state.time,
            queues: state.target_queue.clone(),
            constants,
            weighted_backlog,
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct AuditReport {
    conservation_max_abs: f64,
    conservation_max_rel: f64,
    conservation_worst_time: f64,
    conservation_ok: bool,
    cost: f64,
    lower_bound: f64,
    lower_bound_ok: bool,
    max_speed_deviation: f64,
    speed_ok: bool,
    events: usize,
    warnings: Vec<String>,
}

pub fn audit(common: &Common, theta: &ThetaArgs) -> anyhow::Result<ExitCode> {
    let s = setup(common, theta)?;
    s.out.json("metadata.json", &metadata("audit", &common.scenario, &s, common.seed))?;
    let (traj, trace) = s.problem.simulate(&s.theta, &s.arrivals)?;
    let cons = conservation_audit(&trace, &s.arrivals);
    let cost = s.problem.total_cost(&traj, &trace);
    let lower_bound = -(1.0 - s.sc.config.tradeoff);
    let mut dev: f64 = 0.0;
    for k in 0..trace.node_count() {
        let mode = trace.mode_after(k);
        let y = trace.state(k);
        for j in 0..trace.index.agents {
            let v = traj.velocity(j, mode.segment[j], y[trace.index.rho(j)])?;
            dev = dev.max((v.norm() - 1.0).abs());
        }
    }
    let report = AuditReport {
        conservation_max_abs: cons.max_abs,
        conservation_max_rel: cons.max_rel,
        conservation_worst_time: cons.worst_time,
        conservation_ok: cons.max_rel <= 1e-6,
        cost: cost.total,
        lower_bound,
        lower_bound_ok: cost.total >= lower_bound,
        max_speed_deviation: dev,
        speed_ok: dev <= 1e-6,
        events: trace.events.len(),
        warnings: trace.warnings.clone(),
    };
    s.out.json("audit.json", &report)?;
    let ok = report.conservation_ok && report.lower_bound_ok && report.speed_ok;
    println!(
        "conservation {:.2e} rel, J = {:.6} >= {lower_bound}, speed deviation {:.2e}: {}",
        cons.max_rel,
        cost.total,
        dev,
        if ok { "ok" } else { "FAILED" }
    );
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
