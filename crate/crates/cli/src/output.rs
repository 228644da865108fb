use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use harvest_core::optimizer::HistoryRow;
use harvest_core::{MissionConfig, ParamVector, SimTrace, TrajectorySet};

pub struct Scenario {
    pub config: MissionConfig,
    /// SHA-256 of the normalized scenario document.
    pub hash: String,
}

pub fn load_scenario(path: &Path) -> anyhow::Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let config = MissionConfig::from_json(&text).with_context(|| format!("scenario {}", path.display()))?;
    // Hash the expanded form so formatting and broadcast style do not matter.
    let canonical = serde_json::to_vec(&config.to_scenario(None))?;
    let hash = hex::encode(Sha256::digest(&canonical));
    Ok(Scenario { config, hash })
}

#[derive(Serialize)]
pub struct Metadata<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub scenario: String,
    pub config_hash: &'a str,
    pub seed: u64,
    pub grid: [usize; 2],
    pub step: f64,
    pub horizon: f64,
    pub family: Option<String>,
    pub dimension: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
}

impl<'a> Metadata<'a> {
    pub fn new(command: &'a str, scenario_path: &Path, sc: &'a Scenario, seed: u64) -> Self {
        Metadata {
            tool: "harvest",
            version: env!("CARGO_PKG_VERSION"),
            command,
            scenario: scenario_path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            config_hash: &sc.hash,
            seed,
            grid: sc.config.grid,
            step: sc.config.step,
            horizon: sc.config.horizon,
            family: None,
            dimension: None,
            iterations: None,
        }
    }

    pub fn with_theta(mut self, theta: &ParamVector) -> Self {
        self.family = Some(theta.layout.family.to_string());
        self.dimension = Some(theta.dim());
        self
    }
}

pub struct OutDir(pub PathBuf);

impl OutDir {
    pub fn create(path: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(OutDir(path.to_path_buf()))
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.file(name), text).with_context(|| format!("writing {name}"))
    }

    pub fn csv(&self, name: &str) -> anyhow::Result<csv::Writer<fs::File>> {
        csv::Writer::from_path(self.file(name)).with_context(|| format!("writing {name}"))
    }
}

pub fn write_trace(out: &OutDir, trace: &SimTrace, traj: &TrajectorySet) -> anyhow::Result<()> {
    let (n, m) = (trace.index.agents, trace.index.targets);
    let mut w = out.csv("trace.csv")?;
    let mut header = vec!["t".to_string()];
    for j in 0..n {
        header.extend([format!("x{j}"), format!("y{j}"), format!("rho{j}"), format!("segment{j}")]);
    }
    for i in 0..m {
        header.extend([format!("X{i}"), format!("owner{i}")]);
    }
    for i in 0..m {
        for j in 0..n {
            header.push(format!("Z{i}_{j}"));
        }
    }
    for i in 0..m {
        header.push(format!("Y{i}"));
    }
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for k in 0..trace.node_count() {
        let s = trace.system_state(traj, k);
        let mode = trace.mode_after(k);
        row.clear();
        row.push(s.time.to_string());
        for j in 0..n {
            row.push(s.positions[j].x.to_string());
            row.push(s.positions[j].y.to_string());
            row.push(s.phases[j].to_string());
            row.push(mode.segment[j].to_string());
        }
        for i in 0..m {
            row.push(s.target_queue[i].to_string());
            row.push(s.owner[i].map_or("-1".to_string(), |o| o.to_string()));
        }
        row.extend(s.onboard.iter().map(|v| v.to_string()));
        row.extend(s.delivered.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_events(out: &OutDir, trace: &SimTrace) -> anyhow::Result<()> {
    let mut w = out.csv("events.csv")?;
    w.write_record(["t", "node", "event", "target", "agent", "induced", "simultaneous", "p_target", "p_base"])?;
    let opt = |v: Option<usize>| v.map_or(String::new(), |x| x.to_string());
    for e in &trace.events {
        w.write_record([
            e.time.to_string(),
            e.node.to_string(),
            e.kind.code().to_string(),
            opt(e.kind.target()),
            opt(e.kind.agent()),
            e.induced.to_string(),
            e.simultaneous.to_string(),
            e.p_target.to_string(),
            e.p_base.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_history(out: &OutDir, name: &str, history: &[HistoryRow]) -> anyhow::Result<()> {
    let mut w = out.csv(name)?;
    w.write_record([
        "iteration", "J", "queue", "delivered", "idling", "field", "terminal", "penalty",
        "grad_norm", "step", "replications", "reused_direction",
    ])?;
    for r in history {
        let c = &r.cost;
        w.write_record([
            r.iteration.to_string(),
            c.total.to_string(),
            c.queue.to_string(),
            c.delivered.to_string(),
            c.idling.to_string(),
            c.field.to_string(),
            c.terminal.to_string(),
            c.penalty.to_string(),
            r.grad_norm.to_string(),
            r.step.to_string(),
            r.replications.to_string(),
            r.reused_direction.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_theta(out: &OutDir, name: &str, theta: &ParamVector) -> anyhow::Result<()> {
    out.json(name, &theta.to_file())
}
