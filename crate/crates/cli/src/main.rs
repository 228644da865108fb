use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod output;

#[derive(Parser, Debug)]
#[command(name = "harvest", version, about = "Simulate and optimize multi-agent data harvesting missions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one trajectory and write the trace and event log.
    Simulate(SimulateArgs),
    /// Optimize trajectory parameters by projected gradient descent.
    Optimize(OptimizeArgs),
    /// Compare the IPA gradient with central finite differences.
    GradCheck(GradCheckArgs),
    /// Dump the potential field and hull constants.
    Field(FieldArgs),
    /// Check conservation, the cost lower bound and agent speed on one run.
    Audit(SimulateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FamilyArg {
    Ellipse,
    Fourier,
}

impl From<FamilyArg> for harvest_core::Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Ellipse => harvest_core::Family::Ellipse,
            FamilyArg::Fourier => harvest_core::Family::Fourier,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "harvest-out")]
    out: PathBuf,
    /// Seed for the initial trajectory and arrival replications.
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args, Debug, Clone)]
struct ThetaArgs {
    /// Parameter file; when absent the seeded default initialization is used.
    #[arg(long)]
    theta: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "fourier")]
    family: FamilyArg,
    /// Ellipse segments per agent.
    #[arg(long, default_value_t = 1)]
    segments: usize,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    theta: ThetaArgs,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    theta: ThetaArgs,
    #[arg(long, default_value_t = 200)]
    iters: usize,
    /// Parallel workers for arrival replications.
    #[arg(long, env = "HARVEST_OPT_JOBS")]
    jobs: Option<usize>,
    /// Extra runs from consecutive seeds; the best result is kept.
    #[arg(long, default_value_t = 0)]
    restarts: usize,
    /// Grow ellipse segments per agent up to this count while the cost improves.
    #[arg(long)]
    max_segments: Option<usize>,
}

#[derive(Args, Debug)]
struct GradCheckArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    theta: ThetaArgs,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 0.05)]
    tolerance: f64,
    /// Components smaller than this in magnitude are not judged.
    #[arg(long, default_value_t = 1e-6)]
    significance: f64,
}

#[derive(Args, Debug)]
struct FieldArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    theta: ThetaArgs,
    /// Time at which queues are taken from the simulated trace; defaults to the horizon.
    #[arg(long)]
    time: Option<f64>,
    /// Grid cells per side of the dump.
    #[arg(long, default_value_t = 100)]
    resolution: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a.common, &a.theta),
        Command::Audit(a) => commands::audit(&a.common, &a.theta),
        Command::Optimize(a) => {
            if a.jobs == Some(0) {
                bail!("--jobs must be at least 1");
            }
            commands::optimize(&a)
        }
        Command::GradCheck(a) => commands::grad_check(&a),
        Command::Field(a) => {
            if a.resolution < 2 {
                bail!("--resolution must be at least 2");
            }
            commands::field(&a)
        }
    }
    .context("run failed")
}
