//! `lidarsim`: record simulated sequences, evaluate trajectories, check
//! scenes and serve interactive sessions.
//!
//! Exit status is 0 on success, 1 for usage errors and 2 when the command
//! itself fails.

mod eval;
mod scene;
mod sim;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "lidarsim", version, about = "Deterministic LIDAR-inertial robot simulator")]
struct Cli {
    /// More log output; repeat for debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a batch simulation and record a sequence bundle.
    Sim(sim::SimArgs),
    /// Serve an interactive session over WebSocket until interrupted.
    Serve(sim::ServeArgs),
    /// Score estimated trajectories or normals against ground truth.
    Eval {
        #[command(subcommand)]
        metric: eval::EvalCommand,
    },
    /// Scene file utilities.
    Scene {
        #[command(subcommand)]
        action: SceneCommand,
    },
    /// Re-run a bundle's recorded command log into a new bundle.
    Replay(sim::ReplayArgs),
}

#[derive(Debug, Subcommand)]
enum SceneCommand {
    /// Parse a scene and list its objects and every invariant violation.
    Validate(SceneArgs),
}

#[derive(Debug, Args)]
struct SceneArgs {
    /// Scene file or `builtin:<name>`.
    #[arg(long)]
    scene: String,
}

/// Size the rayon pool from `LIDARSIM_THREADS` when set.
fn configure_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("LIDARSIM_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| anyhow::anyhow!("LIDARSIM_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    configure_threads()?;
    match cli.command {
        Command::Sim(a) => sim::sim(a).map(|_| true),
        Command::Serve(a) => sim::serve(a).map(|_| true),
        Command::Eval { metric } => eval::run(metric),
        Command::Scene { action: SceneCommand::Validate(a) } => scene::validate(&a.scene),
        Command::Replay(a) => sim::replay(a).map(|_| true),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}

/// The error chain, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

pub(crate) fn display(p: &std::path::Path) -> String {
    p.display().to_string()
}

pub(crate) fn absolute(p: &str) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| PathBuf::from(p))
}
