use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};

use lidarsim_core::control::PathFile;
use lidarsim_core::engine::{run, ModeKind};
use lidarsim_core::store::{BundleWriter, ReadOptions, COMMANDS_FILE};
use lidarsim_core::{Bundle, Manifest, RunConfig, RunSummary, Simulation};
use lidarsim_service::ServiceConfig;

use crate::{absolute, display};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Teleop,
    Track,
    Scripted,
}

impl From<Mode> for ModeKind {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Teleop => ModeKind::Teleop,
            Mode::Track => ModeKind::Track,
            Mode::Scripted => ModeKind::Scripted,
        }
    }
}

/// Flags shared by `sim` and `serve` that adjust the run config.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Run config (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed for all noise. Default 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Scene file or `builtin:<name>`, overriding the config.
    #[arg(long)]
    scene: Option<String>,
    /// Built-in LIDAR model, overriding the config.
    #[arg(long)]
    lidar: Option<String>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Waypoints file (`[[x, y], ...]`) for track mode.
    #[arg(long)]
    path: Option<PathBuf>,
    /// Command log for scripted mode.
    #[arg(long)]
    commands: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Bundle directory to create; must not exist or be empty.
    #[arg(long)]
    out: PathBuf,
    /// Simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:8765")]
    listen: String,
    /// Directory for bundles recorded on request.
    #[arg(long)]
    record_dir: Option<PathBuf>,
    /// Simulated seconds per wall-clock second.
    #[arg(long, default_value_t = 1.0)]
    pace: f64,
    /// Starting voxel edge for streamed clouds, m.
    #[arg(long, default_value_t = 0.05)]
    voxel: f64,
    /// Start paused until a client sends `cmd_run start`.
    #[arg(long)]
    paused: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Bundle whose command log is replayed.
    #[arg(long)]
    bundle: PathBuf,
    /// New bundle directory.
    #[arg(long)]
    out: PathBuf,
    /// Scene override when the recorded scene path no longer resolves.
    #[arg(long)]
    scene: Option<String>,
}

/// Config with every file reference made absolute and waypoints inlined,
/// so the copy stored in the manifest is self-contained.
fn build_config(a: &ConfigArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(s) = &a.scene {
        cfg.scene = s.clone();
        if !s.starts_with("builtin:") {
            cfg.scene = display(&absolute(s));
        }
    } else {
        cfg.scene = cfg.scene_spec();
    }
    if let Some(l) = &a.lidar {
        cfg.lidar = lidarsim_core::engine::LidarConfig::builtin(l);
    }
    if let Some(m) = a.mode {
        cfg.mode = m.into();
    }
    if let Some(p) = &a.path {
        cfg.path = Some(PathFile::load(p)?.0);
        cfg.path_file = None;
    } else if cfg.mode == ModeKind::Track {
        cfg.path = cfg.waypoints()?;
        cfg.path_file = None;
    }
    if let Some(c) = &a.commands {
        cfg.command_file = Some(display(&absolute(&display(c))));
    } else if let Some(c) = &cfg.command_file {
        cfg.command_file = Some(display(&cfg.resolve_path(c)));
    }
    if !cfg.scene.starts_with("builtin:") {
        cfg.scene = display(&absolute(&cfg.scene));
    }
    cfg.base_dir = None;
    Ok(cfg)
}

/// Run `cfg` to completion, writing a bundle into `out`.
pub fn record(cfg: RunConfig, out: &Path) -> anyhow::Result<(RunSummary, Manifest)> {
    cfg.validate()?;
    let mut sim = Simulation::new(cfg.clone())?;
    let mut writer = BundleWriter::create(out)?;
    let summary = run(&mut sim, &mut writer)
        .with_context(|| format!("simulation aborted; {} is incomplete", display(out)))?;
    let manifest = writer.finish(cfg.seed, serde_json::to_value(&cfg)?, serde_json::to_value(&summary)?)?;
    Ok((summary, manifest))
}

fn print_summary(out: &Path, summary: &RunSummary, manifest: &Manifest) {
    println!("bundle      {}", display(out));
    println!("sim time    {:.3} s", summary.sim_time);
    println!("ticks       {}", summary.ticks);
    println!("gt samples  {}", summary.ground_truth_samples);
    println!("imu samples {}", summary.imu_samples);
    println!("frames      {}", summary.frames);
    println!("points      {}", summary.lidar_points);
    println!("gt length   {:.6} m", summary.distance);
    for (k, v) in &manifest.hashes {
        println!("sha256 {k:<12} {v}");
    }
}

pub fn sim(a: SimArgs) -> anyhow::Result<()> {
    let mut cfg = build_config(&a.config)?;
    if let Some(d) = a.duration {
        cfg.duration = d;
    }
    let (summary, manifest) = record(cfg, &a.out)?;
    print_summary(&a.out, &summary, &manifest);
    Ok(())
}

pub fn serve(a: ServeArgs) -> anyhow::Result<()> {
    let cfg = build_config(&a.config)?;
    let sim = Simulation::new(cfg)?;
    let service = lidarsim_service::serve(
        sim,
        ServiceConfig {
            listen: a.listen,
            record_dir: a.record_dir,
            pace: a.pace,
            voxel: a.voxel,
            autostart: !a.paused,
            ..ServiceConfig::default()
        },
    )?;
    println!("listening on ws://{}", service.local_addr());
    service.wait();
    Ok(())
}

pub fn replay(a: ReplayArgs) -> anyhow::Result<()> {
    let bundle = Bundle::open(&a.bundle, ReadOptions::default())?;
    let log = a.bundle.join(COMMANDS_FILE);
    if !log.exists() {
        bail!("{} has no command log to replay", display(&a.bundle));
    }
    bundle.commands()?;
    let mut cfg: RunConfig = serde_json::from_value(bundle.manifest.config.clone())
        .with_context(|| format!("{}: manifest config", display(&a.bundle)))?;
    if let Some(s) = a.scene {
        cfg.scene = s;
    }
    if let Some(t) = bundle.manifest.summary.get("sim_time").and_then(|v| v.as_f64()) {
        cfg.duration = (t / cfg.base_dt).round() * cfg.base_dt;
    }
    cfg.mode = ModeKind::Scripted;
    cfg.path = None;
    cfg.path_file = None;
    cfg.command_file = Some(display(&absolute(&display(&log))));
    let (summary, manifest) = record(cfg, &a.out)?;
    print_summary(&a.out, &summary, &manifest);
    for (k, v) in &manifest.hashes {
        if bundle.manifest.hashes.get(k) != Some(v) {
            log::warn!("stream `{k}` differs from the original recording");
        }
    }
    Ok(())
}
