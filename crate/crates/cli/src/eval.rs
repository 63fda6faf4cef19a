use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Subcommand};

use lidarsim_core::eval::{
    ape, parse_normals_csv, plane_normal_error, rpe, summary_table, write_report, Delta, ErrorSeries,
    KdTree, MetricKind, MetricResult, NormalOptions, DEFAULT_MAX_DT,
};
use lidarsim_core::store::{decode_cloud, MSPC_MAGIC};
use lidarsim_core::{Alignment, ErrorStats, Trajectory};
use nalgebra::Vector3;

use crate::display;

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Absolute position error.
    Ape(TrajectoryArgs),
    /// Relative pose error over fixed windows.
    Rpe(RpeArgs),
    /// Plane-normal error against an error-free reference cloud.
    Normals(NormalArgs),
}

#[derive(Debug, Args)]
pub struct TrajectoryArgs {
    /// Estimated trajectories (TUM); a directory adds every `.txt`/`.tum`
    /// file in it, one summary row each.
    #[arg(long, required = true, num_args = 1..)]
    est: Vec<PathBuf>,
    /// Reference trajectory, usually a bundle's `ground_truth.txt`.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// none, se3 or sim3.
    #[arg(long, default_value = "none")]
    align: Alignment,
    /// Largest timestamp gap accepted when pairing poses, s.
    #[arg(long, default_value_t = DEFAULT_MAX_DT)]
    max_dt: f64,
    /// Sequence name used in reports. Defaults to the reference's directory.
    #[arg(long)]
    sequence: Option<String>,
    /// Report directory.
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RpeArgs {
    #[command(flatten)]
    common: TrajectoryArgs,
    /// Window length in matched poses.
    #[arg(long, default_value_t = 1, conflicts_with = "delta_seconds")]
    delta: usize,
    /// Window length in seconds instead of poses.
    #[arg(long)]
    delta_seconds: Option<f64>,
}

#[derive(Debug, Args)]
pub struct NormalArgs {
    /// Estimated normals, CSV `t,px,py,pz,nx,ny,nz`.
    #[arg(long, required = true, num_args = 1..)]
    est: Vec<PathBuf>,
    /// Error-free reference cloud: an MSPC frame file or text with `x y z`
    /// in the first three columns.
    #[arg(long)]
    ref_cloud: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Neighbour search radius, m.
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Point the fitted normals are turned toward, `x,y,z`.
    #[arg(long, default_value = "0,0,0", value_parser = parse_point)]
    viewpoint: [f64; 3],
    #[arg(long)]
    sequence: Option<String>,
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

fn parse_point(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| "expected three comma-separated numbers".to_string())
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| display(p))
}

fn sequence_name(given: &Option<String>, reference: &Path) -> String {
    given.clone().unwrap_or_else(|| {
        reference
            .canonicalize()
            .ok()
            .and_then(|p| p.parent().and_then(|d| d.file_name()).map(|s| s.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "sequence".into())
    })
}

/// Expand directories into their trajectory files, sorted by name.
fn expand(inputs: &[PathBuf], exts: &[&str], exclude: Option<&Path>) -> anyhow::Result<Vec<PathBuf>> {
    let skip = exclude.and_then(|p| p.canonicalize().ok());
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| display(p))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file())
                .filter(|f| f.extension().is_some_and(|e| exts.iter().any(|x| e == *x)))
                .filter(|f| skip.is_none() || f.canonicalize().ok() != skip)
                .collect();
            files.sort();
            if files.is_empty() {
                bail!("{} holds no {} files", display(p), exts.join("/"));
            }
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

pub fn run(cmd: EvalCommand) -> anyhow::Result<bool> {
    let (results, failures) = match cmd {
        EvalCommand::Ape(a) => trajectories(&a, |est, reference| {
            let r = ape(est, reference, a.align, a.max_dt)?;
            let overlay = r
                .pairs
                .iter()
                .map(|&(i, j)| {
                    let e = r.alignment.apply(&est.poses[i].pose.position);
                    let g = reference.poses[j].pose.position;
                    [est.poses[i].t, e.x, e.y, e.z, g.x, g.y, g.z]
                })
                .collect();
            Ok((MetricKind::Ape, r.stats, r.series, Some(r.alignment), Some(overlay)))
        })?,
        EvalCommand::Rpe(a) => {
            let delta = match a.delta_seconds {
                Some(s) => Delta::Seconds(s),
                None => Delta::Frames(a.delta),
            };
            let c = &a.common;
            if c.align != Alignment::None {
                log::info!("relative error is alignment-invariant; --align ignored");
            }
            trajectories(c, |est, reference| {
                let r = rpe(est, reference, delta, c.max_dt)?;
                Ok((MetricKind::Rpe, r.stats, r.series, None, None))
            })?
        }
        EvalCommand::Normals(a) => normals(&a)?,
    };
    Ok(failures == 0 && !results.is_empty())
}

type Scored = (MetricKind, ErrorStats, ErrorSeries, Option<lidarsim_core::eval::AlignmentTransform>, Option<Vec<[f64; 7]>>);

fn finish(results: Vec<MetricResult>, failures: usize, out: &Path) -> anyhow::Result<(Vec<MetricResult>, usize)> {
    if results.is_empty() {
        bail!("no input could be evaluated");
    }
    print!("{}", summary_table(&results));
    let files = write_report(&results, out)?;
    log::info!("report written to {}", display(&files.results_json));
    Ok((results, failures))
}

fn trajectories(
    a: &TrajectoryArgs,
    score: impl Fn(&Trajectory, &Trajectory) -> Result<Scored, lidarsim_core::EvalError>,
) -> anyhow::Result<(Vec<MetricResult>, usize)> {
    let reference = Trajectory::load(&a.reference)?;
    let sequence = sequence_name(&a.sequence, &a.reference);
    let files = expand(&a.est, &["txt", "tum"], Some(&a.reference))?;
    let mut results = Vec::new();
    let mut failures = 0;
    for f in &files {
        let outcome = Trajectory::load(f)
            .map_err(anyhow::Error::from)
            .and_then(|est| score(&est, &reference).map_err(anyhow::Error::from));
        match outcome {
            Ok((metric, stats, series, alignment, overlay)) => results.push(MetricResult {
                sequence: sequence.clone(),
                algorithm: stem(f),
                metric,
                stats,
                series,
                alignment,
                overlay,
            }),
            Err(e) => {
                eprintln!("error: {}: {e:#}", display(f));
                failures += 1;
            }
        }
    }
    finish(results, failures, &a.out)
}

fn load_cloud(path: &Path) -> anyhow::Result<Vec<Vector3<f64>>> {
    let bytes = std::fs::read(path).with_context(|| display(path))?;
    if bytes.starts_with(MSPC_MAGIC) {
        let frame = decode_cloud(&bytes, 0, &display(path))?;
        return Ok(frame.points.iter().map(|p| p.xyz).collect());
    }
    let text = String::from_utf8(bytes).with_context(|| format!("{}: not text or MSPC", display(path)))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let nums: Result<Vec<f64>, _> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .take(3)
            .map(str::parse::<f64>)
            .collect();
        let nums = match nums {
            Ok(v) if v.len() == 3 => v,
            _ if i == 0 => continue,
            _ => bail!("{}: row {}: expected x y z", display(path), i + 1),
        };
        out.push(Vector3::new(nums[0], nums[1], nums[2]));
    }
    Ok(out)
}

fn normals(a: &NormalArgs) -> anyhow::Result<(Vec<MetricResult>, usize)> {
    let cloud = load_cloud(&a.ref_cloud)?;
    if cloud.is_empty() {
        bail!("{}: reference cloud is empty", display(&a.ref_cloud));
    }
    let tree = KdTree::build(cloud);
    let opts = NormalOptions {
        k: a.k,
        radius: a.radius,
        viewpoint: a.viewpoint,
    };
    let sequence = sequence_name(&a.sequence, &a.ref_cloud);
    let files = expand(&a.est, &["csv"], None)?;
    let mut results = Vec::new();
    let mut failures = 0;
    for f in &files {
        let outcome = std::fs::read_to_string(f)
            .with_context(|| display(f))
            .and_then(|text| Ok(parse_normals_csv(&text, &display(f))?))
            .and_then(|frames| Ok(plane_normal_error(&frames, &tree, &opts)?));
        match outcome {
            Ok(r) => {
                let series = ErrorSeries {
                    t: r.frames.iter().map(|f| f.t).collect(),
                    error: r.frames.iter().map(|f| f.total).collect(),
                };
                if r.skipped > 0 {
                    eprintln!("{}: {} queries lacked {} reference neighbours", display(f), r.skipped, a.k);
                }
                results.push(MetricResult {
                    sequence: sequence.clone(),
                    algorithm: stem(f),
                    metric: MetricKind::Normals,
                    stats: ErrorStats::from_values(&series.error).ok_or_else(|| anyhow::anyhow!("{}: no frames", display(f)))?,
                    series,
                    alignment: None,
                    overlay: None,
                });
            }
            Err(e) => {
                eprintln!("error: {}: {e:#}", display(f));
                failures += 1;
            }
        }
    }
    finish(results, failures, &a.out)
}
