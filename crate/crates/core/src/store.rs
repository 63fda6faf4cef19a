//! Sequence bundles on disk.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/ground_truth.txt    TUM: t x y z qx qy qz qw
//! <dir>/imu.csv             t,wx,wy,wz,ax,ay,az
//! <dir>/commands.log        t v w (only when commands were applied)
//! <dir>/clouds/000000.bin   MSPC frames
//! ```
//!
//! MSPC layout, little-endian: magic `MSPC`, version `u32`, point count
//! `u32`, frame start `t0` as `f64`, then per point `x y z intensity dt` as
//! `f32`. Every file is written to a temporary name and renamed into place;
//! the manifest is written last.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::engine::{format_command_log, parse_command_log, CommandRecord, EngineError, GroundTruthSample, SimSink};
use crate::pose::StampedPose;
use crate::sensors::{ImuSample, LidarPoint, PointCloudFrame};
use crate::trajectory::{format_tum_line, parse_tum, TrajectoryError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.txt";
pub const IMU_FILE: &str = "imu.csv";
pub const COMMANDS_FILE: &str = "commands.log";
pub const CLOUDS_DIR: &str = "clouds";
pub const IMU_HEADER: &str = "t,wx,wy,wz,ax,ay,az";

pub const MSPC_MAGIC: &[u8; 4] = b"MSPC";
pub const MSPC_VERSION: u32 = 1;
const MSPC_HEADER_LEN: usize = 20;
const MSPC_POINT_LEN: usize = 20;

pub const BUNDLE_FORMAT: &str = "lidarsim-sequence";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("refusing to write into non-empty directory {0}")]
    NotEmpty(PathBuf),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("content hash mismatch for stream `{0}`")]
    HashMismatch(String),
    #[error("stream `{stream}`: manifest says {expected}, found {found}")]
    CountMismatch { stream: String, expected: u64, found: u64 },
    #[error("{file}: row {row}: {message}")]
    Malformed { file: String, row: usize, message: String },
    #[error("cloud frame {frame}: {message}")]
    BadCloud { frame: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

impl From<TrajectoryError> for StoreError {
    fn from(e: TrajectoryError) -> Self {
        match e {
            TrajectoryError::Malformed { origin, row, message } => StoreError::Malformed { file: origin, row, message },
            TrajectoryError::NotIncreasing { origin, row } => StoreError::Malformed {
                file: origin,
                row,
                message: "timestamps must strictly increase".into(),
            },
            TrajectoryError::Io(m) => StoreError::Manifest(m),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamCounts {
    pub ground_truth: u64,
    pub imu: u64,
    pub frames: u64,
    pub commands: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub format_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub counts: StreamCounts,
    /// Hex SHA-256 per stream. `clouds` covers every frame file in order.
    pub hashes: BTreeMap<String, String>,
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default)]
    pub summary: serde_json::Value,
}

/// Everything a bundle holds, as read back.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SequenceStreams {
    pub ground_truth: Vec<StampedPose>,
    pub imu: Vec<ImuSample>,
    pub frames: Vec<PointCloudFrame>,
    pub commands: Vec<CommandRecord>,
}

pub fn cloud_file_name(index: u64) -> String {
    format!("{index:06}.bin")
}

pub fn encode_cloud(frame: &PointCloudFrame) -> Vec<u8> {
    let mut out = Vec::with_capacity(MSPC_HEADER_LEN + frame.points.len() * MSPC_POINT_LEN);
    out.extend_from_slice(MSPC_MAGIC);
    out.extend_from_slice(&MSPC_VERSION.to_le_bytes());
    out.extend_from_slice(&(frame.points.len() as u32).to_le_bytes());
    out.extend_from_slice(&frame.t0.to_le_bytes());
    for p in &frame.points {
        for v in [p.xyz.x, p.xyz.y, p.xyz.z, p.intensity, p.dt] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Decode an MSPC buffer. `name` labels errors.
pub fn decode_cloud(bytes: &[u8], index: u64, name: &str) -> Result<PointCloudFrame, StoreError> {
    let bad = |message: String| StoreError::BadCloud { frame: name.to_string(), message };
    if bytes.len() < MSPC_HEADER_LEN {
        return Err(bad(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[0..4] != MSPC_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let version = u32_at(4);
    if version != MSPC_VERSION {
        log::warn!("{name}: MSPC version {version}, reading as version {MSPC_VERSION}");
    }
    let count = u32_at(8) as usize;
    let t0 = f64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let need = MSPC_HEADER_LEN + count * MSPC_POINT_LEN;
    if bytes.len() < need {
        return Err(bad(format!("truncated: header declares {count} points, need {need} bytes, have {}", bytes.len())));
    }
    if bytes.len() > need {
        return Err(bad(format!("{} trailing bytes", bytes.len() - need)));
    }
    let f = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as f64;
    let points = (0..count)
        .map(|i| {
            let o = MSPC_HEADER_LEN + i * MSPC_POINT_LEN;
            LidarPoint {
                xyz: Vector3::new(f(o), f(o + 4), f(o + 8)),
                intensity: f(o + 12),
                dt: f(o + 16),
            }
        })
        .collect();
    Ok(PointCloudFrame { index, t0, points })
}

/// The in-memory frame as it will read back from disk.
pub fn quantize_frame(frame: &PointCloudFrame) -> PointCloudFrame {
    decode_cloud(&encode_cloud(frame), frame.index, "in-memory").expect("own encoding decodes")
}

pub fn format_imu_line(out: &mut String, s: &ImuSample) {
    let (w, a) = (&s.angular_velocity, &s.specific_force);
    writeln!(out, "{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}", s.t, w.x, w.y, w.z, a.x, a.y, a.z)
        .expect("writing to a String");
}

pub fn parse_imu_csv(text: &str, file: &str) -> Result<Vec<ImuSample>, StoreError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == IMU_HEADER => {}
        _ => {
            return Err(StoreError::Malformed {
                file: file.to_string(),
                row: 1,
                message: format!("expected header `{IMU_HEADER}`"),
            })
        }
    }
    let mut out: Vec<ImuSample> = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: &str| StoreError::Malformed {
            file: file.to_string(),
            row: i + 1,
            message: message.to_string(),
        };
        let nums: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| err("non-numeric field"))?;
        if nums.len() != 7 {
            return Err(err("expected 7 fields"));
        }
        if out.last().is_some_and(|p| nums[0] <= p.t) {
            return Err(err("timestamps must strictly increase"));
        }
        out.push(ImuSample {
            t: nums[0],
            angular_velocity: Vector3::new(nums[1], nums[2], nums[3]),
            specific_force: Vector3::new(nums[4], nums[5], nums[6]),
        });
    }
    Ok(out)
}

fn hex_digest(h: Sha256) -> String {
    hex::encode(h.finalize())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Streaming bundle writer. Clouds go to disk as frames arrive; the text
/// streams are buffered and written by [`BundleWriter::finish`].
pub struct BundleWriter {
    dir: PathBuf,
    ground_truth: String,
    imu: String,
    commands: Vec<CommandRecord>,
    counts: StreamCounts,
    clouds_hash: Sha256,
    last_gt: Option<f64>,
    last_imu: Option<f64>,
}

impl BundleWriter {
    /// Create the bundle directory. It must be absent or empty.
    pub fn create(dir: impl AsRef<Path>) -> Result<BundleWriter, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        if dir.exists() {
            let mut entries = fs::read_dir(&dir).map_err(io_err(&dir))?;
            if entries.next().is_some() {
                return Err(StoreError::NotEmpty(dir));
            }
        }
        let clouds = dir.join(CLOUDS_DIR);
        fs::create_dir_all(&clouds).map_err(io_err(&clouds))?;
        Ok(BundleWriter {
            dir,
            ground_truth: String::new(),
            imu: format!("{IMU_HEADER}\n"),
            commands: Vec::new(),
            counts: StreamCounts::default(),
            clouds_hash: Sha256::new(),
            last_gt: None,
            last_imu: None,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn push_ground_truth(&mut self, p: &StampedPose) -> Result<(), StoreError> {
        if self.last_gt.is_some_and(|t| p.t <= t) {
            return Err(StoreError::Malformed {
                file: GROUND_TRUTH_FILE.into(),
                row: self.counts.ground_truth as usize + 1,
                message: "timestamps must strictly increase".into(),
            });
        }
        self.last_gt = Some(p.t);
        format_tum_line(&mut self.ground_truth, p);
        self.counts.ground_truth += 1;
        Ok(())
    }

    pub fn push_imu(&mut self, s: &ImuSample) -> Result<(), StoreError> {
        if self.last_imu.is_some_and(|t| s.t <= t) {
            return Err(StoreError::Malformed {
                file: IMU_FILE.into(),
                row: self.counts.imu as usize + 2,
                message: "timestamps must strictly increase".into(),
            });
        }
        self.last_imu = Some(s.t);
        format_imu_line(&mut self.imu, s);
        self.counts.imu += 1;
        Ok(())
    }

    /// Frames must arrive with consecutive indices starting at 0.
    pub fn push_frame(&mut self, f: &PointCloudFrame) -> Result<(), StoreError> {
        if f.index != self.counts.frames {
            return Err(StoreError::BadCloud {
                frame: cloud_file_name(f.index),
                message: format!("expected frame index {}", self.counts.frames),
            });
        }
        let bytes = encode_cloud(f);
        self.clouds_hash.update(&bytes);
        write_atomic(&self.dir.join(CLOUDS_DIR).join(cloud_file_name(f.index)), &bytes)?;
        self.counts.frames += 1;
        Ok(())
    }

    pub fn push_command(&mut self, c: &CommandRecord) {
        self.commands.push(*c);
        self.counts.commands += 1;
    }

    /// Write the text streams and the manifest.
    pub fn finish(
        self,
        seed: u64,
        config: serde_json::Value,
        summary: serde_json::Value,
    ) -> Result<Manifest, StoreError> {
        let mut hashes = BTreeMap::new();
        write_atomic(&self.dir.join(GROUND_TRUTH_FILE), self.ground_truth.as_bytes())?;
        hashes.insert("ground_truth".to_string(), sha256_hex(self.ground_truth.as_bytes()));
        write_atomic(&self.dir.join(IMU_FILE), self.imu.as_bytes())?;
        hashes.insert("imu".to_string(), sha256_hex(self.imu.as_bytes()));
        if !self.commands.is_empty() {
            let text = format_command_log(&self.commands);
            write_atomic(&self.dir.join(COMMANDS_FILE), text.as_bytes())?;
            hashes.insert("commands".to_string(), sha256_hex(text.as_bytes()));
        }
        hashes.insert("clouds".to_string(), hex_digest(self.clouds_hash));
        let manifest = Manifest {
            format: BUNDLE_FORMAT.to_string(),
            format_version: BUNDLE_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            counts: self.counts,
            hashes,
            config,
            summary,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        write_atomic(&self.dir.join(MANIFEST_FILE), text.as_bytes())?;
        Ok(manifest)
    }
}

impl SimSink for BundleWriter {
    fn ground_truth(&mut self, s: &GroundTruthSample) -> Result<(), EngineError> {
        self.push_ground_truth(&StampedPose::new(s.t, s.pose))
            .map_err(|e| EngineError::Sink(e.to_string()))
    }
    fn imu(&mut self, s: &ImuSample) -> Result<(), EngineError> {
        self.push_imu(s).map_err(|e| EngineError::Sink(e.to_string()))
    }
    fn frame(&mut self, f: &PointCloudFrame) -> Result<(), EngineError> {
        self.push_frame(f).map_err(|e| EngineError::Sink(e.to_string()))
    }
    fn command(&mut self, c: &CommandRecord) -> Result<(), EngineError> {
        self.push_command(c);
        Ok(())
    }
}

/// Write a complete set of streams as a bundle.
pub fn write_bundle(
    streams: &SequenceStreams,
    dir: impl AsRef<Path>,
    seed: u64,
    config: serde_json::Value,
) -> Result<Manifest, StoreError> {
    let mut w = BundleWriter::create(dir)?;
    for p in &streams.ground_truth {
        w.push_ground_truth(p)?;
    }
    for s in &streams.imu {
        w.push_imu(s)?;
    }
    for f in &streams.frames {
        w.push_frame(f)?;
    }
    for c in &streams.commands {
        w.push_command(c);
    }
    w.finish(seed, config, serde_json::Value::Null)
}

#[derive(Debug, Clone, Copy)]
pub struct ReadOptions {
    pub verify_hashes: bool,
}

impl Default for ReadOptions {
    fn default() -> Self {
        Self { verify_hashes: true }
    }
}

/// A bundle opened for reading. Streams load independently.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub warnings: Vec<String>,
    options: ReadOptions,
}

fn check_count(stream: &str, expected: u64, found: usize) -> Result<(), StoreError> {
    if expected != found as u64 {
        return Err(StoreError::CountMismatch {
            stream: stream.to_string(),
            expected,
            found: found as u64,
        });
    }
    Ok(())
}

impl Bundle {
    pub fn open(dir: impl AsRef<Path>, options: ReadOptions) -> Result<Bundle, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| StoreError::Manifest(format!("{}: {e}", path.display())))?;
        let mut warnings = Vec::new();
        if manifest.format != BUNDLE_FORMAT {
            return Err(StoreError::Manifest(format!("unknown bundle format `{}`", manifest.format)));
        }
        if manifest.format_version != BUNDLE_VERSION {
            let msg = format!(
                "bundle format version {} differs from {}; reading best-effort",
                manifest.format_version, BUNDLE_VERSION
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        Ok(Bundle { dir, manifest, warnings, options })
    }

    fn read_text(&self, file: &str, stream: &str) -> Result<Option<String>, StoreError> {
        let path = self.dir.join(file);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        self.verify(stream, text.as_bytes())?;
        Ok(Some(text))
    }

    fn verify(&self, stream: &str, bytes: &[u8]) -> Result<(), StoreError> {
        if !self.options.verify_hashes {
            return Ok(());
        }
        match self.manifest.hashes.get(stream) {
            Some(h) if *h == sha256_hex(bytes) => Ok(()),
            Some(_) => Err(StoreError::HashMismatch(stream.to_string())),
            None => Err(StoreError::Manifest(format!("no hash recorded for `{stream}`"))),
        }
    }

    pub fn ground_truth(&self) -> Result<Vec<StampedPose>, StoreError> {
        let text = self
            .read_text(GROUND_TRUTH_FILE, "ground_truth")?
            .ok_or_else(|| StoreError::Manifest(format!("missing {GROUND_TRUTH_FILE}")))?;
        let traj = parse_tum(&text, GROUND_TRUTH_FILE)?;
        check_count("ground_truth", self.manifest.counts.ground_truth, traj.len())?;
        Ok(traj.poses)
    }

    pub fn imu(&self) -> Result<Vec<ImuSample>, StoreError> {
        let text = self
            .read_text(IMU_FILE, "imu")?
            .ok_or_else(|| StoreError::Manifest(format!("missing {IMU_FILE}")))?;
        let imu = parse_imu_csv(&text, IMU_FILE)?;
        check_count("imu", self.manifest.counts.imu, imu.len())?;
        Ok(imu)
    }

    pub fn commands(&self) -> Result<Vec<CommandRecord>, StoreError> {
        let Some(text) = self.read_text(COMMANDS_FILE, "commands")? else {
            check_count("commands", self.manifest.counts.commands, 0)?;
            return Ok(Vec::new());
        };
        let cmds = parse_command_log(&text).map_err(|e| match e {
            EngineError::CommandLog { line, message } => StoreError::Malformed {
                file: COMMANDS_FILE.into(),
                row: line,
                message,
            },
            other => StoreError::Manifest(other.to_string()),
        })?;
        check_count("commands", self.manifest.counts.commands, cmds.len())?;
        Ok(cmds)
    }

    pub fn frame_count(&self) -> u64 {
        self.manifest.counts.frames
    }

    pub fn frame_bytes(&self, index: u64) -> Result<Vec<u8>, StoreError> {
        let path = self.dir.join(CLOUDS_DIR).join(cloud_file_name(index));
        fs::read(&path).map_err(|e| StoreError::BadCloud {
            frame: cloud_file_name(index),
            message: e.to_string(),
        })
    }

    /// One frame, without hash verification.
    pub fn frame(&self, index: u64) -> Result<PointCloudFrame, StoreError> {
        decode_cloud(&self.frame_bytes(index)?, index, &cloud_file_name(index))
    }

    pub fn frames(&self) -> Result<Vec<PointCloudFrame>, StoreError> {
        let dir = self.dir.join(CLOUDS_DIR);
        let on_disk = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().ends_with(".bin"))
            .count();
        check_count("frames", self.manifest.counts.frames, on_disk)?;
        let mut hash = Sha256::new();
        let mut frames = Vec::with_capacity(on_disk);
        for i in 0..self.manifest.counts.frames {
            let bytes = self.frame_bytes(i)?;
            hash.update(&bytes);
            frames.push(decode_cloud(&bytes, i, &cloud_file_name(i))?);
        }
        if self.options.verify_hashes && self.manifest.hashes.get("clouds") != Some(&hex_digest(hash)) {
            return Err(StoreError::HashMismatch("clouds".into()));
        }
        Ok(frames)
    }

    pub fn streams(&self) -> Result<SequenceStreams, StoreError> {
        Ok(SequenceStreams {
            ground_truth: self.ground_truth()?,
            imu: self.imu()?,
            frames: self.frames()?,
            commands: self.commands()?,
        })
    }
}

/// Open and load every stream.
pub fn read_bundle(dir: impl AsRef<Path>, options: ReadOptions) -> Result<(Manifest, SequenceStreams), StoreError> {
    let b = Bundle::open(dir, options)?;
    let s = b.streams()?;
    Ok((b.manifest, s))
}
