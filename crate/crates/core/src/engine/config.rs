use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use super::EngineError;
use crate::control::{PathFile, TeleopConfig, TrackerConfig};
use crate::kinematics::ChassisParams;
use crate::pose::Pose;
use crate::scene::PoseDocument;
use crate::sensors::{ImuModel, LidarModel, MoverSampling, RisleyParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    #[default]
    Teleop,
    Track,
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StartPose {
    pub x: f64,
    pub y: f64,
    pub yaw_deg: f64,
}

/// Built-in LIDAR name plus optional per-field overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarConfig {
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fov_h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fov_v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elevation_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_range: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range_noise_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mount: Option<PoseDocument>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub risley: Option<RisleyParams>,
    pub mover_sampling: MoverSampling,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            model: "avia".to_string(),
            fov_h: None,
            fov_v: None,
            elevation_min: None,
            channels: None,
            point_rate: None,
            max_range: None,
            frame_rate: None,
            range_noise_sigma: None,
            mount: None,
            risley: None,
            mover_sampling: MoverSampling::default(),
        }
    }
}

impl LidarConfig {
    pub fn builtin(model: &str) -> Self {
        Self {
            model: model.to_string(),
            ..Self::default()
        }
    }

    pub fn resolve(&self) -> Result<LidarModel, EngineError> {
        let mut m = LidarModel::builtin(&self.model)
            .ok_or_else(|| EngineError::Config(format!("unknown lidar model `{}`", self.model)))?;
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f { m.$f = v; } )*};
        }
        set!(fov_h, fov_v, elevation_min, channels, point_rate, max_range, frame_rate, range_noise_sigma, risley);
        if let Some(doc) = &self.mount {
            m.mount = doc.to_pose();
        }
        m.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        Ok(m)
    }
}

/// Everything that determines a run. Loaded from TOML; relative file paths
/// resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Scene file path or `builtin:<name>`.
    pub scene: String,
    /// s
    pub duration: f64,
    /// s
    pub base_dt: f64,
    pub seed: u64,
    /// Height of the body origin above the ground plane, m.
    pub z0: f64,
    pub start: StartPose,
    pub mode: ModeKind,
    /// Waypoints file for `track` mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path_file: Option<String>,
    /// Inline waypoints for `track` mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<[f64; 2]>>,
    /// Command log for `scripted` mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command_file: Option<String>,
    pub lidar: LidarConfig,
    pub imu: ImuModel,
    pub chassis: ChassisParams,
    pub teleop: TeleopConfig,
    pub tracker: TrackerConfig,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: "builtin:room".to_string(),
            duration: 10.0,
            base_dt: 0.005,
            seed: 0,
            z0: 0.0,
            start: StartPose::default(),
            mode: ModeKind::Teleop,
            path_file: None,
            path: None,
            command_file: None,
            lidar: LidarConfig::default(),
            imu: ImuModel::default(),
            chassis: ChassisParams::default(),
            teleop: TeleopConfig::default(),
            tracker: TrackerConfig::default(),
            base_dir: None,
        }
    }
}

/// `x` as a whole multiple of `unit`, if it is one to within 1e-9 relative.
pub(crate) fn whole_ratio(x: f64, unit: f64) -> Option<u64> {
    let r = x / unit;
    let n = r.round();
    (n >= 1.0 && (r - n).abs() <= 1e-9 * n.max(1.0)).then_some(n as u64)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, EngineError> {
        toml::from_str(text).map_err(|e| EngineError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig, EngineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| EngineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)
            .map_err(|e| EngineError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve_path(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// Scene spec with relative file paths resolved.
    pub fn scene_spec(&self) -> String {
        if self.scene.starts_with("builtin:") {
            self.scene.clone()
        } else {
            self.resolve_path(&self.scene).to_string_lossy().into_owned()
        }
    }

    pub fn tick_count(&self) -> u64 {
        whole_ratio(self.duration, self.base_dt).unwrap_or(0)
    }

    pub fn waypoints(&self) -> Result<Option<Vec<[f64; 2]>>, EngineError> {
        if let Some(p) = &self.path {
            return Ok(Some(p.clone()));
        }
        match &self.path_file {
            Some(f) => {
                let pf = PathFile::load(self.resolve_path(f)).map_err(|e| EngineError::Config(e.to_string()))?;
                Ok(Some(pf.0))
            }
            None => Ok(None),
        }
    }

    pub fn start_pose(&self) -> Pose {
        Pose::planar(self.start.x, self.start.y, self.z0, self.start.yaw_deg.to_radians())
    }

    /// Check everything that does not need file access.
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::Config(m));
        if !(self.base_dt > 0.0 && self.base_dt <= crate::kinematics::MAX_STEP) {
            return bad(format!("base_dt must be in (0, {}] s", crate::kinematics::MAX_STEP));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad("duration must be strictly positive".into());
        }
        if whole_ratio(self.duration, self.base_dt).is_none() {
            return bad(format!("duration {} s is not a whole number of {} s ticks", self.duration, self.base_dt));
        }
        let lidar = self.lidar.resolve()?;
        if whole_ratio(lidar.frame_period(), self.base_dt).is_none() {
            return bad(format!(
                "base_dt {} s does not divide the lidar frame period {} s",
                self.base_dt,
                lidar.frame_period()
            ));
        }
        self.imu.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        if whole_ratio(self.imu.period(), self.base_dt).is_none() {
            return bad(format!(
                "base_dt {} s does not divide the imu period {} s",
                self.base_dt,
                self.imu.period()
            ));
        }
        self.chassis.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        self.teleop.validate().map_err(EngineError::Config)?;
        self.tracker.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        match self.mode {
            ModeKind::Track if self.path.is_none() && self.path_file.is_none() => {
                bad("track mode needs `path` or `path_file`".into())
            }
            ModeKind::Scripted if self.command_file.is_none() => {
                bad("scripted mode needs `command_file`".into())
            }
            _ => Ok(()),
        }
    }
}
