//! Session configuration, loaded from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use twin_teleop::geometry::{CameraIntrinsics, RigidTransform, Rotation, Vec3};
use twin_teleop::harness::ChannelModel;
use twin_teleop::registration::{overlay_silhouette, FRAME_BASE, FRAME_CAMERA};
use twin_teleop::scene::{SceneLayout, SceneState};
use twin_teleop::{ControllerConfig, StrategyKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid session config: {0}")]
    Invalid(String),
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing config: {0}")]
    Toml(#[from] toml::de::Error),
}

/// Overlay camera: intrinsics plus its pose relative to the robot base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub intrinsics: CameraIntrinsics,
    /// camera -> base (or base -> camera; frame labels decide).
    pub extrinsic: RigidTransform,
}

impl Default for CameraConfig {
    /// 640x480 camera 25 cm above the board, looking straight down.
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics::new(800.0, 800.0, 320.0, 240.0, 640, 480)
                .expect("default intrinsics are valid"),
            extrinsic: RigidTransform::new(
                FRAME_CAMERA,
                FRAME_BASE,
                Rotation::rot_x(std::f64::consts::PI),
                Vec3::new(0.0, 0.0, 0.25),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub strategy: StrategyKind,
    pub seed: u64,
    /// `always_up` is manual mode: the link only drops on `inject_outage`.
    pub channel: ChannelModel,
    /// Length of the pre-drawn link schedule, seconds. The link stays up past it.
    pub horizon: f64,
    pub controller: ControllerConfig,
    pub scene: SceneLayout,
    pub camera: CameraConfig,
    /// State frames per second of simulated time.
    pub broadcast_rate: f64,
    /// Simulated seconds per wall-clock second.
    pub time_scale: f64,
    /// Directory served at `/` (the browser client), if any.
    pub static_dir: Option<PathBuf>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            strategy: StrategyKind::Replay,
            seed: 0,
            channel: ChannelModel::AlwaysUp,
            horizon: 3600.0,
            controller: ControllerConfig::default(),
            scene: SceneLayout::default(),
            camera: CameraConfig::default(),
            broadcast_rate: 50.0,
            time_scale: 1.0,
            static_dir: None,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.controller.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let scene = SceneState::new(&self.scene).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.scene.jaw_max > self.controller.jaw_max {
            return bad("scene jaw_max exceeds controller jaw_max".into());
        }
        if !(self.broadcast_rate > 0.0 && self.broadcast_rate <= self.controller.tick_rate) {
            return bad(format!(
                "broadcast_rate {} must be in (0, tick_rate = {}]",
                self.broadcast_rate, self.controller.tick_rate
            ));
        }
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return bad("time_scale must be positive".into());
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon must be positive".into());
        }
        self.channel
            .schedule(self.horizon, self.seed)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        overlay_silhouette(&scene, &self.camera.extrinsic, &self.camera.intrinsics)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: SessionConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
