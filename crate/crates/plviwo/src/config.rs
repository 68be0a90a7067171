//! JSON configuration types. Unknown keys are rejected everywhere.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use plviwo_core::estimator::NoiseParams;
use plviwo_core::geometry::{PinholeCamera, Pose3, Rotation3};
use plviwo_core::wheel::WheelIntrinsics;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}:{column}: {msg}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Parses JSON text, reporting the line and column of any syntax or schema error.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        path: origin.to_string(),
        line: e.line(),
        column: e.column(),
        msg: strip_position(&e.to_string()),
    })
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_json(&text, &path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            fx: 400.0,
            fy: 400.0,
            cx: 320.0,
            cy: 240.0,
            width: 640.0,
            height: 480.0,
        }
    }
}

impl CameraConfig {
    pub fn pinhole(&self) -> Result<PinholeCamera, ConfigError> {
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(ConfigError::Invalid("camera: width and height must be positive".into()));
        }
        PinholeCamera::new(self.fx, self.fy, self.cx, self.cy).map_err(|e| ConfigError::Invalid(format!("camera: {e}")))
    }
}

/// Rigid transform with a Hamilton quaternion `[qx, qy, qz, qw]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseConfig {
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
}

impl PoseConfig {
    pub fn from_pose(p: &Pose3) -> Self {
        let q = p.rotation.quaternion();
        Self {
            rotation: [q.i, q.j, q.k, q.w],
            translation: [p.translation.x, p.translation.y, p.translation.z],
        }
    }

    pub fn pose(&self, name: &str) -> Result<Pose3, ConfigError> {
        let [x, y, z, w] = self.rotation;
        let rot = Rotation3::from_quaternion(w, x, y, z).map_err(|e| ConfigError::Invalid(format!("{name}: {e}")))?;
        let t = Vector3::from(self.translation);
        if !t.iter().all(|v| v.is_finite()) {
            return Err(ConfigError::Invalid(format!("{name}: translation must be finite")));
        }
        Ok(Pose3::new(rot, t))
    }
}

/// Camera looking along the IMU x axis, image x along IMU −y.
pub fn default_t_ci() -> PoseConfig {
    let r = Rotation3::from_matrix(&Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0));
    PoseConfig::from_pose(&Pose3::new(r, Vector3::new(0.0, -0.05, -0.1)))
}

pub fn default_t_wi() -> PoseConfig {
    PoseConfig {
        rotation: [0.0, 0.0, 0.0, 1.0],
        translation: [0.1, 0.0, 0.3],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WheelConfig {
    pub r_l: f64,
    pub r_r: f64,
    pub b: f64,
}

impl Default for WheelConfig {
    fn default() -> Self {
        Self {
            r_l: 0.3,
            r_r: 0.3,
            b: 0.6,
        }
    }
}

impl WheelConfig {
    pub fn intrinsics(&self) -> Result<WheelIntrinsics, ConfigError> {
        WheelIntrinsics::new(self.r_l, self.r_r, self.b).map_err(|e| ConfigError::Invalid(format!("wheel: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub sigma_g: f64,
    pub sigma_a: f64,
    pub sigma_bg: f64,
    pub sigma_ba: f64,
    pub sigma_px: f64,
    pub sigma_l: f64,
    pub sigma_w: f64,
    pub sigma_p: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::from(&NoiseParams::default())
    }
}

impl From<&NoiseParams> for NoiseConfig {
    fn from(n: &NoiseParams) -> Self {
        Self {
            sigma_g: n.sigma_g,
            sigma_a: n.sigma_a,
            sigma_bg: n.sigma_bg,
            sigma_ba: n.sigma_ba,
            sigma_px: n.sigma_px,
            sigma_l: n.sigma_l,
            sigma_w: n.sigma_w,
            sigma_p: n.sigma_p,
        }
    }
}

impl NoiseConfig {
    pub fn params(&self) -> Result<NoiseParams, ConfigError> {
        let p = NoiseParams {
            sigma_g: self.sigma_g,
            sigma_a: self.sigma_a,
            sigma_bg: self.sigma_bg,
            sigma_ba: self.sigma_ba,
            sigma_px: self.sigma_px,
            sigma_l: self.sigma_l,
            sigma_w: self.sigma_w,
            sigma_p: self.sigma_p,
        };
        p.validate().map_err(|e| ConfigError::Invalid(format!("noise: {e}")))?;
        Ok(p)
    }
}

/// Estimator and front-end tunables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub window: usize,
    pub chi2_prob: f64,
    pub chi2_multiplier: f64,
    pub min_point_obs: usize,
    pub mcc_threshold_px: f64,
    pub mcc_max_count: usize,
    pub refine_iters: usize,
    /// Standard deviations of the initial IMU error state blocks.
    pub init_sigma_theta: f64,
    pub init_sigma_p: f64,
    pub init_sigma_v: f64,
    pub init_sigma_bg: f64,
    pub init_sigma_ba: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            window: 11,
            chi2_prob: 0.95,
            chi2_multiplier: 1.0,
            min_point_obs: 3,
            mcc_threshold_px: 3.0,
            mcc_max_count: 70,
            refine_iters: 5,
            init_sigma_theta: 1e-3,
            init_sigma_p: 1e-3,
            init_sigma_v: 1e-2,
            init_sigma_bg: 1e-3,
            init_sigma_ba: 1e-2,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.window < 3 {
            return Err(ConfigError::Invalid("filter.window must be at least 3".into()));
        }
        if !(self.chi2_prob > 0.0 && self.chi2_prob < 1.0) {
            return Err(ConfigError::Invalid("filter.chi2_prob must be in (0, 1)".into()));
        }
        if !(self.chi2_multiplier > 0.0) {
            return Err(ConfigError::Invalid("filter.chi2_multiplier must be positive".into()));
        }
        if self.min_point_obs < 2 || self.refine_iters == 0 {
            return Err(ConfigError::Invalid(
                "filter.min_point_obs must be >= 2 and refine_iters > 0".into(),
            ));
        }
        if !(self.mcc_threshold_px > 0.0) {
            return Err(ConfigError::Invalid("filter.mcc_threshold_px must be positive".into()));
        }
        let sig = [
            self.init_sigma_theta,
            self.init_sigma_p,
            self.init_sigma_v,
            self.init_sigma_bg,
            self.init_sigma_ba,
        ];
        if sig.iter().any(|s| !(*s > 0.0)) {
            return Err(ConfigError::Invalid("filter.init_sigma_* must be positive".into()));
        }
        Ok(())
    }
}

/// Initial IMU state expressed in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub t: f64,
    /// `R_GI` as `[qx, qy, qz, qw]`.
    pub q_gi: [f64; 4],
    pub p: [f64; 3],
    pub v: [f64; 3],
    #[serde(default)]
    pub bg: [f64; 3],
    #[serde(default)]
    pub ba: [f64; 3],
}

/// Everything needed to run the estimator on recorded streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    #[serde(default)]
    pub camera: CameraConfig,
    /// Maps IMU points into the camera frame.
    #[serde(default = "default_t_ci")]
    pub t_ci: PoseConfig,
    /// Maps IMU points into the wheel frame.
    #[serde(default = "default_t_wi")]
    pub t_wi: PoseConfig,
    #[serde(default)]
    pub wheel: WheelConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    pub camera_rate: f64,
    pub initial: InitialState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineFlags {
    pub points: bool,
    pub lines: bool,
    pub wheel: bool,
    pub mcc: bool,
}

impl Default for PipelineFlags {
    fn default() -> Self {
        Self {
            points: true,
            lines: true,
            wheel: true,
            mcc: true,
        }
    }
}

impl PipelineFlags {
    pub fn points_only_no_wheel() -> Self {
        Self {
            points: true,
            lines: false,
            wheel: false,
            mcc: false,
        }
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        for (on, name) in [
            (self.points, "points"),
            (self.lines, "lines"),
            (self.wheel, "wheel"),
            (self.mcc, "mcc"),
        ] {
            if on {
                parts.push(name);
            }
        }
        if parts.is_empty() {
            "imu-only".into()
        } else {
            parts.join("+")
        }
    }
}
