//! Engine configuration, loadable from TOML. Every field has a default, so an empty file is a
//! complete configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ais::AisConfig;
use crate::tracking::TrackerConfig;
use crate::{CameraModel, Error, GeoPoint, Result, Seconds};

/// Camera placement. The pose fields build the extrinsics unless explicit matrices are given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub lon: f64,
    pub lat: f64,
    /// Height above the water plane, meters.
    pub height: f64,
    /// Viewing direction, degrees clockwise from north.
    pub heading: f64,
    /// Downward tilt, degrees.
    pub pitch: f64,
    pub focal: [f64; 2],
    /// Defaults to the image center.
    pub principal: Option<[f64; 2]>,
    pub image_width: u32,
    pub image_height: u32,
    pub intrinsics: Option<[[f64; 3]; 3]>,
    pub extrinsics: Option<[[f64; 4]; 3]>,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            lon: 114.3,
            lat: 30.6,
            height: 20.0,
            heading: 0.0,
            pitch: 1.5,
            focal: [1000.0, 1000.0],
            principal: None,
            image_width: 1280,
            image_height: 720,
            intrinsics: None,
            extrinsics: None,
        }
    }
}

impl CameraConfig {
    pub fn model(&self) -> Result<CameraModel> {
        let geo = GeoPoint::new(self.lon, self.lat)?;
        let principal = self
            .principal
            .unwrap_or([self.image_width as f64 / 2.0, self.image_height as f64 / 2.0]);
        let mut cam = CameraModel::from_pose(
            geo,
            self.height,
            self.heading,
            self.pitch,
            (self.focal[0], self.focal[1]),
            (principal[0], principal[1]),
            self.image_width,
            self.image_height,
        );
        if let Some(k) = self.intrinsics {
            cam.intrinsics = k;
        }
        if let Some(e) = self.extrinsics {
            cam.extrinsics = e;
        }
        cam.validate()?;
        Ok(cam)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub camera: CameraConfig,
    /// Supervision radius around the camera, meters.
    pub region_radius: f64,
    /// AIS retention window, seconds.
    pub retention: Seconds,
    /// Occlusion area threshold.
    pub omega: f64,
    /// Span of the visual motion estimate, seconds.
    pub delta: Seconds,
    /// Gate on the distance between the last trajectory points; `None` means half the image width.
    pub d_max: Option<f64>,
    pub mat_min: u32,
    pub t_max: Seconds,
    pub fastdtw_radius: usize,
    /// Divide path costs by the warp path length before direction weighting.
    pub normalize_dtw: bool,
    pub anti_occlusion: bool,
    pub embedding_dim: usize,
    pub seed: u64,
    pub tracker: TrackerSettings,
}

/// Tracker constants that live in their own table of the config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerSettings {
    pub lambda: f64,
    pub gating_threshold: f64,
    pub max_cosine_distance: f64,
    pub max_iou_distance: f64,
    pub n_init: u32,
    pub max_age: u32,
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
    pub embedding_momentum: f64,
    pub spawn_suppression_iou: f64,
    pub anchor: crate::tracking::Anchor,
}

impl Default for TrackerSettings {
    fn default() -> Self {
        let d = TrackerConfig::default();
        Self {
            lambda: d.lambda,
            gating_threshold: d.gating_threshold,
            max_cosine_distance: d.max_cosine_distance,
            max_iou_distance: d.max_iou_distance,
            n_init: d.n_init,
            max_age: d.max_age,
            std_weight_position: d.std_weight_position,
            std_weight_velocity: d.std_weight_velocity,
            embedding_momentum: d.embedding_momentum,
            spawn_suppression_iou: d.spawn_suppression_iou,
            anchor: d.anchor,
        }
    }
}

impl Default for EngineConfig {
    fn default() -> Self {
        let ais = AisConfig::default();
        Self {
            camera: CameraConfig::default(),
            region_radius: ais.region_radius,
            retention: ais.max_age,
            omega: 0.0,
            delta: 5,
            d_max: None,
            mat_min: 15,
            t_max: 15,
            fastdtw_radius: 1,
            normalize_dtw: false,
            anti_occlusion: true,
            embedding_dim: 128,
            seed: 0,
            tracker: TrackerSettings::default(),
        }
    }
}

impl EngineConfig {
    pub fn from_toml_str(text: &str, source_name: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| toml_error(source_name, text, &e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("engine config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.model()?;
        let positive = [("region_radius", self.region_radius), ("d_max", self.d_max.unwrap_or(1.0))];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{name} must be positive")));
            }
        }
        if self.retention <= 0 || self.t_max <= 0 || self.delta <= 0 {
            return Err(Error::Validation("retention, t_max and delta must be positive".into()));
        }
        if self.fastdtw_radius == 0 || self.embedding_dim == 0 {
            return Err(Error::Validation("fastdtw_radius and embedding_dim must be positive".into()));
        }
        self.tracker_config().validate()
    }

    pub fn camera_model(&self) -> Result<CameraModel> {
        self.camera.model()
    }

    pub fn ais_config(&self) -> AisConfig {
        AisConfig {
            region_radius: self.region_radius,
            max_age: self.retention,
            ..AisConfig::default()
        }
    }

    pub fn tracker_config(&self) -> TrackerConfig {
        let s = &self.tracker;
        TrackerConfig {
            lambda: s.lambda,
            gating_threshold: s.gating_threshold,
            max_cosine_distance: s.max_cosine_distance,
            max_iou_distance: s.max_iou_distance,
            n_init: s.n_init,
            max_age: s.max_age,
            std_weight_position: s.std_weight_position,
            std_weight_velocity: s.std_weight_velocity,
            embedding_momentum: s.embedding_momentum,
            spawn_suppression_iou: s.spawn_suppression_iou,
            omega: self.omega,
            delta: self.delta,
            history_len: self.retention.max(2) as usize,
            anchor: s.anchor,
            anti_occlusion: self.anti_occlusion,
        }
    }

    pub fn d_max_px(&self) -> f64 {
        self.d_max.unwrap_or(self.camera.image_width as f64 / 2.0)
    }
}

/// Converts a TOML error into a parse error carrying the 1-based line of the offending span.
pub(crate) fn toml_error(source_name: &str, text: &str, e: &toml::de::Error) -> Error {
    let line = e
        .span()
        .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    Error::parse(source_name, line, e.message().to_string())
}
