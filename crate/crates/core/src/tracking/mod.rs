//! Occlusion-aware tracking-by-detection producing per-track visual trajectories.
//!
//! Each tick the tracker removes detections inside the previous occlusion areas, predicts
//! boxes for the tracks it lost there (from the bound AIS trajectory when available, else from
//! the track's own recent motion), pairs the predictions with banked appearance features and
//! runs one Kalman / Hungarian update.

mod kalman;
mod occlusion;
mod tracker;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use kalman::{measurement_of, rect_of, KalmanFilter, StateCovariance, StateVector, CHI2_95_4DOF};
pub use occlusion::{
    detect_occlusion_areas, occlusion_ratio, predict_box_ais, predict_box_visual, remove_boxes_in_areas,
    update_feature_bank,
};
pub use tracker::Tracker;

use crate::{Error, PixelPoint, Rect, Result, Seconds};

pub type TrackId = u64;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionBox {
    pub t: Seconds,
    pub rect: Rect,
    pub confidence: f64,
    pub embedding: Option<Vec<f64>>,
    /// Set for boxes predicted for an occluded track rather than detected.
    pub source_track: Option<TrackId>,
}

impl DetectionBox {
    pub fn new(t: Seconds, rect: Rect, confidence: f64, embedding: Option<Vec<f64>>) -> Result<Self> {
        if !rect.is_valid() {
            return Err(Error::invalid("detection box corners are not ordered"));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::invalid(format!("confidence {confidence} outside [0, 1]")));
        }
        if let Some(e) = &embedding {
            let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            if e.is_empty() || (norm - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(format!("embedding norm {norm} is not 1")));
            }
        }
        Ok(Self {
            t,
            rect,
            confidence,
            embedding,
            source_track: None,
        })
    }

    pub fn is_predicted(&self) -> bool {
        self.source_track.is_some()
    }
}

/// Scales `v` to unit length; `None` for a zero or non-finite vector.
pub fn normalize(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| v.iter().map(|x| x / norm).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionArea {
    pub rect: Rect,
    pub member_track_ids: BTreeSet<TrackId>,
}

/// Banked pre-occlusion appearance features keyed by track.
pub type FeatureBank = BTreeMap<TrackId, Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    #[default]
    BottomCenter,
    Center,
}

impl Anchor {
    pub fn of(self, r: &Rect) -> PixelPoint {
        match self {
            Anchor::BottomCenter => r.bottom_center(),
            Anchor::Center => r.center(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryPoint {
    pub t: Seconds,
    pub anchor: PixelPoint,
    pub rect: Rect,
    /// False when the point comes from the filter alone (no box was associated).
    pub observed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisualTrack {
    pub id: TrackId,
    pub history: Vec<HistoryPoint>,
    pub last_box: DetectionBox,
    pub mean: StateVector,
    pub covariance: StateCovariance,
    pub status: TrackStatus,
    pub hits: u32,
    pub age: u32,
    pub time_since_update: u32,
    pub smoothed_embedding: Option<Vec<f64>>,
}

impl VisualTrack {
    pub fn is_confirmed(&self) -> bool {
        self.status == TrackStatus::Confirmed
    }

    /// Box at the most recent tick: the associated box, or the filter's estimate after a miss.
    pub fn current_rect(&self) -> Rect {
        self.history.last().map_or(self.last_box.rect, |h| h.rect)
    }

    pub fn last_anchor(&self) -> PixelPoint {
        self.history.last().expect("tracks always carry history").anchor
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Weight of the Mahalanobis term in the association cost.
    pub lambda: f64,
    pub gating_threshold: f64,
    pub max_cosine_distance: f64,
    pub max_iou_distance: f64,
    pub n_init: u32,
    pub max_age: u32,
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
    /// Weight of the previous smoothed embedding when folding in a new one.
    pub embedding_momentum: f64,
    /// Unassigned detections overlapping a box assigned this tick above this IoU start no track.
    pub spawn_suppression_iou: f64,
    pub omega: f64,
    pub delta: Seconds,
    pub history_len: usize,
    pub anchor: Anchor,
    pub anti_occlusion: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            gating_threshold: CHI2_95_4DOF,
            max_cosine_distance: 0.3,
            max_iou_distance: 0.7,
            n_init: 2,
            max_age: 5,
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
            embedding_momentum: 0.9,
            spawn_suppression_iou: 0.5,
            omega: 0.0,
            delta: 5,
            history_len: 120,
            anchor: Anchor::BottomCenter,
            anti_occlusion: true,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gating_threshold", self.gating_threshold),
            ("max_cosine_distance", self.max_cosine_distance),
            ("max_iou_distance", self.max_iou_distance),
            ("std_weight_position", self.std_weight_position),
            ("std_weight_velocity", self.std_weight_velocity),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("tracker.{name} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda) || !(0.0..1.0).contains(&self.embedding_momentum) {
            return Err(Error::Validation("tracker.lambda and embedding_momentum must lie in [0, 1]".into()));
        }
        if !(self.omega >= 0.0 && self.omega < 1.0) {
            return Err(Error::Validation("tracker.omega must lie in [0, 1)".into()));
        }
        if self.n_init == 0 || self.max_age == 0 || self.delta <= 0 || self.history_len < 2 {
            return Err(Error::Validation(
                "tracker.n_init, max_age, delta must be positive and history_len at least 2".into(),
            ));
        }
        Ok(())
    }
}
