use std::collections::{BTreeMap, BTreeSet};

use super::occlusion::in_any_area;
use super::{
    detect_occlusion_areas, measurement_of, normalize, predict_box_ais, predict_box_visual, rect_of,
    remove_boxes_in_areas, update_feature_bank, DetectionBox, FeatureBank, HistoryPoint, KalmanFilter,
    OcclusionArea, TrackId, TrackStatus, TrackerConfig, VisualTrack,
};
use crate::ais::{AisTrajectory, Mmsi};
use crate::assignment::solve;
use crate::{CostMatrix, Error, Result, Seconds};

/// Tracker state carried from tick to tick.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    kf: KalmanFilter,
    tracks: Vec<VisualTrack>,
    next_id: TrackId,
    oar: Vec<OcclusionArea>,
    bank: FeatureBank,
    last_t: Option<Seconds>,
}

fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Self {
            kf: KalmanFilter {
                std_weight_position: cfg.std_weight_position,
                std_weight_velocity: cfg.std_weight_velocity,
            },
            cfg,
            tracks: Vec::new(),
            next_id: 1,
            oar: Vec::new(),
            bank: FeatureBank::new(),
            last_t: None,
        }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Live tracks, in creation order.
    pub fn tracks(&self) -> &[VisualTrack] {
        &self.tracks
    }

    pub fn track(&self, id: TrackId) -> Option<&VisualTrack> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn occlusion_areas(&self) -> &[OcclusionArea] {
        &self.oar
    }

    pub fn feature_bank(&self) -> &FeatureBank {
        &self.bank
    }

    /// Runs one tick. `bindings` maps tracks to the MMSI they were bound to at the previous
    /// tick. Returns the confirmed tracks updated with a box at `t`, in creation order.
    pub fn step(
        &mut self,
        t: Seconds,
        detections: Vec<DetectionBox>,
        ais: &[AisTrajectory],
        bindings: &BTreeMap<TrackId, Mmsi>,
    ) -> Result<Vec<TrackId>> {
        if self.last_t.is_some_and(|last| t <= last) {
            return Err(Error::invalid(format!("tick {t} does not advance past {}", self.last_t.unwrap())));
        }
        if let Some(d) = detections.iter().find(|d| d.t != t) {
            return Err(Error::invalid(format!("detection stamped {} in tick {t}", d.t)));
        }
        self.last_t = Some(t);

        let mut boxes = detections;
        if self.cfg.anti_occlusion {
            boxes = remove_boxes_in_areas(boxes, &self.oar);
            let occluded: BTreeSet<TrackId> = self
                .tracks
                .iter()
                .filter(|tr| in_any_area(&tr.current_rect(), &self.oar))
                .map(|tr| tr.id)
                .collect();
            self.bank = update_feature_bank(&self.bank, &self.tracks, &occluded);
            for tr in self.tracks.iter().filter(|tr| occluded.contains(&tr.id)) {
                let from_ais = bindings
                    .get(&tr.id)
                    .and_then(|m| ais.iter().find(|a| a.mmsi == *m))
                    .and_then(|traj| predict_box_ais(&tr.current_rect(), traj, t));
                let rect = from_ais.unwrap_or_else(|| predict_box_visual(tr, self.cfg.delta, t));
                boxes.push(DetectionBox {
                    t,
                    rect,
                    confidence: tr.last_box.confidence,
                    embedding: self.bank.get(&tr.id).cloned(),
                    source_track: Some(tr.id),
                });
            }
        } else {
            self.oar.clear();
            self.bank.clear();
        }

        let assigned = self.update(t, &boxes)?;

        if self.cfg.anti_occlusion {
            // Confirmed tracks coasting without a box keep their Kalman rect, so a missed
            // detection at the onset of an overlap still opens an area.
            let with_box: BTreeSet<TrackId> = assigned.values().copied().collect();
            let tagged: Vec<_> = boxes
                .iter()
                .enumerate()
                .map(|(i, b)| (b.rect, assigned.get(&i).copied()))
                .chain(
                    self.tracks
                        .iter()
                        .filter(|tr| tr.is_confirmed() && !with_box.contains(&tr.id))
                        .map(|tr| (tr.current_rect(), Some(tr.id))),
                )
                .collect();
            self.oar = detect_occlusion_areas(&tagged, self.cfg.omega);
        }

        Ok(self
            .tracks
            .iter()
            .filter(|tr| tr.is_confirmed() && tr.time_since_update == 0)
            .map(|tr| tr.id)
            .collect())
    }

    fn association_cost(&self, tr: &VisualTrack, det: &DetectionBox) -> f64 {
        let maha = self.kf.gating_distance(&tr.mean, &tr.covariance, &measurement_of(&det.rect));
        if !(maha <= self.cfg.gating_threshold) {
            return f64::INFINITY;
        }
        match (&tr.smoothed_embedding, &det.embedding) {
            (Some(a), Some(b)) => {
                let cos = cosine_distance(a, b);
                if cos > self.cfg.max_cosine_distance {
                    f64::INFINITY
                } else {
                    self.cfg.lambda * maha + (1.0 - self.cfg.lambda) * cos
                }
            }
            _ => self.cfg.lambda * maha,
        }
    }

    fn appearance_compatible(&self, tr: &VisualTrack, det: &DetectionBox) -> bool {
        match (&tr.smoothed_embedding, &det.embedding) {
            (Some(a), Some(b)) => cosine_distance(a, b) <= self.cfg.max_cosine_distance,
            _ => true,
        }
    }

    /// Kalman predict, two-stage association and lifecycle update. Returns box index to track.
    fn update(&mut self, t: Seconds, boxes: &[DetectionBox]) -> Result<BTreeMap<usize, TrackId>> {
        for tr in &mut self.tracks {
            (tr.mean, tr.covariance) = self.kf.predict(&tr.mean, &tr.covariance);
            tr.age += 1;
            tr.time_since_update += 1;
        }

        // Detected boxes are associated first; a predicted box only stands in for its source
        // track when no detection was taken by it.
        let detected: Vec<usize> = (0..boxes.len()).filter(|&j| !boxes[j].is_predicted()).collect();
        let mut costs = CostMatrix::filled(self.tracks.len(), detected.len(), f64::INFINITY);
        for (i, tr) in self.tracks.iter().enumerate() {
            for (b, &j) in detected.iter().enumerate() {
                costs.set(i, b, self.association_cost(tr, &boxes[j]));
            }
        }
        let mut matches: Vec<(usize, usize)> = solve(&costs)?.into_iter().map(|(i, b)| (i, detected[b])).collect();

        let matched_tracks: BTreeSet<usize> = matches.iter().map(|m| m.0).collect();
        let matched_boxes: BTreeSet<usize> = matches.iter().map(|m| m.1).collect();
        let rest_tracks: Vec<usize> = (0..self.tracks.len())
            .filter(|i| !matched_tracks.contains(i))
            .collect();
        let rest_boxes: Vec<usize> = detected.iter().copied().filter(|j| !matched_boxes.contains(j)).collect();
        if !rest_tracks.is_empty() && !rest_boxes.is_empty() {
            let mut iou_costs = CostMatrix::filled(rest_tracks.len(), rest_boxes.len(), f64::INFINITY);
            for (a, &i) in rest_tracks.iter().enumerate() {
                let tr = &self.tracks[i];
                let predicted = rect_of(&tr.mean);
                for (b, &j) in rest_boxes.iter().enumerate() {
                    let d = 1.0 - predicted.iou(&boxes[j].rect);
                    if d <= self.cfg.max_iou_distance && self.appearance_compatible(tr, &boxes[j]) {
                        iou_costs.set(a, b, d);
                    }
                }
            }
            matches.extend(solve(&iou_costs)?.into_iter().map(|(a, b)| (rest_tracks[a], rest_boxes[b])));
        }

        let matched_tracks: BTreeSet<usize> = matches.iter().map(|m| m.0).collect();
        for (j, det) in boxes.iter().enumerate() {
            let Some(source) = det.source_track else { continue };
            if let Some(i) = self.tracks.iter().position(|tr| tr.id == source) {
                if !matched_tracks.contains(&i) {
                    matches.push((i, j));
                }
            }
        }

        let mut assigned = BTreeMap::new();
        for &(i, j) in &matches {
            let det = &boxes[j];
            let anchor = self.cfg.anchor.of(&det.rect);
            let tr = &mut self.tracks[i];
            (tr.mean, tr.covariance) = self.kf.update(&tr.mean, &tr.covariance, &measurement_of(&det.rect));
            tr.hits += 1;
            tr.time_since_update = 0;
            if tr.status == TrackStatus::Tentative && tr.hits >= self.cfg.n_init {
                tr.status = TrackStatus::Confirmed;
            }
            if !det.is_predicted() {
                if let Some(e) = &det.embedding {
                    tr.smoothed_embedding = match &tr.smoothed_embedding {
                        None => Some(e.clone()),
                        Some(s) => {
                            let m = self.cfg.embedding_momentum;
                            let mixed: Vec<f64> = s.iter().zip(e).map(|(a, b)| m * a + (1.0 - m) * b).collect();
                            normalize(&mixed).or_else(|| Some(e.clone()))
                        }
                    };
                }
            }
            tr.last_box = det.clone();
            tr.history.push(HistoryPoint {
                t,
                anchor,
                rect: det.rect,
                observed: true,
            });
            assigned.insert(j, tr.id);
        }

        let matched_tracks: BTreeSet<usize> = matches.iter().map(|m| m.0).collect();
        for (i, tr) in self.tracks.iter_mut().enumerate() {
            if matched_tracks.contains(&i) {
                continue;
            }
            if tr.status == TrackStatus::Tentative || tr.time_since_update > self.cfg.max_age {
                tr.status = TrackStatus::Lost;
                continue;
            }
            let rect = rect_of(&tr.mean);
            tr.history.push(HistoryPoint {
                t,
                anchor: self.cfg.anchor.of(&rect),
                rect,
                observed: false,
            });
        }
        self.tracks.retain(|tr| tr.status != TrackStatus::Lost);

        let taken: Vec<_> = assigned.keys().map(|&j| boxes[j].rect).collect();
        for (j, det) in boxes.iter().enumerate() {
            if assigned.contains_key(&j) || det.is_predicted() {
                continue;
            }
            if taken.iter().any(|r| r.iou(&det.rect) > self.cfg.spawn_suppression_iou) {
                continue;
            }
            let id = self.next_id;
            self.next_id += 1;
            let (mean, covariance) = self.kf.initiate(&measurement_of(&det.rect));
            self.tracks.push(VisualTrack {
                id,
                history: vec![HistoryPoint {
                    t,
                    anchor: self.cfg.anchor.of(&det.rect),
                    rect: det.rect,
                    observed: true,
                }],
                last_box: det.clone(),
                mean,
                covariance,
                status: if self.cfg.n_init <= 1 {
                    TrackStatus::Confirmed
                } else {
                    TrackStatus::Tentative
                },
                hits: 1,
                age: 1,
                time_since_update: 0,
                smoothed_embedding: det.embedding.clone(),
            });
            assigned.insert(j, id);
        }

        for tr in &mut self.tracks {
            if tr.history.len() > self.cfg.history_len {
                let excess = tr.history.len() - self.cfg.history_len;
                tr.history.drain(..excess);
            }
        }
        Ok(assigned)
    }
}
