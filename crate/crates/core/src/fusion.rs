//! The per-second fusion tick: AIS store update, tracking, gated similarity matrix, assignment,
//! match counting and promotion of persistent MMSI-to-track bindings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ais::{clean, AisRecord, AisStore, AisTrajectory, Mmsi};
use crate::assignment::solve;
use crate::config::EngineConfig;
use crate::similarity::e_fastdtw_detailed;
use crate::tracking::{DetectionBox, TrackId, Tracker};
use crate::{CameraModel, CostMatrix, Error, PixelSeries, Result, Seconds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCount {
    pub z: u32,
    pub last_match: Seconds,
}

pub type MatchCounts = BTreeMap<(Mmsi, TrackId), MatchCount>;

/// One-to-one MMSI / track bindings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssociationSet {
    by_mmsi: BTreeMap<Mmsi, TrackId>,
    by_track: BTreeMap<TrackId, Mmsi>,
}

impl AssociationSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the pair unless either side is already bound; returns whether it was added.
    pub fn bind(&mut self, mmsi: Mmsi, track: TrackId) -> bool {
        if self.by_mmsi.contains_key(&mmsi) || self.by_track.contains_key(&track) {
            return false;
        }
        self.by_mmsi.insert(mmsi, track);
        self.by_track.insert(track, mmsi);
        true
    }

    pub fn contains(&self, mmsi: Mmsi, track: TrackId) -> bool {
        self.by_mmsi.get(&mmsi) == Some(&track)
    }

    pub fn track_of(&self, mmsi: Mmsi) -> Option<TrackId> {
        self.by_mmsi.get(&mmsi).copied()
    }

    pub fn mmsi_of(&self, track: TrackId) -> Option<Mmsi> {
        self.by_track.get(&track).copied()
    }

    pub fn by_track(&self) -> &BTreeMap<TrackId, Mmsi> {
        &self.by_track
    }

    pub fn len(&self) -> usize {
        self.by_mmsi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_mmsi.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (Mmsi, TrackId)> + '_ {
        self.by_mmsi.iter().map(|(&m, &t)| (m, t))
    }
}

/// A visual trajectory as fed to the similarity measure.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualSeries {
    pub track: TrackId,
    pub series: PixelSeries,
}

/// Output of [`build_similarity_matrix`]: the cost matrix and the pairs whose similarity was
/// actually computed.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub costs: CostMatrix,
    pub evaluated: Vec<(Mmsi, TrackId)>,
}

/// Rows are AIS trajectories, columns visual trajectories. Pairs whose last points are farther
/// apart than `d_max` are forbidden; otherwise bound pairs are forced and every other cell in a
/// bound row or column is forbidden; the remaining cells hold the direction-weighted FastDTW
/// score.
pub fn build_similarity_matrix(
    ais: &[AisTrajectory],
    vis: &[VisualSeries],
    bindings: &AssociationSet,
    d_max: f64,
    radius: usize,
    normalize: bool,
) -> Result<SimilarityMatrix> {
    let mut costs = CostMatrix::filled(ais.len(), vis.len(), f64::INFINITY);
    let mut evaluated = Vec::new();
    let ais_series: Vec<PixelSeries> = ais.iter().map(AisTrajectory::series).collect();
    for (i, a) in ais.iter().enumerate() {
        for (j, v) in vis.iter().enumerate() {
            if a.last_point().distance(&v.series.last()) > d_max {
                continue;
            }
            let row_bound = bindings.track_of(a.mmsi).is_some();
            let col_bound = bindings.mmsi_of(v.track).is_some();
            if row_bound || col_bound {
                if bindings.contains(a.mmsi, v.track) {
                    costs.set(i, j, f64::NEG_INFINITY);
                }
                continue;
            }
            let s = e_fastdtw_detailed(&ais_series[i], &v.series, radius, normalize)?;
            evaluated.push((a.mmsi, v.track));
            costs.set(i, j, s.score);
        }
    }
    Ok(SimilarityMatrix { costs, evaluated })
}

/// Increments counts of matched pairs and keeps unmatched ones only while
/// `now - last_match < t_max`.
pub fn update_counts(last: &MatchCounts, matched: &[(Mmsi, TrackId)], now: Seconds, t_max: Seconds) -> MatchCounts {
    let mut next: MatchCounts = last
        .iter()
        .filter(|(_, c)| now - c.last_match < t_max)
        .map(|(k, c)| (*k, *c))
        .collect();
    for &pair in matched {
        let z = last.get(&pair).map_or(0, |c| c.z) + 1;
        next.insert(pair, MatchCount { z, last_match: now });
    }
    next
}

/// Binds pairs whose count exceeds `mat_min`, one-to-one. Existing bindings keep priority, then
/// higher count, then lower MMSI.
pub fn promote_associations(counts: &MatchCounts, last: &AssociationSet, mat_min: u32) -> AssociationSet {
    let mut candidates: Vec<(Mmsi, TrackId, u32)> = counts
        .iter()
        .filter(|(_, c)| c.z > mat_min)
        .map(|(&(m, t), c)| (m, t, c.z))
        .collect();
    candidates.sort_by_key(|&(m, t, z)| (!last.contains(m, t), std::cmp::Reverse(z), m, t));
    let mut next = AssociationSet::new();
    for (m, t, _) in candidates {
        next.bind(m, t);
    }
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Matched,
    Associated,
    Unmatched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AisSnapshot {
    pub lon: f64,
    pub lat: f64,
    pub sog: f64,
    pub cog: f64,
    pub heading: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedAnnotation {
    pub t: Seconds,
    pub track: TrackId,
    pub mmsi: Option<Mmsi>,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub ais: Option<AisSnapshot>,
    pub prov: Provenance,
    /// The box was predicted for an occluded vessel rather than detected.
    pub predicted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickReport {
    pub t: Seconds,
    pub annotations: Vec<FusedAnnotation>,
    /// Pairs for which a similarity score was computed this tick.
    pub evaluated_pairs: Vec<(Mmsi, TrackId)>,
    /// Assignment result of this tick.
    pub matched: Vec<(Mmsi, TrackId)>,
}

/// Fusion state carried across ticks.
#[derive(Debug, Clone)]
pub struct FusionEngine {
    cfg: EngineConfig,
    camera: CameraModel,
    store: AisStore,
    tracker: Tracker,
    counts: MatchCounts,
    bindings: AssociationSet,
    last_tick: Option<Seconds>,
}

impl FusionEngine {
    pub fn new(cfg: EngineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            camera: cfg.camera_model()?,
            tracker: Tracker::new(cfg.tracker_config()),
            cfg,
            store: AisStore::new(),
            counts: MatchCounts::new(),
            bindings: AssociationSet::new(),
            last_tick: None,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    pub fn store(&self) -> &AisStore {
        &self.store
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    pub fn counts(&self) -> &MatchCounts {
        &self.counts
    }

    pub fn bindings(&self) -> &AssociationSet {
        &self.bindings
    }

    pub fn last_tick(&self) -> Option<Seconds> {
        self.last_tick
    }

    /// Processes one second of data. A rejected tick leaves the state untouched.
    pub fn tick(&mut self, now: Seconds, ais_batch: &[AisRecord], detections: Vec<DetectionBox>) -> Result<TickReport> {
        if let Some(last) = self.last_tick {
            if now <= last {
                return Err(Error::invalid(format!("tick {now} is not after the previous tick {last}")));
            }
        }
        if let Some(d) = detections.iter().find(|d| d.t != now) {
            return Err(Error::invalid(format!("detection stamped {} delivered in tick {now}", d.t)));
        }
        if let Some(r) = ais_batch.iter().find(|r| r.t > now) {
            return Err(Error::invalid(format!("AIS report stamped {} delivered in tick {now}", r.t)));
        }
        self.last_tick = Some(now);

        let ais_cfg = self.cfg.ais_config();
        let cleaned = clean(ais_batch, &self.camera, now, &ais_cfg);
        self.store.update(&cleaned, now, &self.camera, &ais_cfg);
        let trajectories = self.store.pixel_trajectories(&self.camera);

        let updated = self
            .tracker
            .step(now, detections, &trajectories, self.bindings.by_track())?;

        let cap = self.cfg.retention.max(1) as usize;
        let visual: Vec<VisualSeries> = updated
            .iter()
            .filter_map(|&id| self.tracker.track(id))
            .map(|tr| {
                let start = tr.history.len().saturating_sub(cap);
                let h = &tr.history[start..];
                VisualSeries {
                    track: tr.id,
                    series: PixelSeries::new(h.iter().map(|p| p.anchor).collect(), h.iter().map(|p| p.t).collect())
                        .expect("track history is non-empty and time-ordered"),
                }
            })
            .collect();

        let sim = build_similarity_matrix(
            &trajectories,
            &visual,
            &self.bindings,
            self.cfg.d_max_px(),
            self.cfg.fastdtw_radius,
            self.cfg.normalize_dtw,
        )?;
        let matched: Vec<(Mmsi, TrackId)> = solve(&sim.costs)?
            .into_iter()
            .map(|(i, j)| (trajectories[i].mmsi, visual[j].track))
            .collect();

        self.counts = update_counts(&self.counts, &matched, now, self.cfg.t_max);
        self.bindings = promote_associations(&self.counts, &self.bindings, self.cfg.mat_min);

        let matched_by_track: BTreeMap<TrackId, Mmsi> = matched.iter().map(|&(m, t)| (t, m)).collect();
        let annotations = visual
            .iter()
            .filter_map(|v| self.tracker.track(v.track))
            .map(|tr| {
                let (mmsi, prov) = match (self.bindings.mmsi_of(tr.id), matched_by_track.get(&tr.id)) {
                    (Some(m), _) => (Some(m), Provenance::Associated),
                    (None, Some(&m)) => (Some(m), Provenance::Matched),
                    (None, None) => (None, Provenance::Unmatched),
                };
                let ais = mmsi.and_then(|m| self.snapshot(m, now));
                let r = tr.last_box.rect;
                FusedAnnotation {
                    t: now,
                    track: tr.id,
                    mmsi,
                    bbox: [r.x_tl, r.y_tl, r.x_br, r.y_br],
                    ais,
                    prov,
                    predicted: tr.last_box.is_predicted(),
                }
            })
            .collect();

        Ok(TickReport {
            t: now,
            annotations,
            evaluated_pairs: sim.evaluated,
            matched,
        })
    }

    fn snapshot(&self, mmsi: Mmsi, now: Seconds) -> Option<AisSnapshot> {
        let points = self.store.points(mmsi)?;
        let p = points.iter().rev().find(|p| p.t <= now)?;
        Some(AisSnapshot {
            lon: p.pos.lon,
            lat: p.pos.lat,
            sog: p.sog,
            cog: p.cog,
            heading: p.heading,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::PixelPoint;

    fn traj(mmsi: u32, pts: &[(f64, f64)]) -> AisTrajectory {
        let rec = AisRecord {
            mmsi: Mmsi(mmsi),
            t: 0,
            pos: crate::GeoPoint { lon: 0.0, lat: 0.0 },
            sog: 0.0,
            cog: 0.0,
            heading: Some(0.0),
            synthetic: false,
        };
        AisTrajectory {
            mmsi: rec.mmsi,
            points: pts.iter().enumerate().map(|(k, &(x, y))| (k as Seconds, PixelPoint::new(x, y))).collect(),
            geo_points: Vec::new(),
            synthetic: vec![false; pts.len()],
            latest: rec,
        }
    }

    fn vis(track: TrackId, pts: &[(f64, f64)]) -> VisualSeries {
        VisualSeries {
            track,
            series: PixelSeries::from_xy(pts).unwrap(),
        }
    }

    #[test]
    fn distance_gate() {
        let a = [traj(413_000_001, &[(0.0, 0.0), (10.0, 0.0)])];
        let v = [vis(1, &[(900.0, 0.0), (910.0, 0.0)])];
        let sim = build_similarity_matrix(&a, &v, &AssociationSet::new(), 640.0, 1, false).unwrap();
        assert_eq!(sim.costs.get(0, 0), f64::INFINITY);
        assert!(sim.evaluated.is_empty());
    }

    #[test]
    fn bound_pairs_bypass_similarity() {
        let a = [traj(413_000_001, &[(0.0, 0.0), (10.0, 0.0)]), traj(413_000_002, &[(50.0, 0.0), (60.0, 0.0)])];
        let v = [vis(1, &[(0.0, 0.0), (10.0, 0.0)]), vis(2, &[(50.0, 0.0), (60.0, 0.0)])];
        let mut b = AssociationSet::new();
        assert!(b.bind(Mmsi(413_000_001), 1));
        let sim = build_similarity_matrix(&a, &v, &b, 640.0, 1, false).unwrap();
        assert_eq!(sim.costs.get(0, 0), f64::NEG_INFINITY);
        assert_eq!(sim.costs.get(0, 1), f64::INFINITY);
        assert_eq!(sim.costs.get(1, 0), f64::INFINITY);
        assert!(sim.costs.get(1, 1).is_finite());
        assert_eq!(sim.evaluated, vec![(Mmsi(413_000_002), 2)]);
    }

    #[test]
    fn count_rules() {
        let p = (Mmsi(413_000_001), 1);
        let c = update_counts(&MatchCounts::new(), &[p], 0, 15);
        assert_eq!(c[&p].z, 1);
        let mut c = MatchCounts::from([(p, MatchCount { z: 7, last_match: 10 })]);
        c = update_counts(&c, &[p], 11, 15);
        assert_eq!(c[&p].z, 8);
        assert!(update_counts(&c, &[], 25, 15).contains_key(&p));
        assert!(!update_counts(&c, &[], 26, 15).contains_key(&p));
    }

    #[test]
    fn promotion_threshold_and_conflicts() {
        let at = |z| MatchCount { z, last_match: 0 };
        let a = Mmsi(413_000_001);
        let b = Mmsi(413_000_002);
        let counts = MatchCounts::from([((a, 1), at(15))]);
        assert!(promote_associations(&counts, &AssociationSet::new(), 15).is_empty());
        let counts = MatchCounts::from([((a, 1), at(16))]);
        assert!(promote_associations(&counts, &AssociationSet::new(), 15).contains(a, 1));

        let counts = MatchCounts::from([((a, 1), at(17)), ((b, 1), at(20))]);
        let p = promote_associations(&counts, &AssociationSet::new(), 15);
        assert!(p.contains(b, 1) && p.len() == 1);
        let counts = MatchCounts::from([((a, 1), at(20)), ((b, 1), at(20))]);
        let p = promote_associations(&counts, &AssociationSet::new(), 15);
        assert!(p.contains(a, 1) && p.len() == 1);
    }

    #[test]
    fn rejected_tick_leaves_state() {
        let mut e = FusionEngine::new(EngineConfig::default()).unwrap();
        e.tick(5, &[], vec![]).unwrap();
        assert!(e.tick(5, &[], vec![]).is_err());
        assert_eq!(e.last_tick(), Some(5));
        let r = crate::Rect::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let d = DetectionBox::new(7, r, 1.0, None).unwrap();
        assert!(e.tick(6, &[], vec![d]).is_err());
        assert_eq!(e.last_tick(), Some(5));
        let rep = e.tick(6, &[], vec![]).unwrap();
        assert!(rep.annotations.is_empty());
    }
}
