//! AIS trajectory extraction: cleaning, dead-reckoning prediction, re-cleaning and a
//! retention-bounded per-vessel store, plus projection of the stored tracks to pixels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geo::{forward_geodetic, geo_to_pixel, inverse_geodetic};
use crate::similarity::PixelSeries;
use crate::{CameraModel, Error, GeoPoint, PixelPoint, Result, Seconds};

pub const KNOT_IN_MPS: f64 = 1852.0 / 3600.0;

/// Maritime Mobile Service Identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Mmsi(pub u32);

impl Mmsi {
    pub fn is_valid(self) -> bool {
        (100_000_000..=999_999_999).contains(&self.0)
    }
}

impl fmt::Display for Mmsi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AisRecord {
    pub mmsi: Mmsi,
    pub t: Seconds,
    pub pos: GeoPoint,
    /// Speed over ground, knots.
    pub sog: f64,
    /// Course over ground, degrees.
    pub cog: f64,
    /// True heading in degrees; `None` when the transponder reports it unavailable.
    pub heading: Option<f64>,
    /// Produced by dead reckoning rather than received.
    pub synthetic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AisConfig {
    /// Supervision radius around the camera, meters.
    pub region_radius: f64,
    /// Retention window and silence limit, seconds.
    pub max_age: Seconds,
    /// Reports at or above this speed are treated as abnormal, knots.
    pub max_sog: f64,
}

impl Default for AisConfig {
    fn default() -> Self {
        Self {
            region_radius: 3704.0,
            max_age: 120,
            max_sog: 50.0,
        }
    }
}

fn angle_ok(a: f64) -> bool {
    a.is_finite() && (0.0..360.0).contains(&a)
}

fn record_is_valid(r: &AisRecord, cfg: &AisConfig) -> bool {
    r.mmsi.is_valid()
        && r.pos.is_valid()
        && r.sog.is_finite()
        && r.sog >= 0.0
        && r.sog < cfg.max_sog
        && angle_ok(r.cog)
        && r.heading.is_some_and(angle_ok)
}

fn in_region(r: &AisRecord, cam: &CameraModel, cfg: &AisConfig) -> bool {
    inverse_geodetic(cam.camera_geo, r.pos).is_ok_and(|inv| inv.distance <= cfg.region_radius)
}

/// Drops invalid, out-of-region, future and duplicate `(mmsi, t)` records. The first record
/// seen for a given `(mmsi, t)` wins; the output keeps input order.
pub fn clean(records: &[AisRecord], cam: &CameraModel, now: Seconds, cfg: &AisConfig) -> Vec<AisRecord> {
    let mut seen = BTreeSet::new();
    records
        .iter()
        .filter(|r| r.t <= now && record_is_valid(r, cfg) && in_region(r, cam, cfg))
        .filter(|r| seen.insert((r.mmsi, r.t)))
        .cloned()
        .collect()
}

/// Extrapolates `last` to `t_target` along its course with distance `sog * dt`.
pub fn dead_reckon(last: &AisRecord, t_target: Seconds) -> Result<AisRecord> {
    let dt = t_target - last.t;
    if dt <= 0 {
        return Err(Error::invalid(format!(
            "dead reckoning needs a later target time ({} -> {t_target})",
            last.t
        )));
    }
    let distance = last.sog * KNOT_IN_MPS * dt as f64;
    let pos = forward_geodetic(last.pos, last.cog, distance)?;
    Ok(AisRecord {
        t: t_target,
        pos,
        synthetic: true,
        ..last.clone()
    })
}

#[derive(Debug, Clone, PartialEq)]
struct VesselHistory {
    /// Strictly increasing in `t`; real and synthetic points.
    points: Vec<AisRecord>,
    last_real: AisRecord,
}

/// Per-vessel AIS history within the retention window.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AisStore {
    vessels: BTreeMap<Mmsi, VesselHistory>,
}

impl AisStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.vessels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vessels.is_empty()
    }

    pub fn contains(&self, mmsi: Mmsi) -> bool {
        self.vessels.contains_key(&mmsi)
    }

    pub fn points(&self, mmsi: Mmsi) -> Option<&[AisRecord]> {
        self.vessels.get(&mmsi).map(|v| v.points.as_slice())
    }

    /// Time of the newest received (non-synthetic) report.
    pub fn last_received(&self, mmsi: Mmsi) -> Option<Seconds> {
        self.vessels.get(&mmsi).map(|v| v.last_real.t)
    }

    pub fn mmsis(&self) -> impl Iterator<Item = Mmsi> + '_ {
        self.vessels.keys().copied()
    }

    /// Appends cleaned `fresh` reports, fills every tick up to `now` with dead-reckoned points,
    /// re-cleans the predictions, prunes points older than the retention window and evicts
    /// vessels silent for longer than it.
    pub fn update(&mut self, fresh: &[AisRecord], now: Seconds, cam: &CameraModel, cfg: &AisConfig) {
        let mut sorted: Vec<&AisRecord> = fresh.iter().collect();
        sorted.sort_by_key(|r| (r.mmsi, r.t));
        for r in sorted {
            match self.vessels.get_mut(&r.mmsi) {
                None => {
                    self.vessels.insert(
                        r.mmsi,
                        VesselHistory {
                            points: vec![r.clone()],
                            last_real: r.clone(),
                        },
                    );
                }
                Some(v) => {
                    if r.t <= v.last_real.t {
                        continue;
                    }
                    // A late report supersedes predictions made at or after its own time.
                    v.points.retain(|p| p.t < r.t);
                    v.points.push(r.clone());
                    v.last_real = r.clone();
                }
            }
        }

        self.vessels.retain(|_, v| now - v.last_real.t <= cfg.max_age);

        for v in self.vessels.values_mut() {
            let from = v.points.last().map_or(v.last_real.t, |p| p.t) + 1;
            for tk in from..=now {
                let Ok(pred) = dead_reckon(&v.last_real, tk) else {
                    continue;
                };
                if record_is_valid(&pred, cfg) && in_region(&pred, cam, cfg) {
                    v.points.push(pred);
                }
            }
            let oldest = now - cfg.max_age;
            v.points.retain(|p| p.t >= oldest);
        }
        self.vessels.retain(|_, v| !v.points.is_empty());
    }

    /// Pixel trajectories of all stored vessels, ordered by MMSI. Points that cannot be
    /// projected are skipped; vessels without any projectable point are omitted.
    pub fn pixel_trajectories(&self, cam: &CameraModel) -> Vec<AisTrajectory> {
        self.vessels
            .iter()
            .filter_map(|(&mmsi, v)| {
                let mut traj = AisTrajectory {
                    mmsi,
                    points: Vec::new(),
                    geo_points: Vec::new(),
                    synthetic: Vec::new(),
                    latest: v.points.last().cloned().unwrap_or_else(|| v.last_real.clone()),
                };
                for p in &v.points {
                    if let Ok(px) = geo_to_pixel(p.pos, cam) {
                        traj.points.push((p.t, px));
                        traj.geo_points.push((p.t, p.pos));
                        traj.synthetic.push(p.synthetic);
                    }
                }
                (!traj.points.is_empty()).then_some(traj)
            })
            .collect()
    }
}

/// Functional form of [`AisStore::update`].
pub fn update_store(mut store: AisStore, fresh: &[AisRecord], now: Seconds, cam: &CameraModel, cfg: &AisConfig) -> AisStore {
    store.update(fresh, now, cam, cfg);
    store
}

/// Functional form of [`AisStore::pixel_trajectories`].
pub fn pixel_trajectories(store: &AisStore, cam: &CameraModel) -> Vec<AisTrajectory> {
    store.pixel_trajectories(cam)
}

/// One vessel's pixel-projected AIS trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct AisTrajectory {
    pub mmsi: Mmsi,
    pub points: Vec<(Seconds, PixelPoint)>,
    pub geo_points: Vec<(Seconds, GeoPoint)>,
    /// Parallel to `points`: whether the point was dead-reckoned.
    pub synthetic: Vec<bool>,
    /// Newest stored record (real or synthetic), used for annotation snapshots.
    pub latest: AisRecord,
}

impl AisTrajectory {
    pub fn point_at(&self, t: Seconds) -> Option<PixelPoint> {
        self.points
            .binary_search_by_key(&t, |p| p.0)
            .ok()
            .map(|i| self.points[i].1)
    }

    pub fn last_point(&self) -> PixelPoint {
        self.points[self.points.len() - 1].1
    }

    pub fn series(&self) -> PixelSeries {
        PixelSeries::new(
            self.points.iter().map(|p| p.1).collect(),
            self.points.iter().map(|p| p.0).collect(),
        )
        .expect("trajectory points are non-empty and time-ordered")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::CameraModel as Cam;

    fn cam() -> CameraModel {
        let geo = GeoPoint { lon: 114.3, lat: 30.6 };
        Cam::from_pose(geo, 20.0, 0.0, 2.0, (1000.0, 1000.0), (640.0, 360.0), 1280, 720)
    }

    fn rec(mmsi: u32, t: Seconds, pos: GeoPoint, sog: f64, cog: f64) -> AisRecord {
        AisRecord {
            mmsi: Mmsi(mmsi),
            t,
            pos,
            sog,
            cog,
            heading: Some(cog),
            synthetic: false,
        }
    }

    fn ahead(m: f64) -> GeoPoint {
        forward_geodetic(cam().camera_geo, 0.0, m).unwrap()
    }

    #[test]
    fn negative_speed_removed() {
        let r = rec(413_000_001, 0, ahead(500.0), -1.0, 10.0);
        assert!(clean(&[r], &cam(), 0, &AisConfig::default()).is_empty());
    }

    #[test]
    fn invalid_fields_removed() {
        let cfg = AisConfig::default();
        let good = rec(413_000_001, 0, ahead(500.0), 5.0, 10.0);
        let mut bad_mmsi = good.clone();
        bad_mmsi.mmsi = Mmsi(12345);
        let mut no_heading = good.clone();
        no_heading.heading = None;
        let mut bad_cog = good.clone();
        bad_cog.cog = 360.0;
        let mut fast = good.clone();
        fast.sog = 50.0;
        let mut future = good.clone();
        future.t = 5;
        let out = clean(&[bad_mmsi, no_heading, bad_cog, fast, future, good.clone()], &cam(), 0, &cfg);
        assert_eq!(out, vec![good]);
    }

    #[test]
    fn region_boundary() {
        let cfg = AisConfig::default();
        let inside = rec(413_000_001, 0, ahead(3703.0), 5.0, 10.0);
        let outside = rec(413_000_002, 0, ahead(3705.0), 5.0, 10.0);
        let out = clean(&[inside.clone(), outside], &cam(), 0, &cfg);
        assert_eq!(out, vec![inside]);
    }

    #[test]
    fn duplicates_first_wins() {
        let a = rec(413_000_001, 3, ahead(500.0), 5.0, 10.0);
        let mut b = a.clone();
        b.sog = 6.0;
        let out = clean(&[a.clone(), b], &cam(), 3, &AisConfig::default());
        assert_eq!(out, vec![a]);
    }

    #[test]
    fn clean_is_idempotent() {
        let recs: Vec<AisRecord> = (0..20)
            .map(|k| rec(413_000_000 + k % 4, (k % 5) as Seconds, ahead(300.0 * k as f64), k as f64 * 3.0, 10.0))
            .collect();
        let once = clean(&recs, &cam(), 10, &AisConfig::default());
        let twice = clean(&once, &cam(), 10, &AisConfig::default());
        assert_eq!(once, twice);
    }

    #[test]
    fn dead_reckon_zero_speed() {
        let r = rec(413_000_001, 0, ahead(500.0), 0.0, 10.0);
        let p = dead_reckon(&r, 10).unwrap();
        assert_eq!(p.pos, r.pos);
        assert!(p.synthetic);
    }

    #[test]
    fn dead_reckon_substitution() {
        let r = rec(413_000_001, 0, ahead(500.0), 10.0, 90.0);
        let p = dead_reckon(&r, 10).unwrap();
        let expected = forward_geodetic(r.pos, 90.0, 10.0 * KNOT_IN_MPS * 10.0).unwrap();
        assert_eq!(p.pos, expected);
        assert!((10.0 * KNOT_IN_MPS * 10.0 - 51.444).abs() < 1e-3);
        assert_eq!((p.sog, p.cog, p.heading), (r.sog, r.cog, r.heading));
    }

    #[test]
    fn dead_reckon_rejects_non_positive_dt() {
        let r = rec(413_000_001, 5, ahead(500.0), 10.0, 90.0);
        assert!(dead_reckon(&r, 5).is_err());
        assert!(dead_reckon(&r, 4).is_err());
    }

    #[test]
    fn chained_prediction_matches_single_step() {
        let r = rec(413_000_001, 0, ahead(500.0), 12.0, 63.0);
        let mut chained = r.clone();
        for k in 1..=10 {
            let mut next = dead_reckon(&chained, k).unwrap();
            next.synthetic = false;
            chained = next;
        }
        let single = dead_reckon(&r, 10).unwrap();
        let gap = inverse_geodetic(chained.pos, single.pos).unwrap().distance;
        assert!(gap < 0.5, "gap {gap}");
    }

    #[test]
    fn store_fills_every_tick_and_evicts_silent_vessels() {
        let cfg = AisConfig::default();
        let cam = cam();
        let mut store = AisStore::new();
        store.update(&[rec(413_000_001, 0, ahead(800.0), 5.0, 90.0)], 0, &cam, &cfg);
        for now in 1..=120 {
            store.update(&[], now, &cam, &cfg);
            let pts = store.points(Mmsi(413_000_001)).unwrap();
            assert_eq!(pts.last().unwrap().t, now);
            assert!(pts.windows(2).all(|w| w[1].t == w[0].t + 1));
            assert!(pts.last().unwrap().t - pts[0].t <= cfg.max_age);
        }
        store.update(&[], 121, &cam, &cfg);
        assert!(store.is_empty());
    }

    #[test]
    fn reported_vessel_gets_no_synthetic_point() {
        let cfg = AisConfig::default();
        let cam = cam();
        let mut store = AisStore::new();
        store.update(&[rec(413_000_001, 0, ahead(800.0), 5.0, 90.0)], 0, &cam, &cfg);
        store.update(&[rec(413_000_001, 1, ahead(801.0), 5.0, 90.0)], 1, &cam, &cfg);
        let pts = store.points(Mmsi(413_000_001)).unwrap();
        assert_eq!(pts.len(), 2);
        assert!(pts.iter().all(|p| !p.synthetic));
    }

    #[test]
    fn late_report_replaces_predictions() {
        let cfg = AisConfig::default();
        let cam = cam();
        let mut store = AisStore::new();
        store.update(&[rec(413_000_001, 0, ahead(800.0), 5.0, 90.0)], 0, &cam, &cfg);
        for now in 1..=5 {
            store.update(&[], now, &cam, &cfg);
        }
        store.update(&[rec(413_000_001, 3, ahead(810.0), 5.0, 90.0)], 6, &cam, &cfg);
        let pts = store.points(Mmsi(413_000_001)).unwrap();
        let times: Vec<Seconds> = pts.iter().map(|p| p.t).collect();
        assert_eq!(times, vec![0, 1, 2, 3, 4, 5, 6]);
        assert!(!pts[3].synthetic && pts[4].synthetic);
    }

    #[test]
    fn predictions_leaving_region_are_dropped() {
        let cfg = AisConfig::default();
        let cam = cam();
        let mut store = AisStore::new();
        // 40 kn east from 3690 m out leaves the 3704 m disc within a couple of seconds.
        store.update(&[rec(413_000_001, 0, ahead(3690.0), 40.0, 0.0)], 0, &cam, &cfg);
        for now in 1..=5 {
            store.update(&[], now, &cam, &cfg);
        }
        let pts = store.points(Mmsi(413_000_001)).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(!pts[0].synthetic);
    }

    #[test]
    fn pixel_trajectories_project_points() {
        let cfg = AisConfig::default();
        let cam = cam();
        assert!(AisStore::new().pixel_trajectories(&cam).is_empty());
        let mut store = AisStore::new();
        for t in 0..5 {
            store.update(&[rec(413_000_001, t, ahead(800.0 + t as f64), 0.1, 0.0)], t, &cam, &cfg);
        }
        let trajs = store.pixel_trajectories(&cam);
        assert_eq!(trajs.len(), 1);
        assert_eq!(trajs[0].points.len(), 5);
        assert_eq!(trajs[0].series().len(), 5);
    }

    #[test]
    fn behind_camera_points_skipped() {
        let cfg = AisConfig::default();
        let cam = cam();
        let behind = forward_geodetic(cam.camera_geo, 180.0, 500.0).unwrap();
        let mut store = AisStore::new();
        store.update(&[rec(413_000_001, 0, behind, 0.0, 0.0)], 0, &cam, &cfg);
        assert_eq!(store.len(), 1);
        assert!(store.pixel_trajectories(&cam).is_empty());
    }
}
