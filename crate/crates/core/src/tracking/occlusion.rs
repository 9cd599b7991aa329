use std::collections::BTreeSet;

use super::{FeatureBank, OcclusionArea, TrackId, VisualTrack};
use crate::ais::AisTrajectory;
use crate::{Error, Rect, Result, Seconds};

/// Largest pairwise intersection over the smallest member area.
pub fn occlusion_ratio(boxes: &[Rect]) -> Result<f64> {
    if boxes.len() < 2 {
        return Err(Error::invalid("occlusion ratio needs at least two boxes"));
    }
    let mut overlap = 0.0f64;
    for (i, a) in boxes.iter().enumerate() {
        for b in &boxes[i + 1..] {
            overlap = overlap.max(a.intersection_area(b));
        }
    }
    let min_area = boxes.iter().map(Rect::area).fold(f64::INFINITY, f64::min);
    if min_area <= 0.0 {
        return Ok(0.0);
    }
    Ok(overlap / min_area)
}

/// Groups boxes linked by pairwise ratios above `omega` and returns each group's enclosing
/// rectangle together with the tracks its boxes belong to.
pub fn detect_occlusion_areas(boxes: &[(Rect, Option<TrackId>)], omega: f64) -> Vec<OcclusionArea> {
    let n = boxes.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            let ratio = occlusion_ratio(&[boxes[i].0, boxes[j].0]).unwrap_or(0.0);
            if ratio > omega {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }

    let mut areas = Vec::new();
    for root in 0..n {
        if find(&mut parent, root) != root {
            continue;
        }
        let members: Vec<usize> = (0..n).filter(|&i| find(&mut parent, i) == root).collect();
        if members.len() < 2 {
            continue;
        }
        let rect = members[1..]
            .iter()
            .fold(boxes[members[0]].0, |acc, &i| acc.union(&boxes[i].0));
        debug_assert!(members.iter().all(|&i| rect.contains(&boxes[i].0)));
        areas.push(OcclusionArea {
            rect,
            member_track_ids: members.iter().filter_map(|&i| boxes[i].1).collect(),
        });
    }
    areas
}

pub fn in_any_area(r: &Rect, oar: &[OcclusionArea]) -> bool {
    let c = r.center();
    oar.iter().any(|a| a.rect.contains_point(c))
}

/// Drops boxes whose center lies inside (or on the border of) any occlusion area.
pub fn remove_boxes_in_areas<B: AsRef<Rect>>(boxes: Vec<B>, oar: &[OcclusionArea]) -> Vec<B> {
    boxes.into_iter().filter(|b| !in_any_area(b.as_ref(), oar)).collect()
}

/// Shifts `last_box` by the pixel displacement of `traj` between `t - 1` and `t`. `None` when
/// either point is missing.
pub fn predict_box_ais(last_box: &Rect, traj: &AisTrajectory, t: Seconds) -> Option<Rect> {
    let now = traj.point_at(t)?;
    let prev = traj.point_at(t - 1)?;
    Some(last_box.translated(now.x - prev.x, now.y - prev.y))
}

/// Shifts the track's box at `t - 1` by its mean anchor motion `(x_{t-1} - x_{t-delta}) / delta`.
/// A history younger than `delta` uses its oldest point and the span to it instead.
pub fn predict_box_visual(track: &VisualTrack, delta: Seconds, t: Seconds) -> Rect {
    let last = track.history.last().expect("tracks always carry history");
    let target = t - delta;
    let old = track
        .history
        .iter()
        .find(|h| h.t >= target)
        .unwrap_or(last);
    let span = (t - old.t).max(1) as f64;
    let (dx, dy) = if old.t == last.t {
        (0.0, 0.0)
    } else {
        ((last.anchor.x - old.anchor.x) / span, (last.anchor.y - old.anchor.y) / span)
    };
    last.rect.translated(dx, dy)
}

/// Keeps banked features of tracks still occluded, banks the current smoothed embedding of
/// tracks entering occlusion and forgets the rest.
pub fn update_feature_bank(bank: &FeatureBank, tracks: &[VisualTrack], occluded: &BTreeSet<TrackId>) -> FeatureBank {
    let mut next = FeatureBank::new();
    for t in tracks.iter().filter(|t| occluded.contains(&t.id)) {
        if let Some(f) = bank.get(&t.id) {
            next.insert(t.id, f.clone());
        } else if let Some(f) = &t.smoothed_embedding {
            next.insert(t.id, f.clone());
        }
    }
    next
}

impl AsRef<Rect> for Rect {
    fn as_ref(&self) -> &Rect {
        self
    }
}

impl AsRef<Rect> for super::DetectionBox {
    fn as_ref(&self) -> &Rect {
        &self.rect
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ais::Mmsi;
    use crate::tracking::{DetectionBox, HistoryPoint, TrackStatus};
    use crate::{ais::AisRecord, GeoPoint, PixelPoint};

    fn r(a: f64, b: f64, c: f64, d: f64) -> Rect {
        Rect::new(a, b, c, d).unwrap()
    }

    fn track_with(points: &[(Seconds, f64, f64)]) -> VisualTrack {
        let history: Vec<HistoryPoint> = points
            .iter()
            .map(|&(t, x, y)| HistoryPoint {
                t,
                anchor: PixelPoint::new(x, y),
                rect: r(x - 10.0, y - 20.0, x + 10.0, y),
                observed: true,
            })
            .collect();
        let last = history.last().unwrap().rect;
        VisualTrack {
            id: 1,
            history,
            last_box: DetectionBox::new(0, last, 1.0, None).unwrap(),
            mean: Default::default(),
            covariance: Default::default(),
            status: TrackStatus::Confirmed,
            hits: 3,
            age: 3,
            time_since_update: 0,
            smoothed_embedding: Some(vec![1.0, 0.0]),
        }
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(occlusion_ratio(&[r(0., 0., 1., 1.), r(5., 5., 6., 6.)]).unwrap(), 0.0);
        // A: 10x10, B: 10x20, overlap 3x10.
        let a = r(0., 0., 10., 10.);
        let b = r(7., 0., 17., 20.);
        assert!((occlusion_ratio(&[a, b]).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(occlusion_ratio(&[r(2., 2., 4., 4.), r(0., 0., 10., 10.)]).unwrap(), 1.0);
        assert!(occlusion_ratio(&[a]).is_err());
    }

    #[test]
    fn areas_from_overlap() {
        let a = (r(0., 0., 10., 10.), Some(1));
        let b = (r(9., 9., 20., 20.), Some(2));
        let areas = detect_occlusion_areas(&[a, b], 0.0);
        assert_eq!(areas.len(), 1);
        assert_eq!(areas[0].rect, r(0., 0., 20., 20.));
        assert_eq!(areas[0].member_track_ids, BTreeSet::from([1, 2]));

        let c = (r(0., 0., 10., 10.), None);
        let d = (r(7., 0., 17., 20.), None);
        assert!(detect_occlusion_areas(&[c, d], 0.5).is_empty());

        let chain = [
            (r(0., 0., 10., 10.), Some(1)),
            (r(8., 0., 18., 10.), Some(2)),
            (r(16., 0., 26., 10.), Some(3)),
            (r(100., 100., 110., 110.), Some(4)),
        ];
        let areas = detect_occlusion_areas(&chain, 0.0);
        assert_eq!(areas.len(), 1);
        assert_eq!(areas[0].rect, r(0., 0., 26., 10.));
        assert_eq!(areas[0].member_track_ids.len(), 3);
    }

    #[test]
    fn touching_boxes_do_not_occlude() {
        let areas = detect_occlusion_areas(&[(r(0., 0., 10., 10.), None), (r(10., 0., 20., 10.), None)], 0.0);
        assert!(areas.is_empty());
    }

    #[test]
    fn removal_uses_center() {
        let oar = vec![OcclusionArea {
            rect: r(0., 0., 100., 100.),
            member_track_ids: BTreeSet::new(),
        }];
        let boxes = vec![r(10., 10., 30., 30.), r(90., 10., 130., 30.), r(200., 0., 210., 10.)];
        assert_eq!(remove_boxes_in_areas(boxes.clone(), &[]), boxes);
        assert_eq!(remove_boxes_in_areas(boxes.clone(), &oar), boxes[1..].to_vec());
    }

    fn traj(points: &[(Seconds, f64, f64)]) -> AisTrajectory {
        let rec = AisRecord {
            mmsi: Mmsi(413_000_001),
            t: 0,
            pos: GeoPoint { lon: 0.0, lat: 0.0 },
            sog: 0.0,
            cog: 0.0,
            heading: Some(0.0),
            synthetic: false,
        };
        AisTrajectory {
            mmsi: rec.mmsi,
            points: points.iter().map(|&(t, x, y)| (t, PixelPoint::new(x, y))).collect(),
            geo_points: Vec::new(),
            synthetic: vec![false; points.len()],
            latest: rec,
        }
    }

    #[test]
    fn ais_shift() {
        let b = r(10., 20., 30., 40.);
        let tr = traj(&[(4, 100.0, 50.0), (5, 103.0, 48.0)]);
        assert_eq!(predict_box_ais(&b, &tr, 5).unwrap(), r(13., 18., 33., 38.));
        let still = traj(&[(4, 100.0, 50.0), (5, 100.0, 50.0)]);
        assert_eq!(predict_box_ais(&b, &still, 5).unwrap(), b);
        assert!(predict_box_ais(&b, &tr, 7).is_none());
    }

    #[test]
    fn visual_shift() {
        let tr = track_with(&[(5, 80.0, 42.0), (6, 85.0, 44.0), (7, 90.0, 46.0), (8, 95.0, 48.0), (9, 100.0, 50.0)]);
        let p = predict_box_visual(&tr, 5, 10);
        let last = tr.history.last().unwrap().rect;
        assert!((p.x_tl - last.x_tl - 4.0).abs() < 1e-12);
        assert!((p.y_tl - last.y_tl - 1.6).abs() < 1e-12);
        assert!((p.width() - last.width()).abs() < 1e-12 && (p.height() - last.height()).abs() < 1e-12);

        let still = track_with(&[(1, 5.0, 5.0), (2, 5.0, 5.0), (3, 5.0, 5.0)]);
        assert_eq!(predict_box_visual(&still, 5, 4), still.history[2].rect);

        // Young track: oldest point at t-2, so the divisor is 2.
        let young = track_with(&[(8, 94.0, 50.0), (9, 100.0, 50.0)]);
        let p = predict_box_visual(&young, 5, 10);
        assert!((p.x_tl - young.history[1].rect.x_tl - 3.0).abs() < 1e-12);
    }

    #[test]
    fn bank_lifecycle() {
        let mut t = track_with(&[(1, 0.0, 0.0)]);
        let occluded = BTreeSet::from([1]);
        let bank = update_feature_bank(&FeatureBank::new(), std::slice::from_ref(&t), &occluded);
        assert_eq!(bank[&1], vec![1.0, 0.0]);
        t.smoothed_embedding = Some(vec![0.0, 1.0]);
        let again = update_feature_bank(&bank, std::slice::from_ref(&t), &occluded);
        assert_eq!(again, bank);
        assert!(update_feature_bank(&again, &[t], &BTreeSet::new()).is_empty());
    }
}
