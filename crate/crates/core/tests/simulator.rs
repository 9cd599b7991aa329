use vessel_fusion::ais::{dead_reckon, AisRecord, Mmsi};
use vessel_fusion::commands::{cmd_simulate, engine_config_for, run_fusion};
use vessel_fusion::simulator::{emit_ais, ground_truth, identity_embeddings, scenes, simulate, NoiseModel, Scenario};
use vessel_fusion::Rect;

/// Two fast vessels whose crossing hides the farther one for about four seconds.
fn quick_crossing() -> Scenario {
    let mut s = scenes::crossing_pair();
    s.camera = scenes::five_vessel_crossing().camera;
    s.duration = 90;
    for (v, (range, bearing)) in s.vessels.iter_mut().zip([(500.0, -22.0), (560.0, 22.0)]) {
        v.range = Some(range);
        v.bearing = Some(bearing);
        v.schedule[0].speed = 18.0;
    }
    s
}

#[test]
fn constant_course_matches_chained_dead_reckoning() {
    let mut s = scenes::single_vessel();
    s.noise = NoiseModel::noiseless();
    let gt = ground_truth(&s).unwrap();
    let first = &gt.states[0][0];
    let mut rec = AisRecord {
        mmsi: Mmsi(s.vessels[0].mmsi),
        t: first.t,
        pos: first.pos,
        sog: first.speed,
        cog: first.course,
        heading: Some(first.course),
        synthetic: false,
    };
    for tick in &gt.states[1..] {
        rec = dead_reckon(&rec, rec.t + 1).unwrap();
        assert_eq!(rec.t, tick[0].t);
        assert!((rec.pos.lon - tick[0].pos.lon).abs() < 1e-12);
        assert!((rec.pos.lat - tick[0].pos.lat).abs() < 1e-12);
    }
}

/// Bearing from the camera on a local flat-earth frame; accurate to well under a pixel at
/// these ranges.
fn flat_bearing(range: f64, bearing_deg: f64, speed_mps: f64, course_deg: f64, t: f64) -> f64 {
    let (b, c) = (bearing_deg.to_radians(), course_deg.to_radians());
    let e = range * b.sin() + speed_mps * t * c.sin();
    let n = range * b.cos() + speed_mps * t * c.cos();
    e.atan2(n)
}

#[test]
fn crossing_overlaps_at_the_analytic_crossing_time() {
    let mut s = scenes::crossing_pair();
    s.noise = NoiseModel::noiseless();
    let gt = ground_truth(&s).unwrap();
    let knot = 1852.0 / 3600.0;
    let diff = |t: f64| {
        let [a, b] = [0, 1].map(|i| {
            let v = &s.vessels[i];
            let leg = &v.schedule[0];
            flat_bearing(v.range.unwrap(), v.bearing.unwrap(), leg.speed * knot, leg.course, t)
        });
        a - b
    };
    let (mut lo, mut hi) = (0.0, s.duration as f64);
    assert!(diff(lo) * diff(hi) < 0.0, "vessels do not cross within the scene");
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if diff(lo) * diff(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let k = lo.round() as usize;
    let tick = &gt.states[k];
    let (near, far) = if tick[0].range < tick[1].range { (0, 1) } else { (1, 0) };
    let ratio = tick[far].occlusion;
    assert!(ratio > 0.5, "overlap {ratio} at crossing tick {k}");
    assert_eq!(tick[far].occluder, Some(near));
    assert!(tick[far].hidden(&s.noise));
    assert_eq!(tick[near].occlusion, 0.0);
    let far_boxes_overlap = |k: usize| {
        let t = &gt.states[k];
        t[0].rect.unwrap().intersection_area(&t[1].rect.unwrap()) > 0.0
    };
    assert!(!far_boxes_overlap(0));
    assert!(!far_boxes_overlap(gt.states.len() - 1));
}

#[test]
fn reports_lie_on_the_latency_shifted_truth() {
    let mut s = scenes::five_vessel_crossing();
    s.noise.gps_sigma = 0.0;
    s.noise.ais_latency = 2;
    let gt = ground_truth(&s).unwrap();
    let ais = emit_ais(&s, &gt).unwrap();
    assert!(!ais.is_empty());
    for r in &ais {
        let i = s.vessels.iter().position(|v| v.mmsi == r.mmsi.0).unwrap();
        assert!(s.vessels[i].has_ais);
        let src = gt.at(r.t - 2).unwrap();
        assert_eq!(src[i].pos, r.pos);
        assert_eq!(src[i].speed, r.sog);
    }
}

#[test]
fn detections_correspond_to_visible_truth() {
    let s = scenes::five_vessel_crossing().with_seed(7);
    let sim = simulate(&s).unwrap();
    for ((t, boxes), tick) in sim.detections.iter().zip(&sim.ground_truth.states) {
        for b in boxes {
            assert_eq!(b.t, *t);
            let best = tick
                .iter()
                .filter(|st| !st.hidden(&s.noise))
                .filter_map(|st| st.rect)
                .map(|r| r.iou(&b.rect))
                .fold(0.0, f64::max);
            assert!(best > 0.5, "detection at {t} matches no visible vessel (best IoU {best})");
        }
    }
}

#[test]
fn distinct_identities_are_nearly_orthogonal() {
    let (mut sum, mut n) = (0.0, 0);
    for seed in 0..200 {
        let s = scenes::five_vessel_crossing().with_seed(seed);
        let ids = identity_embeddings(&s);
        for a in 0..ids.len() {
            assert!((ids[a].iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
            for b in a + 1..ids.len() {
                sum += ids[a].iter().zip(&ids[b]).map(|(x, y)| x * y).sum::<f64>();
                n += 1;
            }
        }
    }
    let mean = sum / n as f64;
    assert!(mean.abs() < 0.05, "mean cosine {mean}");
}

#[test]
fn short_occlusions_are_bridged_by_predicted_boxes() {
    let base = quick_crossing();
    let gt = ground_truth(&base).unwrap();
    let hidden = gt.states.iter().filter(|t| t[1].hidden(&base.noise)).count();
    assert!((1..=5).contains(&hidden), "designed occlusion lasts {hidden} s");
    for seed in 0..20 {
        let s = base.clone().with_seed(seed);
        let sim = simulate(&s).unwrap();
        let run = run_fusion(&engine_config_for(&s), &sim.ais, &sim.detections).unwrap();
        for tick in &sim.ground_truth.states {
            for st in tick.iter().filter(|st| st.hidden(&s.noise)) {
                let truth = st.rect.unwrap();
                let best = run
                    .annotations
                    .iter()
                    .filter(|a| a.t == st.t && a.predicted)
                    .map(|a| Rect::new(a.bbox[0], a.bbox[1], a.bbox[2], a.bbox[3]).unwrap().iou(&truth))
                    .fold(0.0, f64::max);
                assert!(best >= 0.5, "seed {seed}, t {}: best predicted IoU {best}", st.t);
            }
        }
    }
}

#[test]
fn identical_seeds_give_identical_files() {
    let s = scenes::five_vessel_crossing();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let pa = cmd_simulate(&s, a.path(), Some(11), false).unwrap();
    let pb = cmd_simulate(&s, b.path(), Some(11), false).unwrap();
    for (x, y) in [(pa.ais, pb.ais), (pa.detections, pb.detections), (pa.ground_truth, pb.ground_truth), (pa.config, pb.config)] {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    let c = tempfile::tempdir().unwrap();
    let pc = cmd_simulate(&s, c.path(), Some(12), false).unwrap();
    assert_ne!(std::fs::read(&pc.ais).unwrap(), std::fs::read(a.path().join("ais.csv")).unwrap());
}

#[test]
fn scenario_library_covers_the_canonical_cases() {
    for name in scenes::NAMES {
        let s = scenes::by_name(name).unwrap();
        s.validate().unwrap();
        let back = Scenario::from_toml_str(&s.to_toml_string(), name).unwrap();
        assert_eq!(back, s);
    }
    let five = scenes::five_vessel_crossing();
    assert_eq!(five.vessels.len(), 5);
    assert_eq!(five.vessels.iter().filter(|v| !v.has_ais).count(), 1);
    let gap = scenes::silent_gap();
    assert!(gap.duration > 120);
    assert!(scenes::by_name("nope").is_none());
}
