use std::collections::BTreeSet;

use vessel_fusion::ais::{AisRecord, Mmsi};
use vessel_fusion::commands::engine_config_for;
use vessel_fusion::config::EngineConfig;
use vessel_fusion::fusion::{FusionEngine, TickReport};
use vessel_fusion::simulator::{scenes, simulate, NoiseModel, Scenario, SimulationOutput};
use vessel_fusion::tracking::DetectionBox;
use vessel_fusion::Seconds;

fn batch(ais: &[AisRecord], t: Seconds) -> Vec<AisRecord> {
    ais.iter().filter(|r| r.t == t).cloned().collect()
}

fn frame(sim: &SimulationOutput, t: Seconds) -> Vec<DetectionBox> {
    sim.detections
        .iter()
        .find(|(ft, _)| *ft == t)
        .map(|(_, d)| d.clone())
        .unwrap_or_default()
}

fn noiseless_single() -> (Scenario, SimulationOutput) {
    let mut s = scenes::single_vessel();
    s.noise = NoiseModel::noiseless();
    let sim = simulate(&s).unwrap();
    (s, sim)
}

/// Runs the whole scene, returning the reports and the bindings in force before each tick.
fn replay(cfg: EngineConfig, sim: &SimulationOutput, ticks: impl Iterator<Item = Seconds>) -> Vec<(Vec<(Mmsi, u64)>, TickReport)> {
    let mut engine = FusionEngine::new(cfg).unwrap();
    ticks
        .map(|t| {
            let before: Vec<_> = engine.bindings().pairs().collect();
            let rep = engine.tick(t, &batch(&sim.ais, t), frame(sim, t)).unwrap();
            (before, rep)
        })
        .collect()
}

#[test]
fn binds_after_exactly_mat_min_plus_one_matches() {
    let (s, sim) = noiseless_single();
    let mmsi = Mmsi(s.vessels[0].mmsi);
    for mat_min in [0u32, 3, 15] {
        let mut cfg = engine_config_for(&s);
        cfg.mat_min = mat_min;
        let mut engine = FusionEngine::new(cfg).unwrap();
        let mut matched_ticks = 0u32;
        let mut bound_at = None;
        for t in s.ticks() {
            let rep = engine.tick(t, &batch(&sim.ais, t), frame(&sim, t)).unwrap();
            let hit = rep.matched.iter().any(|&(m, _)| m == mmsi);
            if bound_at.is_none() {
                if hit {
                    matched_ticks += 1;
                } else {
                    assert_eq!(matched_ticks, 0, "matching interrupted before binding");
                }
                if engine.bindings().track_of(mmsi).is_some() {
                    bound_at = Some(t);
                } else {
                    assert!(matched_ticks <= mat_min, "count {matched_ticks} exceeded mat_min without binding");
                }
            }
        }
        assert!(bound_at.is_some(), "never bound with mat_min {mat_min}");
        assert_eq!(matched_ticks, mat_min + 1, "mat_min {mat_min}");
    }
}

#[test]
fn bound_pairs_are_never_scored() {
    let mut saw_bound = 0;
    let mut saw_scored = 0;
    for seed in 0..5 {
        let s = scenes::five_vessel_crossing().with_seed(seed);
        let sim = simulate(&s).unwrap();
        for (before, rep) in replay(engine_config_for(&s), &sim, s.ticks()) {
            let rows: BTreeSet<Mmsi> = before.iter().map(|p| p.0).collect();
            let cols: BTreeSet<u64> = before.iter().map(|p| p.1).collect();
            saw_bound += before.len();
            saw_scored += rep.evaluated_pairs.len();
            for (m, tr) in &rep.evaluated_pairs {
                assert!(!rows.contains(m), "bound MMSI {m} scored at {}", rep.t);
                assert!(!cols.contains(tr), "bound track {tr} scored at {}", rep.t);
            }
            for pair in &before {
                // A bound pair that is still visible stays matched through the forced cell.
                if rep.annotations.iter().any(|a| a.track == pair.1) && rep.matched.iter().any(|m| m.0 == pair.0) {
                    assert!(rep.matched.contains(pair));
                }
            }
        }
    }
    assert!(saw_bound > 0 && saw_scored > 0);
}

#[test]
fn unmatched_pair_loses_count_after_t_max() {
    let (s, sim) = noiseless_single();
    let mmsi = Mmsi(s.vessels[0].mmsi);
    for t_max in [5 as Seconds, 15] {
        let mut cfg = engine_config_for(&s);
        cfg.t_max = t_max;
        let mut engine = FusionEngine::new(cfg).unwrap();
        let cut = s.start_time + 40;
        let mut last_match = None;
        for t in s.ticks() {
            let (ais, dets) = if t < cut {
                (batch(&sim.ais, t), frame(&sim, t))
            } else {
                (Vec::new(), Vec::new())
            };
            let rep = engine.tick(t, &ais, dets).unwrap();
            if let Some(&(_, track)) = rep.matched.iter().find(|p| p.0 == mmsi) {
                last_match = Some((t, track));
            }
            let Some((lm, track)) = last_match else { continue };
            if t < cut {
                continue;
            }
            let present = engine.counts().contains_key(&(mmsi, track));
            if t - lm < t_max {
                assert!(present, "count dropped early at {} (last match {lm})", t);
                assert!(engine.bindings().contains(mmsi, track));
            } else {
                assert!(!present, "count kept at {} (last match {lm}, t_max {t_max})", t);
                assert!(engine.bindings().is_empty());
            }
        }
        let (lm, _) = last_match.unwrap();
        assert_eq!(lm, cut - 1);
    }
}

#[test]
fn rejected_tick_leaves_state_untouched() {
    let (s, sim) = noiseless_single();
    let mut engine = FusionEngine::new(engine_config_for(&s)).unwrap();
    let t0 = s.start_time;
    for t in t0..t0 + 20 {
        engine.tick(t, &batch(&sim.ais, t), frame(&sim, t)).unwrap();
    }
    let counts = engine.counts().clone();
    let bindings = engine.bindings().clone();
    assert!(engine.tick(t0 + 19, &[], Vec::new()).is_err());
    let mut late = frame(&sim, t0 + 20);
    late[0].t = t0 + 21;
    assert!(engine.tick(t0 + 20, &[], late).is_err());
    let mut future = batch(&sim.ais, t0 + 20);
    future.push(AisRecord { t: t0 + 25, ..sim.ais[0].clone() });
    assert!(engine.tick(t0 + 20, &future, Vec::new()).is_err());
    assert_eq!(engine.counts(), &counts);
    assert_eq!(engine.bindings(), &bindings);
    assert_eq!(engine.last_tick(), Some(t0 + 19));
}
