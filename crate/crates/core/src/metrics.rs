//! Fusion and tracking evaluation.
//!
//! Fusion metrics work on MMSI labels: a prediction is an MMSI true positive when its box
//! matches a ground-truth box (IoU at or above the threshold) and both carry the same MMSI.
//! Tracking metrics follow the CLEAR-MOT and identity conventions on track ids.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::assignment::{self, CostMatrix};
use crate::geo::Rect;
use crate::{Error, Result, Scalar, Seconds};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Matched `(prediction index, ground-truth index, IoU)` triples for one tick.
pub fn match_predictions<T: Scalar>(preds: &[Rect<T>], gts: &[Rect<T>], iou_threshold: T) -> Vec<(usize, usize, T)> {
    if preds.is_empty() || gts.is_empty() {
        return Vec::new();
    }
    let mut costs = CostMatrix::filled(preds.len(), gts.len(), T::infinity());
    for (i, p) in preds.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            let iou = p.iou(g);
            if iou >= iou_threshold && iou > T::zero() {
                costs.set(i, j, -iou);
            }
        }
    }
    assignment::solve(&costs)
        .expect("IoU cost matrix has no forced cells")
        .into_iter()
        .map(|(i, j)| (i, j, -costs.get(i, j)))
        .collect()
}

/// `1 - (FN + FP) / GT` over MMSI labels.
pub fn mofa<T: Scalar>(fn_count: u64, fp_count: u64, gt: u64) -> Result<T> {
    if gt == 0 {
        return Err(Error::UndefinedMetric("MOFA needs at least one ground-truth label"));
    }
    Ok(T::one() - ratio(fn_count + fp_count, gt))
}

/// `1 - (FP + FN + IDs) / GT`.
pub fn mota<T: Scalar>(fp: u64, fn_count: u64, id_switches: u64, gt: u64) -> Result<T> {
    if gt == 0 {
        return Err(Error::UndefinedMetric("MOTA needs at least one ground-truth box"));
    }
    Ok(T::one() - ratio(fp + fn_count + id_switches, gt))
}

fn ratio<T: Scalar>(num: u64, den: u64) -> T {
    T::lit(num as f64) / T::lit(den as f64)
}

pub fn idp<T: Scalar>(tp: u64, fp: u64) -> Result<T> {
    if tp + fp == 0 {
        return Err(Error::UndefinedMetric("IDP with no predictions"));
    }
    Ok(ratio(tp, tp + fp))
}

pub fn idr<T: Scalar>(tp: u64, fn_count: u64) -> Result<T> {
    if tp + fn_count == 0 {
        return Err(Error::UndefinedMetric("IDR with no ground truth"));
    }
    Ok(ratio(tp, tp + fn_count))
}

pub fn idf1<T: Scalar>(tp: u64, fp: u64, fn_count: u64) -> Result<T> {
    if 2 * tp + fp + fn_count == 0 {
        return Err(Error::UndefinedMetric("IDF1 with no predictions and no ground truth"));
    }
    Ok(ratio(2 * tp, 2 * tp + fp + fn_count))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdScores<T> {
    pub idp: Option<T>,
    pub idr: Option<T>,
    pub idf1: Option<T>,
}

/// Identification precision, recall and F1; each score is `None` when undefined.
pub fn id_scores<T: Scalar>(tp: u64, fp: u64, fn_count: u64) -> IdScores<T> {
    IdScores {
        idp: idp(tp, fp).ok(),
        idr: idr(tp, fn_count).ok(),
        idf1: idf1(tp, fp, fn_count).ok(),
    }
}

pub fn precision<T: Scalar>(tp: u64, fp: u64) -> Result<T> {
    if tp + fp == 0 {
        return Err(Error::UndefinedMetric("precision with no predictions"));
    }
    Ok(ratio(tp, tp + fp))
}

pub fn recall<T: Scalar>(tp: u64, fn_count: u64) -> Result<T> {
    if tp + fn_count == 0 {
        return Err(Error::UndefinedMetric("recall with no ground truth"));
    }
    Ok(ratio(tp, tp + fn_count))
}

pub fn precision_recall<T: Scalar>(tp: u64, fp: u64, fn_count: u64) -> (Option<T>, Option<T>) {
    (precision(tp, fp).ok(), recall(tp, fn_count).ok())
}

/// Mean of per-match distances over all ticks: `sum_t sum_i D / sum_t N`.
pub fn mofp<T: Scalar>(distances_per_tick: &[Vec<T>]) -> Result<T> {
    let n: usize = distances_per_tick.iter().map(Vec::len).sum();
    if n == 0 {
        return Err(Error::UndefinedMetric("MOFP with no matches"));
    }
    let total = distances_per_tick.iter().flatten().fold(T::zero(), |acc, &d| acc + d);
    Ok(total / T::of_usize(n))
}

/// One annotated box produced by the fusion engine.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub t: Seconds,
    pub track_id: u64,
    pub mmsi: Option<u32>,
    pub rect: Rect<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub t: Seconds,
    /// `None` for vessels that do not transmit AIS.
    pub mmsi: Option<u32>,
    pub track_id: u64,
    pub rect: Rect<f64>,
}

/// Raw counters; they add across clips.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub gt_mmsi: u64,
    pub tp_mmsi: u64,
    pub fp_mmsi: u64,
    pub fn_mmsi: u64,
    pub mofp_distance_sum: f64,
    pub mofp_matches: u64,
    pub gt: u64,
    pub tp: u64,
    pub fp: u64,
    pub fn_count: u64,
    pub id_switches: u64,
    pub idtp: u64,
    pub idfp: u64,
    pub idfn: u64,
}

impl std::ops::AddAssign for Counters {
    fn add_assign(&mut self, o: Self) {
        self.gt_mmsi += o.gt_mmsi;
        self.tp_mmsi += o.tp_mmsi;
        self.fp_mmsi += o.fp_mmsi;
        self.fn_mmsi += o.fn_mmsi;
        self.mofp_distance_sum += o.mofp_distance_sum;
        self.mofp_matches += o.mofp_matches;
        self.gt += o.gt;
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_count += o.fn_count;
        self.id_switches += o.id_switches;
        self.idtp += o.idtp;
        self.idfp += o.idfp;
        self.idfn += o.idfn;
    }
}

/// Metric values; `None` marks an undefined metric.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub mofa: Option<f64>,
    pub idp: Option<f64>,
    pub idr: Option<f64>,
    pub idf1: Option<f64>,
    pub mofp: Option<f64>,
    pub mota: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub track_idp: Option<f64>,
    pub track_idr: Option<f64>,
    pub track_idf1: Option<f64>,
}

impl Counters {
    pub fn scores(&self) -> Scores {
        let ids = id_scores::<f64>(self.tp_mmsi, self.fp_mmsi, self.fn_mmsi);
        let track_ids = id_scores::<f64>(self.idtp, self.idfp, self.idfn);
        let (precision, recall) = precision_recall::<f64>(self.tp, self.fp, self.fn_count);
        Scores {
            mofa: mofa(self.fn_mmsi, self.fp_mmsi, self.gt_mmsi).ok(),
            idp: ids.idp,
            idr: ids.idr,
            idf1: ids.idf1,
            mofp: (self.mofp_matches > 0).then(|| self.mofp_distance_sum / self.mofp_matches as f64),
            mota: mota(self.fp, self.fn_count, self.id_switches, self.gt).ok(),
            precision,
            recall,
            track_idp: track_ids.idp,
            track_idr: track_ids.idr,
            track_idf1: track_ids.idf1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipReport {
    pub clip: String,
    pub counters: Counters,
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionReport {
    pub clips: Vec<ClipReport>,
    pub aggregate: ClipReport,
}

impl FusionReport {
    pub fn from_clips(clips: Vec<ClipReport>) -> Self {
        let mut total = Counters::default();
        for c in &clips {
            total += c.counters;
        }
        Self {
            clips,
            aggregate: ClipReport {
                clip: "aggregate".into(),
                counters: total,
                scores: total.scores(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvalParams {
    pub iou_threshold: f64,
    /// Pixel length used to normalise MOFP distances (the image diagonal).
    pub normalizer: f64,
}

/// Evaluates one clip. Inputs need not be sorted.
pub fn evaluate_clip(name: &str, preds: &[Prediction], gts: &[GroundTruthRecord], params: EvalParams) -> ClipReport {
    let mut by_tick: BTreeMap<Seconds, (Vec<&Prediction>, Vec<&GroundTruthRecord>)> = BTreeMap::new();
    for p in preds {
        by_tick.entry(p.t).or_default().0.push(p);
    }
    for g in gts {
        by_tick.entry(g.t).or_default().1.push(g);
    }

    let mut c = Counters::default();
    let mut last_pred_for_gt: BTreeMap<u64, u64> = BTreeMap::new();
    let mut co_occurrence: BTreeMap<(u64, u64), u64> = BTreeMap::new();
    let mut gt_ids = BTreeSet::new();
    let mut pred_ids = BTreeSet::new();

    for (ps, gs) in by_tick.values() {
        let prects: Vec<Rect<f64>> = ps.iter().map(|p| p.rect).collect();
        let grects: Vec<Rect<f64>> = gs.iter().map(|g| g.rect).collect();
        let matches = match_predictions(&prects, &grects, params.iou_threshold);

        c.gt += gs.len() as u64;
        c.tp += matches.len() as u64;
        c.fp += (ps.len() - matches.len()) as u64;
        c.fn_count += (gs.len() - matches.len()) as u64;
        for &(pi, gi, _) in &matches {
            let (p, g) = (ps[pi], gs[gi]);
            if let Some(prev) = last_pred_for_gt.insert(g.track_id, p.track_id) {
                if prev != p.track_id {
                    c.id_switches += 1;
                }
            }
        }

        // Identity co-occurrence uses every pair above the threshold, not only the per-tick
        // assignment.
        for p in ps {
            pred_ids.insert(p.track_id);
            for g in gs {
                if p.rect.iou(&g.rect) >= params.iou_threshold {
                    *co_occurrence.entry((g.track_id, p.track_id)).or_default() += 1;
                }
            }
        }
        for g in gs {
            gt_ids.insert(g.track_id);
        }

        let gt_labelled = gs.iter().filter(|g| g.mmsi.is_some()).count() as u64;
        let pred_labelled = ps.iter().filter(|p| p.mmsi.is_some()).count() as u64;
        let mut tp_mmsi = 0u64;
        for &(pi, gi, _) in &matches {
            let (p, g) = (ps[pi], gs[gi]);
            if g.mmsi.is_some() && p.mmsi == g.mmsi {
                tp_mmsi += 1;
                c.mofp_distance_sum += p.rect.center().distance(&g.rect.center()) / params.normalizer;
                c.mofp_matches += 1;
            }
        }
        c.gt_mmsi += gt_labelled;
        c.tp_mmsi += tp_mmsi;
        c.fp_mmsi += pred_labelled - tp_mmsi;
        c.fn_mmsi += gt_labelled - tp_mmsi;
    }

    // Global one-to-one identity assignment maximising co-occurring matches.
    let gt_list: Vec<u64> = gt_ids.into_iter().collect();
    let pred_list: Vec<u64> = pred_ids.into_iter().collect();
    if !gt_list.is_empty() && !pred_list.is_empty() {
        let mut costs = CostMatrix::filled(gt_list.len(), pred_list.len(), f64::INFINITY);
        for (&(g, p), &n) in &co_occurrence {
            let gi = gt_list.binary_search(&g).expect("known gt id");
            let pi = pred_list.binary_search(&p).expect("known pred id");
            costs.set(gi, pi, -(n as f64));
        }
        let pairs = assignment::solve(&costs).expect("identity cost matrix has no forced cells");
        c.idtp = pairs.iter().map(|&(gi, pi)| -costs.get(gi, pi) as u64).sum();
    }
    c.idfp = preds.len() as u64 - c.idtp;
    c.idfn = gts.len() as u64 - c.idtp;

    ClipReport {
        clip: name.to_string(),
        counters: c,
        scores: c.scores(),
    }
}
