//! Command drivers behind the `vfuse` binary, usable directly from tests and other programs.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::ais::AisRecord;
use crate::config::EngineConfig;
use crate::fusion::{FusedAnnotation, FusionEngine};
use crate::io;
use crate::metrics::{evaluate_clip, EvalParams, FusionReport};
use crate::similarity::{dtw_exact, e_fastdtw_detailed, WarpPath};
use crate::simulator::{simulate, Scenario};
use crate::tracking::DetectionBox;
use crate::{Error, PixelSeries, Result, Seconds};

fn create(path: &Path, force: bool) -> Result<BufWriter<File>> {
    if path.exists() && !force {
        return Err(Error::Exists(path.display().to_string()));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

/// Engine configuration matching a scenario's camera and embedding size.
pub fn engine_config_for(scenario: &Scenario) -> EngineConfig {
    EngineConfig {
        camera: scenario.camera.clone(),
        embedding_dim: scenario.noise.embedding_dim,
        seed: scenario.seed,
        ..EngineConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatePaths {
    pub ais: PathBuf,
    pub detections: PathBuf,
    pub ground_truth: PathBuf,
    pub config: PathBuf,
}

impl SimulatePaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            ais: dir.join("ais.csv"),
            detections: dir.join("detections.jsonl"),
            ground_truth: dir.join("gt.csv"),
            config: dir.join("engine.toml"),
        }
    }
}

/// Generates a scene into `out_dir`: AIS CSV, detection JSON lines, ground-truth CSV and a
/// matching engine config. `seed` overrides the scenario's own.
pub fn cmd_simulate(scenario: &Scenario, out_dir: &Path, seed: Option<u64>, force: bool) -> Result<SimulatePaths> {
    let mut scenario = scenario.clone();
    if let Some(s) = seed {
        scenario.seed = s;
    }
    let paths = SimulatePaths::in_dir(out_dir);
    let existing = [&paths.ais, &paths.detections, &paths.ground_truth, &paths.config];
    if !force {
        if let Some(p) = existing.iter().find(|p| p.exists()) {
            return Err(Error::Exists(p.display().to_string()));
        }
    }
    let sim = simulate(&scenario)?;
    io::write_ais_csv(create(&paths.ais, true)?, &sim.ais)?;
    io::write_detections_jsonl(create(&paths.detections, true)?, &sim.detections)?;
    io::write_gt_csv(create(&paths.ground_truth, true)?, &sim.gt_records)?;
    let mut cfg = create(&paths.config, true)?;
    std::io::Write::write_all(&mut cfg, engine_config_for(&scenario).to_toml_string().as_bytes())?;
    Ok(paths)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionRun {
    pub annotations: Vec<FusedAnnotation>,
    /// Wall-clock processing time per tick, in tick order.
    pub tick_times: Vec<(Seconds, Duration)>,
}

impl FusionRun {
    /// Mean and population standard deviation of the per-tick times, seconds.
    pub fn timing(&self) -> (f64, f64) {
        if self.tick_times.is_empty() {
            return (0.0, 0.0);
        }
        let n = self.tick_times.len() as f64;
        let xs = self.tick_times.iter().map(|(_, d)| d.as_secs_f64());
        let mean = xs.clone().sum::<f64>() / n;
        let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }
}

/// Replays sorted inputs one second at a time. Every second from the earliest to the latest
/// input time is a tick; AIS reports are delivered at their own timestamp.
pub fn run_fusion(cfg: &EngineConfig, ais: &[AisRecord], frames: &[(Seconds, Vec<DetectionBox>)]) -> Result<FusionRun> {
    let mut engine = FusionEngine::new(cfg.clone())?;
    let mut run = FusionRun {
        annotations: Vec::new(),
        tick_times: Vec::new(),
    };
    let first = ais.first().map(|r| r.t).into_iter().chain(frames.first().map(|f| f.0)).min();
    let last = ais.last().map(|r| r.t).into_iter().chain(frames.last().map(|f| f.0)).max();
    let (Some(first), Some(last)) = (first, last) else {
        return Ok(run);
    };
    let (mut ai, mut fi) = (0, 0);
    for now in first..=last {
        let start = ai;
        while ai < ais.len() && ais[ai].t <= now {
            ai += 1;
        }
        let dets = if fi < frames.len() && frames[fi].0 == now {
            fi += 1;
            frames[fi - 1].1.clone()
        } else {
            Vec::new()
        };
        let clock = Instant::now();
        let report = engine.tick(now, &ais[start..ai], dets)?;
        run.tick_times.push((now, clock.elapsed()));
        run.annotations.extend(report.annotations);
    }
    Ok(run)
}

/// Reads inputs, fuses, writes annotations to `out` and per-tick timings next to it.
pub fn cmd_fuse(ais_path: &Path, det_path: &Path, cfg: &EngineConfig, out: &Path, force: bool) -> Result<FusionRun> {
    let ais = io::read_ais_csv(open(ais_path)?, &ais_path.display().to_string())?;
    let frames = io::read_detections_jsonl(open(det_path)?, &det_path.display().to_string())?;
    let run = run_fusion(cfg, &ais, &frames)?;
    io::write_annotations_jsonl(create(out, force)?, &run.annotations)?;
    let mut timing = create(&timing_path(out), force)?;
    let (mean, std) = run.timing();
    use std::io::Write;
    writeln!(timing, "ticks,{}\nmean_s,{mean:.6}\nstd_s,{std:.6}\nt,seconds", run.tick_times.len())?;
    for (t, d) in &run.tick_times {
        writeln!(timing, "{t},{:.6}", d.as_secs_f64())?;
    }
    timing.flush()?;
    Ok(run)
}

pub fn timing_path(annotations: &Path) -> PathBuf {
    let mut name = annotations.file_stem().unwrap_or_default().to_os_string();
    name.push(".timing.csv");
    annotations.with_file_name(name)
}

/// Evaluates `(annotations, ground truth)` clips; the clip name is the annotation file stem.
pub fn evaluate_files(clips: &[(PathBuf, PathBuf)], params: EvalParams) -> Result<FusionReport> {
    let mut reports = Vec::with_capacity(clips.len());
    for (ann_path, gt_path) in clips {
        let ann = io::read_annotations_jsonl(open(ann_path)?, &ann_path.display().to_string())?;
        let gts = io::read_gt_csv(open(gt_path)?, &gt_path.display().to_string())?;
        let preds = io::predictions_from_annotations(&ann)?;
        let name = ann_path.file_stem().unwrap_or_default().to_string_lossy();
        reports.push(evaluate_clip(&name, &preds, &gts, params));
    }
    Ok(FusionReport::from_clips(reports))
}

/// Writes `<out>.json` and `<out>.csv`.
pub fn cmd_evaluate(clips: &[(PathBuf, PathBuf)], params: EvalParams, out: &Path, force: bool) -> Result<FusionReport> {
    let report = evaluate_files(clips, params)?;
    io::write_report_json(create(&out.with_extension("json"), force)?, &report)?;
    io::write_report_csv(create(&out.with_extension("csv"), force)?, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DtwOutput {
    pub distance: f64,
    pub phi: f64,
    pub score: f64,
    pub path: WarpPath,
    /// Exact DTW cost when the oracle check ran.
    pub exact: Option<f64>,
}

/// Reads a pixel series from CSV with columns `x,y` and an optional leading `t`.
pub fn read_series(path: &Path) -> Result<PixelSeries> {
    let src = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::parse(&src, 1, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let timed = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["x", "y"] => false,
        ["t", "x", "y"] => true,
        _ => return Err(Error::parse(&src, 1, "expected header x,y or t,x,y")),
    };
    let (mut pts, mut times) = (Vec::new(), Vec::new());
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::parse(&src, line, e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .unwrap_or("")
                .parse()
                .map_err(|_| Error::parse(&src, line, format!("column {} is not a number", i + 1)))
        };
        let off = usize::from(timed);
        if timed {
            times.push(num(0)? as Seconds);
        } else {
            times.push(k as Seconds);
        }
        pts.push(crate::PixelPoint::new(num(off)?, num(off + 1)?));
    }
    PixelSeries::new(pts, times).map_err(|e| Error::parse(&src, 0, e.to_string()))
}

pub fn cmd_dtw(a: &Path, b: &Path, radius: usize, normalize: bool, oracle_check: bool) -> Result<DtwOutput> {
    let x = read_series(a)?;
    let y = read_series(b)?;
    let s = e_fastdtw_detailed(&x, &y, radius, normalize)?;
    let exact = if oracle_check {
        let (cost, path) = dtw_exact(&x, &y)?;
        path.validate(x.len(), y.len()).map_err(Error::Validation)?;
        Some(cost)
    } else {
        None
    };
    Ok(DtwOutput {
        distance: s.distance,
        phi: s.phi,
        score: s.score,
        path: s.path,
        exact,
    })
}
