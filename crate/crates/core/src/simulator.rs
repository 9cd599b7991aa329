//! Seeded synthetic scenes: vessel kinematics, ground-truth boxes, asynchronous AIS reports and
//! imperfect detections with appearance embeddings.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ais::{AisRecord, Mmsi, KNOT_IN_MPS};
use crate::config::{toml_error, CameraConfig};
use crate::geo::{forward_geodetic, inverse_geodetic, mercator, project_to_pixel};
use crate::metrics::GroundTruthRecord;
use crate::tracking::{normalize, occlusion_ratio, DetectionBox};
use crate::{CameraModel, Error, GeoPoint, PixelPoint, Rect, Result, Seconds};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Leg {
    /// Offset from the scenario start, seconds.
    pub t: Seconds,
    /// Knots.
    pub speed: f64,
    /// Degrees clockwise from north.
    pub course: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VesselSpec {
    pub mmsi: u32,
    /// Start position; alternatively give `range` and `bearing` from the camera.
    #[serde(default)]
    pub lon: Option<f64>,
    #[serde(default)]
    pub lat: Option<f64>,
    /// Meters from the camera.
    #[serde(default)]
    pub range: Option<f64>,
    /// Degrees clockwise from north, seen from the camera.
    #[serde(default)]
    pub bearing: Option<f64>,
    pub schedule: Vec<Leg>,
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_beam")]
    pub beam: f64,
    /// Superstructure height above the waterline, meters.
    #[serde(default = "default_air_draft")]
    pub air_draft: f64,
    #[serde(default = "default_true")]
    pub has_ais: bool,
}

fn default_length() -> f64 {
    60.0
}
fn default_beam() -> f64 {
    12.0
}
fn default_air_draft() -> f64 {
    15.0
}
fn default_true() -> bool {
    true
}

impl VesselSpec {
    fn start(&self, cam: &CameraModel) -> Result<GeoPoint> {
        match (self.lon, self.lat, self.range, self.bearing) {
            (Some(lon), Some(lat), None, None) => GeoPoint::new(lon, lat),
            (None, None, Some(range), Some(bearing)) => forward_geodetic(cam.camera_geo, bearing, range),
            _ => Err(Error::Validation(format!(
                "vessel {}: give either lon/lat or range/bearing",
                self.mmsi
            ))),
        }
    }

    fn leg_at(&self, k: Seconds) -> Leg {
        *self.schedule.iter().rev().find(|l| l.t <= k).unwrap_or(&self.schedule[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Inclusive range of AIS inter-report gaps, seconds.
    pub ais_interval: [Seconds; 2],
    pub ais_latency: Seconds,
    pub ais_dropout: f64,
    pub gps_sigma: f64,
    pub box_jitter_sigma: f64,
    pub miss_rate: f64,
    pub embedding_dim: usize,
    pub embedding_noise_sigma: f64,
    pub occlusion_embedding_corruption: f64,
    /// Overlap ratio above which the farther of two vessels goes undetected.
    pub visibility_threshold: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            ais_interval: [2, 10],
            ais_latency: 1,
            ais_dropout: 0.05,
            gps_sigma: 3.0,
            box_jitter_sigma: 1.0,
            miss_rate: 0.02,
            embedding_dim: 128,
            embedding_noise_sigma: 0.02,
            occlusion_embedding_corruption: 0.5,
            visibility_threshold: 0.3,
        }
    }
}

impl NoiseModel {
    /// No noise, no dropout, fixed 1 s reporting.
    pub fn noiseless() -> Self {
        Self {
            ais_interval: [1, 1],
            ais_latency: 0,
            ais_dropout: 0.0,
            gps_sigma: 0.0,
            box_jitter_sigma: 0.0,
            miss_rate: 0.0,
            embedding_noise_sigma: 0.0,
            occlusion_embedding_corruption: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probabilities = [
            ("ais_dropout", self.ais_dropout),
            ("miss_rate", self.miss_rate),
            ("occlusion_embedding_corruption", self.occlusion_embedding_corruption),
        ];
        for (name, p) in probabilities {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Validation(format!("noise.{name} must lie in [0, 1]")));
            }
        }
        let sigmas = [
            ("gps_sigma", self.gps_sigma),
            ("box_jitter_sigma", self.box_jitter_sigma),
            ("embedding_noise_sigma", self.embedding_noise_sigma),
        ];
        for (name, s) in sigmas {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Validation(format!("noise.{name} must be non-negative")));
            }
        }
        let [lo, hi] = self.ais_interval;
        if lo < 1 || hi < lo {
            return Err(Error::Validation("noise.ais_interval must satisfy 1 <= min <= max".into()));
        }
        if self.ais_latency < 0 || self.embedding_dim == 0 || !(self.visibility_threshold > 0.0) {
            return Err(Error::Validation(
                "noise.ais_latency must be non-negative, embedding_dim and visibility_threshold positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Seconds; ticks run over `start_time .. start_time + duration`.
    pub duration: Seconds,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start_time: Seconds,
    #[serde(default)]
    pub camera: CameraConfig,
    #[serde(default)]
    pub noise: NoiseModel,
    pub vessels: Vec<VesselSpec>,
}

fn default_start() -> Seconds {
    1_700_000_000
}

impl Scenario {
    pub fn from_toml_str(text: &str, source_name: &str) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| toml_error(source_name, text, &e))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario always serializes")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.duration <= 0 {
            return Err(Error::Validation("duration must be positive".into()));
        }
        self.noise.validate()?;
        let cam = self.camera.model()?;
        let mut seen = std::collections::BTreeSet::new();
        for v in &self.vessels {
            if v.has_ais && !Mmsi(v.mmsi).is_valid() {
                return Err(Error::Validation(format!("vessel mmsi {} is not a 9-digit MMSI", v.mmsi)));
            }
            if !seen.insert(v.mmsi) {
                return Err(Error::Validation(format!("duplicate vessel mmsi {}", v.mmsi)));
            }
            if v.schedule.is_empty() {
                return Err(Error::Validation(format!("vessel {}: empty schedule", v.mmsi)));
            }
            if v.schedule.windows(2).any(|w| w[1].t <= w[0].t) {
                return Err(Error::Validation(format!("vessel {}: schedule times must increase", v.mmsi)));
            }
            if v.schedule.iter().any(|l| !(l.speed >= 0.0 && l.speed.is_finite() && l.course.is_finite())) {
                return Err(Error::Validation(format!("vessel {}: speeds must be non-negative", v.mmsi)));
            }
            if !(v.length > 0.0 && v.beam > 0.0 && v.air_draft >= 0.0) {
                return Err(Error::Validation(format!("vessel {}: hull dimensions must be positive", v.mmsi)));
            }
            v.start(&cam)?;
        }
        Ok(())
    }

    pub fn ticks(&self) -> impl Iterator<Item = Seconds> {
        self.start_time..self.start_time + self.duration
    }
}

/// State of one vessel at one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct VesselState {
    pub t: Seconds,
    /// Index into [`Scenario::vessels`].
    pub vessel: usize,
    pub pos: GeoPoint,
    pub speed: f64,
    pub course: f64,
    /// Distance from the camera, meters.
    pub range: f64,
    /// `None` when the vessel is out of view.
    pub rect: Option<Rect>,
    /// Largest overlap ratio with a nearer vessel's box.
    pub occlusion: f64,
    pub occluder: Option<usize>,
}

impl VesselState {
    pub fn hidden(&self, noise: &NoiseModel) -> bool {
        self.occlusion > noise.visibility_threshold
    }
}

/// Per-tick, per-vessel truth, indexed `[tick][vessel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub start_time: Seconds,
    pub states: Vec<Vec<VesselState>>,
}

impl GroundTruth {
    pub fn at(&self, t: Seconds) -> Option<&[VesselState]> {
        let k = usize::try_from(t - self.start_time).ok()?;
        self.states.get(k).map(Vec::as_slice)
    }

    /// In-view vessels as evaluation records; track ids are vessel indices plus one.
    pub fn records(&self, scenario: &Scenario) -> Vec<GroundTruthRecord> {
        self.states
            .iter()
            .flatten()
            .filter_map(|s| {
                let v = &scenario.vessels[s.vessel];
                s.rect.map(|rect| GroundTruthRecord {
                    t: s.t,
                    mmsi: v.has_ais.then_some(v.mmsi),
                    track_id: s.vessel as u64 + 1,
                    rect,
                })
            })
            .collect()
    }
}

/// Envelope of the hull's eight corners (waterline and superstructure top), clipped to the
/// image. `None` when a corner is behind the camera or the clipped box is degenerate.
pub fn hull_box(pos: GeoPoint, course: f64, spec: &VesselSpec, cam: &CameraModel) -> Option<Rect> {
    let (hl, hb) = (spec.length / 2.0, spec.beam / 2.0);
    let mut corners = Vec::with_capacity(8);
    for (along, across) in [(hl, hb), (hl, -hb), (-hl, hb), (-hl, -hb)] {
        let dist = along.hypot(across);
        let az = course + across.atan2(along).to_degrees();
        let p = forward_geodetic(pos, az.rem_euclid(360.0), dist).ok()?;
        let (e, n) = mercator(p, cam.mercator_origin).ok()?;
        for elevation in [0.0, spec.air_draft] {
            corners.push(project_to_pixel(cam.world_at(e, n, elevation), cam).ok()?);
        }
    }
    let env = Rect::envelope(&corners)?;
    let (w, h) = (cam.image_width as f64, cam.image_height as f64);
    let clipped = Rect {
        x_tl: env.x_tl.max(0.0),
        y_tl: env.y_tl.max(0.0),
        x_br: env.x_br.min(w),
        y_br: env.y_br.min(h),
    };
    (clipped.width() >= 2.0 && clipped.height() >= 2.0).then_some(clipped)
}

/// Integrates every vessel one second at a time and projects its hull.
pub fn ground_truth(scenario: &Scenario) -> Result<GroundTruth> {
    scenario.validate()?;
    let cam = scenario.camera.model()?;
    let mut positions: Vec<GeoPoint> = scenario
        .vessels
        .iter()
        .map(|v| v.start(&cam))
        .collect::<Result<_>>()?;
    let mut states = Vec::with_capacity(scenario.duration as usize);
    for (k, t) in scenario.ticks().enumerate() {
        let k = k as Seconds;
        let mut tick: Vec<VesselState> = Vec::with_capacity(positions.len());
        for (i, v) in scenario.vessels.iter().enumerate() {
            let leg = v.leg_at(k);
            let pos = positions[i];
            tick.push(VesselState {
                t,
                vessel: i,
                pos,
                speed: leg.speed,
                course: leg.course,
                range: inverse_geodetic(cam.camera_geo, pos)?.distance,
                rect: hull_box(pos, leg.course, v, &cam),
                occlusion: 0.0,
                occluder: None,
            });
            positions[i] = forward_geodetic(pos, leg.course, leg.speed * KNOT_IN_MPS)?;
        }
        for i in 0..tick.len() {
            let Some(ri) = tick[i].rect else { continue };
            for j in 0..tick.len() {
                let Some(rj) = tick[j].rect else { continue };
                if i == j || tick[j].range >= tick[i].range {
                    continue;
                }
                let ratio = occlusion_ratio(&[ri, rj])?;
                if ratio > tick[i].occlusion {
                    tick[i].occlusion = ratio;
                    tick[i].occluder = Some(j);
                }
            }
        }
        states.push(tick);
    }
    Ok(GroundTruth {
        start_time: scenario.start_time,
        states,
    })
}

const STREAM_AIS: u64 = 1;
const STREAM_DETECTIONS: u64 = 2;
const STREAM_APPEARANCE: u64 = 3;

fn rng_for(seed: u64, purpose: u64, vessel: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 32) | vessel as u64);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("sigma is validated").sample(rng)
}

/// AIS reports of all transmitting vessels, sorted by receive time then MMSI. Each report
/// carries the true state at its source time, perturbed by GPS noise, and is stamped with the
/// source time plus latency.
pub fn emit_ais(scenario: &Scenario, gt: &GroundTruth) -> Result<Vec<AisRecord>> {
    let noise = &scenario.noise;
    let [lo, hi] = noise.ais_interval;
    let mut out = Vec::new();
    for (i, v) in scenario.vessels.iter().enumerate() {
        if !v.has_ais {
            continue;
        }
        let mut rng = rng_for(scenario.seed, STREAM_AIS, i);
        let phase: Seconds = rng.random_range(0..lo);
        let mut window_start: Seconds = 0;
        loop {
            let gap: Seconds = rng.random_range(lo..=hi);
            // One report per complete reporting window.
            if window_start + gap > scenario.duration {
                break;
            }
            let source = window_start + phase;
            window_start += gap;
            let dropped = rng.random_bool(noise.ais_dropout);
            let (de, dn) = (gaussian(&mut rng, noise.gps_sigma), gaussian(&mut rng, noise.gps_sigma));
            if dropped {
                continue;
            }
            let state = &gt.states[source as usize][i];
            let offset = de.hypot(dn);
            let pos = if offset > 0.0 {
                forward_geodetic(state.pos, de.atan2(dn).to_degrees().rem_euclid(360.0), offset)?
            } else {
                state.pos
            };
            out.push(AisRecord {
                mmsi: Mmsi(v.mmsi),
                t: gt.start_time + source + noise.ais_latency,
                pos,
                sog: state.speed,
                cog: state.course.rem_euclid(360.0),
                heading: Some(state.course.rem_euclid(360.0)),
                synthetic: false,
            });
        }
    }
    out.sort_by_key(|r| (r.t, r.mmsi));
    Ok(out)
}

/// Per-vessel identity vectors, unit norm.
pub fn identity_embeddings(scenario: &Scenario) -> Vec<Vec<f64>> {
    (0..scenario.vessels.len())
        .map(|i| {
            let mut rng = rng_for(scenario.seed, STREAM_APPEARANCE, i);
            loop {
                let v: Vec<f64> = (0..scenario.noise.embedding_dim)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect();
                if let Some(u) = normalize(&v) {
                    break u;
                }
            }
        })
        .collect()
}

/// Detections per tick: jittered truth boxes, random misses, deterministic misses of vessels
/// hidden behind nearer ones, and noisy identity embeddings pulled toward the occluder while
/// overlapped.
pub fn emit_detections(scenario: &Scenario, gt: &GroundTruth) -> Result<Vec<(Seconds, Vec<DetectionBox>)>> {
    let noise = &scenario.noise;
    let ids = identity_embeddings(scenario);
    let mut rngs: Vec<ChaCha8Rng> = (0..scenario.vessels.len())
        .map(|i| rng_for(scenario.seed, STREAM_DETECTIONS, i))
        .collect();
    let mut frames = Vec::with_capacity(gt.states.len());
    for (t, tick) in scenario.ticks().zip(&gt.states) {
        let mut boxes = Vec::new();
        for s in tick {
            let rng = &mut rngs[s.vessel];
            // Draw every variate each tick so streams stay aligned across visibility changes.
            let missed = rng.random_bool(noise.miss_rate);
            let jitter: [f64; 4] = std::array::from_fn(|_| gaussian(rng, noise.box_jitter_sigma));
            let conf: f64 = rng.random_range(0.6..1.0);
            let emb_noise: Vec<f64> = (0..noise.embedding_dim)
                .map(|_| gaussian(rng, noise.embedding_noise_sigma))
                .collect();
            let Some(rect) = s.rect else { continue };
            if missed || s.hidden(noise) {
                continue;
            }
            let mut r = Rect {
                x_tl: rect.x_tl + jitter[0],
                y_tl: rect.y_tl + jitter[1],
                x_br: rect.x_br + jitter[2],
                y_br: rect.y_br + jitter[3],
            };
            if !r.is_valid() {
                r = rect;
            }
            let blend = s.occluder.map_or(0.0, |_| noise.occlusion_embedding_corruption * s.occlusion.min(1.0));
            let own = &ids[s.vessel];
            let mixed: Vec<f64> = (0..noise.embedding_dim)
                .map(|d| {
                    let toward = s.occluder.map_or(0.0, |o| ids[o][d]);
                    (1.0 - blend) * own[d] + blend * toward + emb_noise[d]
                })
                .collect();
            let embedding = normalize(&mixed).unwrap_or_else(|| own.clone());
            boxes.push(DetectionBox::new(t, r, conf, Some(embedding))?);
        }
        frames.push((t, boxes));
    }
    Ok(frames)
}

/// Everything a scene produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub ground_truth: GroundTruth,
    pub gt_records: Vec<GroundTruthRecord>,
    pub ais: Vec<AisRecord>,
    pub detections: Vec<(Seconds, Vec<DetectionBox>)>,
}

pub fn simulate(scenario: &Scenario) -> Result<SimulationOutput> {
    let gt = ground_truth(scenario)?;
    Ok(SimulationOutput {
        gt_records: gt.records(scenario),
        ais: emit_ais(scenario, &gt)?,
        detections: emit_detections(scenario, &gt)?,
        ground_truth: gt,
    })
}

/// Pixel position of the vessel's reference point (the waterline point under its GPS antenna).
pub fn reference_pixel(state: &VesselState, cam: &CameraModel) -> Result<PixelPoint> {
    crate::geo::geo_to_pixel(state.pos, cam)
}

/// Canonical scenes.
pub mod scenes {
    use super::*;

    fn vessel(mmsi: u32, range: f64, bearing: f64, speed: f64, course: f64) -> VesselSpec {
        VesselSpec {
            mmsi,
            lon: None,
            lat: None,
            range: Some(range),
            bearing: Some(bearing),
            schedule: vec![Leg { t: 0, speed, course }],
            length: default_length(),
            beam: default_beam(),
            air_draft: default_air_draft(),
            has_ais: true,
        }
    }

    fn scenario(name_seed: u64, duration: Seconds, vessels: Vec<VesselSpec>) -> Scenario {
        Scenario {
            duration,
            seed: name_seed,
            start_time: default_start(),
            camera: CameraConfig::default(),
            noise: NoiseModel::default(),
            vessels,
        }
    }

    pub fn single_vessel() -> Scenario {
        scenario(1, 120, vec![vessel(413_000_001, 700.0, -10.0, 6.0, 90.0)])
    }

    /// Two vessels on reciprocal courses; the farther one passes behind the nearer.
    pub fn crossing_pair() -> Scenario {
        scenario(
            2,
            150,
            vec![
                vessel(413_000_001, 600.0, -20.0, 7.0, 90.0),
                vessel(413_000_002, 1000.0, 12.0, 7.0, 270.0),
            ],
        )
    }

    /// A faster vessel overtakes a slower one on a parallel, farther lane.
    pub fn overtaking_pair() -> Scenario {
        scenario(
            3,
            180,
            vec![
                vessel(413_000_001, 650.0, -8.0, 4.0, 90.0),
                vessel(413_000_002, 950.0, -20.0, 10.0, 90.0),
            ],
        )
    }

    /// Five vessels in two crossing encounters, seen from a raised camera so that only vessels
    /// at similar ranges overlap. The last one does not transmit AIS and passes unobstructed.
    pub fn five_vessel_crossing() -> Scenario {
        let mut noa = vessel(999_999_999, 270.0, -26.0, 2.0, 90.0);
        noa.has_ais = false;
        let mut s = scenario(
            4,
            150,
            vec![
                vessel(413_000_001, 520.0, -24.0, 5.0, 90.0),
                vessel(413_000_002, 600.0, 22.0, 5.0, 270.0),
                vessel(413_000_003, 1250.0, 18.0, 7.0, 270.0),
                vessel(413_000_004, 1400.0, -16.0, 7.0, 90.0),
                noa,
            ],
        );
        s.camera.height = 40.0;
        s.camera.pitch = 4.0;
        s
    }

    /// A vessel whose AIS stops for longer than the retention window, then resumes.
    pub fn silent_gap() -> Scenario {
        let mut s = scenario(5, 300, vec![vessel(413_000_001, 700.0, -15.0, 4.0, 90.0)]);
        s.noise.ais_interval = [5, 5];
        s
    }

    pub const NAMES: [&str; 6] = [
        "single-vessel",
        "crossing-pair",
        "overtaking-pair",
        "five-vessel-crossing",
        "silent-gap",
        "ten-vessel",
    ];

    pub fn by_name(name: &str) -> Option<Scenario> {
        Some(match name {
            "single-vessel" => single_vessel(),
            "crossing-pair" => crossing_pair(),
            "overtaking-pair" => overtaking_pair(),
            "five-vessel-crossing" => five_vessel_crossing(),
            "silent-gap" => silent_gap(),
            "ten-vessel" => ten_vessel(),
            _ => return None,
        })
    }

    /// Ten vessels spread over the field of view for load measurements.
    pub fn ten_vessel() -> Scenario {
        let vessels = (0..10)
            .map(|k| {
                let range = 500.0 + 110.0 * k as f64;
                let bearing = -28.0 + 6.0 * k as f64;
                let course = if k % 2 == 0 { 90.0 } else { 270.0 };
                vessel(413_000_001 + k, range, bearing, 3.0 + 0.5 * k as f64, course)
            })
            .collect();
        scenario(6, 240, vessels)
    }
}
