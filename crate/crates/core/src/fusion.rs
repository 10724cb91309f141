//! Confirmation and multi-camera aggregation of external detector output.
//!
//! The detector itself is not part of this crate. It feeds
//! [`DetectionObservation`]s in, one per detected accident box. Per sensor,
//! observations below `confidence_threshold` are discarded; a frame qualifies
//! when it holds at least one surviving observation, and a camera event is
//! confirmed once `confirm_frames` consecutive frames qualify. Confirmed
//! camera events close in space and time are then clustered into a single
//! `ACCIDENT` event, and finally reconciled with the rule-path events.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, OrderingError, StreamError, StreamErrorKind};
use crate::event::{EventType, TrafficEvent};
use crate::trajectory::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub confidence_threshold: f64,
    pub confirm_frames: u32,
    /// m
    pub merge_radius: f64,
    /// frames
    pub merge_window: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { confidence_threshold: 0.8, confirm_frames: 3, merge_radius: 20.0, merge_window: 50 }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = self.confidence_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(ConfigError::Invalid { field: "fusion.confidence_threshold", expected: "in (0, 1]", value: t });
        }
        if self.confirm_frames < 1 {
            return Err(ConfigError::Invalid { field: "fusion.confirm_frames", expected: ">= 1", value: 0.0 });
        }
        if !(self.merge_radius >= 0.0 && self.merge_radius.is_finite()) {
            return Err(ConfigError::Invalid {
                field: "fusion.merge_radius",
                expected: "non-negative",
                value: self.merge_radius,
            });
        }
        Ok(())
    }
}

/// Axis-aligned image box in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionObservation {
    pub sensor_id: String,
    pub frame_index: u64,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub world_point: Option<Vec2>,
}

impl DetectionObservation {
    pub fn new(
        sensor_id: impl Into<String>,
        frame_index: u64,
        bbox: BoundingBox,
        confidence: f64,
        world_point: Option<Vec2>,
    ) -> Result<Self, String> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(format!("confidence {confidence} outside [0, 1]"));
        }
        if !(bbox.w > 0.0 && bbox.h > 0.0) {
            return Err(format!("box size {}x{} must be positive", bbox.w, bbox.h));
        }
        Ok(Self { sensor_id: sensor_id.into(), frame_index, bbox, confidence, world_point })
    }
}

#[derive(Serialize, Deserialize)]
struct ObservationLine {
    sensor: String,
    frame: u64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    conf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    wx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    wy: Option<f64>,
}

pub fn observation_to_line(obs: &DetectionObservation) -> String {
    let b = obs.bbox;
    serde_json::to_string(&ObservationLine {
        sensor: obs.sensor_id.clone(),
        frame: obs.frame_index,
        bbox: [b.x, b.y, b.w, b.h],
        conf: obs.confidence,
        wx: obs.world_point.map(|p| p.x),
        wy: obs.world_point.map(|p| p.y),
    })
    .expect("observation serializes")
}

pub fn write_observations<'a, W: Write>(
    mut out: W,
    observations: impl IntoIterator<Item = &'a DetectionObservation>,
) -> std::io::Result<()> {
    for o in observations {
        writeln!(out, "{}", observation_to_line(o))?;
    }
    Ok(())
}

/// Read an observation JSONL file (the replay adapter for recorded detector output).
pub fn read_observations<R: BufRead>(reader: R) -> Result<Vec<DetectionObservation>, StreamError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let err = |kind| StreamError { line: i + 1, kind };
        let line = line.map_err(|e| err(StreamErrorKind::Io(e.to_string())))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: ObservationLine =
            serde_json::from_str(&line).map_err(|e| err(StreamErrorKind::Json(e.to_string())))?;
        let [x, y, w, h] = raw.bbox;
        let world_point = match (raw.wx, raw.wy) {
            (Some(x), Some(y)) => Some(Vec2::new(x, y)),
            _ => None,
        };
        let obs = DetectionObservation::new(raw.sensor, raw.frame, BoundingBox { x, y, w, h }, raw.conf, world_point)
            .map_err(|m| err(StreamErrorKind::Observation(m)))?;
        out.push(obs);
    }
    Ok(out)
}

/// A per-camera confirmation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraEvent {
    pub sensor_id: String,
    /// First frame of the confirming run.
    pub start_frame: u64,
    /// Frame at which the run reached `confirm_frames`.
    pub end_frame: u64,
    /// Highest qualifying confidence in the run.
    pub confidence: f64,
    /// Mean world point of the run's observations that carried one.
    pub world_point: Option<Vec2>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct SensorRun {
    last_frame: Option<u64>,
    last_qualifying: Option<u64>,
    run_len: u32,
    run_start: u64,
    confirmed: bool,
    max_confidence: f64,
    point_sum: Vec2,
    point_count: u32,
}

/// Per-sensor confirmation counters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FusionState {
    sensors: BTreeMap<String, SensorRun>,
}

impl FusionState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Current consecutive-frame counter for a sensor.
    pub fn run_length(&self, sensor_id: &str) -> u32 {
        self.sensors.get(sensor_id).map_or(0, |s| s.run_len)
    }

    /// Feed one observation; returns a camera event the moment a run reaches
    /// `confirm_frames`. A run confirms at most once.
    pub fn ingest_observation(
        &mut self,
        obs: &DetectionObservation,
        config: &FusionConfig,
    ) -> Result<Option<CameraEvent>, OrderingError> {
        let run = self.sensors.entry(obs.sensor_id.clone()).or_default();
        if let Some(prev) = run.last_frame {
            if obs.frame_index < prev {
                return Err(OrderingError {
                    context: format!("sensor {}", obs.sensor_id),
                    previous: prev,
                    index: obs.frame_index,
                });
            }
        }
        run.last_frame = Some(obs.frame_index);
        if obs.confidence < config.confidence_threshold {
            return Ok(None);
        }
        let frame = obs.frame_index;
        if run.last_qualifying != Some(frame) {
            let follows = run.last_qualifying.is_some() && frame.checked_sub(1) == run.last_qualifying;
            if follows {
                run.run_len += 1;
            } else {
                *run = SensorRun { last_frame: run.last_frame, run_len: 1, run_start: frame, ..SensorRun::default() };
            }
            run.last_qualifying = Some(frame);
        }
        run.max_confidence = run.max_confidence.max(obs.confidence);
        if let Some(p) = obs.world_point {
            run.point_sum = run.point_sum + p;
            run.point_count += 1;
        }
        if run.run_len >= config.confirm_frames && !run.confirmed {
            run.confirmed = true;
            return Ok(Some(CameraEvent {
                sensor_id: obs.sensor_id.clone(),
                start_frame: run.run_start,
                end_frame: frame,
                confidence: run.max_confidence,
                world_point: (run.point_count > 0).then(|| run.point_sum * (1.0 / run.point_count as f64)),
            }));
        }
        Ok(None)
    }
}

/// Frame spans `[a0, a1]` and `[b0, b1]` overlap once each is widened by `window`.
fn spans_overlap(a: (u64, u64), b: (u64, u64), window: u64) -> bool {
    a.0 <= b.1.saturating_add(window) && b.0 <= a.1.saturating_add(window)
}

fn points_close(a: Option<Vec2>, b: Option<Vec2>, radius: f64) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => a.distance(b) <= radius,
        _ => true,
    }
}

/// Pairwise merge predicate for camera events.
pub fn camera_events_mergeable(a: &CameraEvent, b: &CameraEvent, config: &FusionConfig) -> bool {
    spans_overlap((a.start_frame, a.end_frame), (b.start_frame, b.end_frame), config.merge_window)
        && points_close(a.world_point, b.world_point, config.merge_radius)
}

/// Pairwise merge predicate for events of either path.
pub fn events_mergeable(a: &TrafficEvent, b: &TrafficEvent, config: &FusionConfig) -> bool {
    spans_overlap((a.start, a.end_or_start()), (b.start, b.end_or_start()), config.merge_window)
        && points_close(a.location, b.location, config.merge_radius)
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Cluster camera events by the transitive closure of
/// [`camera_events_mergeable`]; each cluster becomes one `ACCIDENT` event.
/// Output is sorted, so input order does not matter.
pub fn aggregate_cameras(events: &[CameraEvent], config: &FusionConfig) -> Vec<TrafficEvent> {
    let mut uf = UnionFind::new(events.len());
    for i in 0..events.len() {
        for j in i + 1..events.len() {
            if camera_events_mergeable(&events[i], &events[j], config) {
                uf.union(i, j);
            }
        }
    }
    let mut clusters: BTreeMap<usize, Vec<&CameraEvent>> = BTreeMap::new();
    for (i, e) in events.iter().enumerate() {
        let root = uf.find(i);
        clusters.entry(root).or_default().push(e);
    }
    let mut out: Vec<TrafficEvent> = clusters
        .into_values()
        .map(|members| {
            let mut ev = TrafficEvent::new(
                EventType::Accident,
                members.iter().map(|m| m.start_frame).min().expect("non-empty cluster"),
            );
            ev.end = members.iter().map(|m| m.end_frame).max();
            ev.confidence = members.iter().map(|m| m.confidence).fold(0.0, f64::max);
            ev.sensor_ids = members.iter().map(|m| m.sensor_id.clone()).collect();
            let pts: Vec<Vec2> = members.iter().filter_map(|m| m.world_point).collect();
            if !pts.is_empty() {
                // sum in a canonical order so the mean does not depend on input order
                let mut sorted = pts.clone();
                sorted.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
                let sum = sorted.into_iter().fold(Vec2::ZERO, |acc, p| acc + p);
                ev.location = Some(sum * (1.0 / pts.len() as f64));
            }
            ev
        })
        .collect();
    out.sort_by(|a, b| {
        (a.start, a.end, &a.sensor_ids)
            .cmp(&(b.start, b.end, &b.sensor_ids))
            .then(a.confidence.total_cmp(&b.confidence))
    });
    out
}

/// Reconcile rule-path events with learned-path events.
///
/// Rule `ACCIDENT` events are tagged `verified` when some learned event is
/// mergeable with them; matched learned events are absorbed (sensors and
/// confidence). Unmatched learned events are kept with `rule_support=false`.
/// Other event types pass through untouched.
pub fn merge_paths(
    rule_events: &[TrafficEvent],
    learned_events: &[TrafficEvent],
    config: &FusionConfig,
) -> Vec<TrafficEvent> {
    let mut absorbed = vec![false; learned_events.len()];
    let mut out = Vec::with_capacity(rule_events.len() + learned_events.len());
    for rule in rule_events {
        if rule.event_type != EventType::Accident {
            out.push(rule.clone());
            continue;
        }
        let mut merged = rule.clone();
        let mut verified = false;
        for (i, learned) in learned_events.iter().enumerate() {
            if learned.event_type == EventType::Accident && events_mergeable(rule, learned, config) {
                verified = true;
                absorbed[i] = true;
                merged.sensor_ids.extend(learned.sensor_ids.iter().cloned());
                merged.confidence = merged.confidence.max(learned.confidence);
            }
        }
        merged.verified = Some(verified);
        merged.rule_support = Some(true);
        out.push(merged);
    }
    for (learned, taken) in learned_events.iter().zip(absorbed) {
        if !taken {
            let mut e = learned.clone();
            if e.event_type == EventType::Accident {
                e.rule_support = Some(false);
            }
            out.push(e);
        }
    }
    out
}

/// Something that produces accident observations for a frame.
pub trait Detector {
    fn detect(&mut self, frame_index: u64) -> Vec<DetectionObservation>;
}

/// One scripted detection window of a [`ScriptedDetector`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedHit {
    pub sensor_id: String,
    pub frames: std::ops::RangeInclusive<u64>,
    pub confidence: f64,
    pub world_point: Option<Vec2>,
}

/// Test double that fires fixed observations over scripted frame windows.
#[derive(Debug, Clone, Default)]
pub struct ScriptedDetector {
    pub hits: Vec<ScriptedHit>,
}

impl Detector for ScriptedDetector {
    fn detect(&mut self, frame_index: u64) -> Vec<DetectionObservation> {
        self.hits
            .iter()
            .filter(|h| h.frames.contains(&frame_index))
            .map(|h| DetectionObservation {
                sensor_id: h.sensor_id.clone(),
                frame_index,
                bbox: BoundingBox { x: 100.0, y: 100.0, w: 80.0, h: 60.0 },
                confidence: h.confidence,
                world_point: h.world_point,
            })
            .collect()
    }
}

/// Run observations through confirmation and aggregation in one go.
///
/// Observations are grouped per sensor (stable in input order) before
/// ingestion, so different sensors may be interleaved arbitrarily.
pub fn fuse_observations(
    observations: &[DetectionObservation],
    config: &FusionConfig,
) -> Result<Vec<TrafficEvent>, OrderingError> {
    let mut state = FusionState::new();
    let mut camera_events = Vec::new();
    let sensors: BTreeSet<&str> = observations.iter().map(|o| o.sensor_id.as_str()).collect();
    for sensor in sensors {
        for obs in observations.iter().filter(|o| o.sensor_id == sensor) {
            camera_events.extend(state.ingest_observation(obs, config)?);
        }
    }
    Ok(aggregate_cameras(&camera_events, config))
}
