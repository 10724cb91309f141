//! Browser bindings for the demo page in `www/`. Each export takes plain
//! numbers or a JSON string and returns JSON, so the page needs no glue
//! beyond what wasm-bindgen generates.

use roadwatch_core::fusion::{BoundingBox, DetectionObservation, FusionState};
use roadwatch_core::pipeline::Detector;
use roadwatch_core::rules::{braking_distance_bound, rule_flags, LeadRelation};
use roadwatch_core::simulator::{Scenario, ScenarioType, Simulation};
use roadwatch_core::{EventType, FusionConfig, PipelineConfig, RuleConfig, TrafficEvent};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

const KMH: f64 = 1.0 / 3.6;

#[derive(Debug, Serialize)]
pub struct PairCheck {
    pub flags: [bool; 6],
    pub accident: bool,
    pub closing_speed: f64,
    /// `None` when not closing.
    pub ttc: Option<f64>,
    /// Rule 5's distance bound in meters.
    pub bound: f64,
}

/// A follower and a single lead in the same lane, speeds in km/h, gap in meters.
pub fn check_pair(follower_kmh: f64, lead_kmh: f64, gap: f64, config: &RuleConfig) -> PairCheck {
    let (v, vl) = (follower_kmh * KMH, lead_kmh * KMH);
    let gap = gap.max(0.0);
    let closing = v - vl;
    let ttc = if closing > 0.0 { gap / closing } else { f64::INFINITY };
    let lead = LeadRelation {
        follower_id: 1,
        lead_id: 2,
        gap,
        follower_speed: v,
        lead_speed: vl,
        closing_speed: closing,
        ttc,
    };
    let flags = rule_flags(v, Some(&lead), v >= vl, config);
    PairCheck {
        flags: flags.0,
        accident: flags.all(),
        closing_speed: closing,
        ttc: ttc.is_finite().then_some(ttc),
        bound: braking_distance_bound(v, vl),
    }
}

#[derive(Debug, Serialize)]
pub struct RuleRegion {
    pub cols: usize,
    pub rows: usize,
    pub max_follower_kmh: f64,
    pub max_gap: f64,
    /// Row-major from gap 0 upward; bit i set when rule i+1 holds.
    pub cells: Vec<u8>,
}

/// Sample the (follower speed, gap) plane for a fixed lead speed.
pub fn rule_region(
    lead_kmh: f64,
    max_follower_kmh: f64,
    max_gap: f64,
    cols: usize,
    rows: usize,
    config: &RuleConfig,
) -> RuleRegion {
    let (cols, rows) = (cols.clamp(1, 400), rows.clamp(1, 400));
    let mut cells = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        let gap = (r as f64 + 0.5) / rows as f64 * max_gap;
        for c in 0..cols {
            let v = (c as f64 + 0.5) / cols as f64 * max_follower_kmh;
            let flags = check_pair(v, lead_kmh, gap, config).flags;
            cells.push(flags.iter().enumerate().fold(0u8, |m, (i, &f)| m | (u8::from(f) << i)));
        }
    }
    RuleRegion { cols, rows, max_follower_kmh, max_gap, cells }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct RearEndInput {
    pub follower_kmh: f64,
    pub lead_kmh: f64,
    pub lead_deceleration: f64,
    pub lead_brake_time: f64,
    pub initial_gap: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for RearEndInput {
    fn default() -> Self {
        Self {
            follower_kmh: 108.0,
            lead_kmh: 90.0,
            lead_deceleration: 6.0,
            lead_brake_time: 1.0,
            initial_gap: 200.0,
            noise_sigma: 0.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct TimelineStep {
    pub t: f64,
    pub follower_speed: f64,
    pub lead_speed: f64,
    pub gap: Option<f64>,
    pub flags: [bool; 6],
}

#[derive(Debug, Serialize)]
pub struct Timeline {
    pub frame_rate: f64,
    pub steps: Vec<TimelineStep>,
    pub trigger_frame: Option<u64>,
    pub events: Vec<TrafficEvent>,
}

/// Run the two-vehicle rear-end scenario through the full pipeline.
pub fn rear_end_timeline(input: &RearEndInput) -> Result<Timeline, String> {
    let mut sc = Scenario::new(ScenarioType::RearEnd, input.seed);
    sc.vehicle_count = 2;
    sc.noise_sigma = input.noise_sigma;
    sc.rear_end.follower_speed = input.follower_kmh * KMH;
    sc.rear_end.lead_speed = input.lead_kmh * KMH;
    sc.rear_end.lead_deceleration = input.lead_deceleration;
    sc.rear_end.lead_brake_time = input.lead_brake_time;
    sc.rear_end.initial_gap = input.initial_gap;
    let sim = Simulation::new(&sc).map_err(|e| e.to_string())?;
    let config = PipelineConfig { rules: sc.rules, classifier: sc.classifier, ..PipelineConfig::default() };
    let mut detector = Detector::new(sim.lane_map(), config).map_err(|e| e.to_string())?;

    let mut steps = Vec::new();
    let mut events = Vec::new();
    for mut frame in sim.frames() {
        let evals = detector.evaluate(&mut frame);
        let speed = |id| evals.iter().find(|e| e.track_id == id).map_or(0.0, |e| e.speed);
        let follower = evals.iter().find(|e| e.track_id == 1);
        steps.push(TimelineStep {
            t: frame.timestamp,
            follower_speed: speed(1),
            lead_speed: speed(2),
            gap: follower.and_then(|e| e.lead.as_ref()).map(|l| l.gap),
            flags: follower.map_or([false; 6], |e| e.flags.0),
        });
        events.extend(detector.process(frame).map_err(|e| e.to_string())?);
    }
    events.extend(detector.finish());
    Ok(Timeline {
        frame_rate: sc.frame_rate,
        steps,
        trigger_frame: sim.ground_truth().first_of(EventType::Accident).map(|e| e.trigger_frame),
        events,
    })
}

#[derive(Debug, Serialize)]
pub struct ConfirmStep {
    pub frame: u64,
    pub confidence: Option<f64>,
    pub qualifies: bool,
    pub run: u32,
    pub confirmed: bool,
}

/// Feed one camera's per-frame confidences (`None` = no detection) through
/// the confirmation state machine.
pub fn confirm_sequence(confidences: &[Option<f64>], config: &FusionConfig) -> Result<Vec<ConfirmStep>, String> {
    let mut state = FusionState::new();
    let mut out = Vec::with_capacity(confidences.len());
    for (frame, &conf) in (0u64..).zip(confidences) {
        let mut confirmed = false;
        if let Some(c) = conf {
            let obs =
                DetectionObservation::new("camera", frame, BoundingBox { x: 0.0, y: 0.0, w: 1.0, h: 1.0 }, c, None)
                    .map_err(|e| format!("frame {frame}: {e}"))?;
            confirmed = state.ingest_observation(&obs, config).map_err(|e| e.to_string())?.is_some();
        }
        let qualifies = conf.is_some_and(|c| c >= config.confidence_threshold);
        out.push(ConfirmStep {
            frame,
            confidence: conf,
            qualifies,
            // the state only notices a broken run at the next qualifying frame
            run: if qualifies { state.run_length("camera") } else { 0 },
            confirmed,
        });
    }
    Ok(out)
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("demo types serialize")
}

#[wasm_bindgen(js_name = checkPair)]
pub fn check_pair_js(follower_kmh: f64, lead_kmh: f64, gap: f64) -> String {
    to_json(&check_pair(follower_kmh, lead_kmh, gap, &RuleConfig::default()))
}

#[wasm_bindgen(js_name = ruleRegion)]
pub fn rule_region_js(lead_kmh: f64, max_follower_kmh: f64, max_gap: f64, cols: usize, rows: usize) -> String {
    to_json(&rule_region(lead_kmh, max_follower_kmh, max_gap, cols, rows, &RuleConfig::default()))
}

#[wasm_bindgen(js_name = rearEndTimeline)]
pub fn rear_end_timeline_js(input_json: &str) -> Result<String, JsError> {
    let input: RearEndInput = serde_json::from_str(input_json)?;
    rear_end_timeline(&input).map(|t| to_json(&t)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = confirmSequence)]
pub fn confirm_sequence_js(confidences_json: &str) -> Result<String, JsError> {
    let confidences: Vec<Option<f64>> = serde_json::from_str(confidences_json)?;
    confirm_sequence(&confidences, &FusionConfig::default()).map(|s| to_json(&s)).map_err(|e| JsError::new(&e))
}
