//! Per-track temporal state turning per-frame rule outcomes into events.
//!
//! * `ACCIDENT` opens once a track's accident flag has held for
//!   `confirm_frames` consecutive frames. The event starts at the first frame
//!   of that run and closes `release_frames` after the last positive frame.
//! * `STANDING_ACTIVE_LANE` / `STANDING_SHOULDER` open once a track has stayed
//!   below `standing_speed` for `standing_duration` seconds, depending on the
//!   lane type it stands on. A shoulder event that lasts `breakdown_duration`
//!   is upgraded in place to `BREAKDOWN`.
//! * Tracks unseen for `stale_frames` are dropped and their events closed.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, OrderingError};
use crate::event::{EventType, TrafficEvent};
use crate::rules::RuleEvaluation;
use crate::trajectory::{Frame, LaneAssignment, LaneType};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub confirm_frames: u32,
    pub release_frames: u64,
    /// m/s
    pub standing_speed: f64,
    /// s
    pub standing_duration: f64,
    /// s
    pub breakdown_duration: f64,
    pub stale_frames: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            confirm_frames: 3,
            release_frames: 25,
            standing_speed: 1.0,
            standing_duration: 5.0,
            breakdown_duration: 120.0,
            stale_frames: 50,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let checks = [
            ("classifier.confirm_frames", self.confirm_frames as f64, 1.0, ">= 1"),
            ("classifier.release_frames", self.release_frames as f64, 1.0, ">= 1"),
            ("classifier.stale_frames", self.stale_frames as f64, 1.0, ">= 1"),
        ];
        for (field, value, min, expected) in checks {
            if value < min {
                return Err(ConfigError::Invalid { field, expected, value });
            }
        }
        for (field, value) in [
            ("classifier.standing_speed", self.standing_speed),
            ("classifier.standing_duration", self.standing_duration),
            ("classifier.breakdown_duration", self.breakdown_duration),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError::Invalid { field, expected: "strictly positive", value });
            }
        }
        Ok(())
    }
}

/// An event being built, with the tallies its confidence is computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OpenEvent {
    event: TrafficEvent,
    positive_frames: u64,
    observed_frames: u64,
    /// `observed_frames` at the most recent positive frame.
    observed_at_last_positive: u64,
}

impl OpenEvent {
    fn close(mut self, end: u64, observed: u64) -> TrafficEvent {
        self.event.end = Some(end.max(self.event.start));
        self.event.confidence =
            if observed == 0 { 0.0 } else { (self.positive_frames as f64 / observed as f64).min(1.0) };
        self.event
    }

    fn close_at_last_positive(self, end: u64) -> TrafficEvent {
        let observed = self.observed_at_last_positive;
        self.close(end, observed)
    }

    fn close_at_stream_end(self, end: u64) -> TrafficEvent {
        let observed = self.observed_frames;
        self.close(end, observed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    pub track_id: u64,
    pub consecutive_accident_frames: u32,
    run_start: u64,
    run_tracks: BTreeSet<u64>,
    run_sensors: BTreeSet<String>,
    run_lane: Option<u32>,
    run_location: Option<crate::trajectory::Vec2>,
    last_positive_frame: Option<u64>,
    /// Frame index and timestamp of the first frame of the current standing stretch.
    pub standing_since: Option<(u64, f64)>,
    pub last_lane: Option<LaneAssignment>,
    pub last_seen_frame: u64,
    accident: Option<OpenEvent>,
    standing: Option<OpenEvent>,
}

impl TrackState {
    fn new(track_id: u64, frame_index: u64) -> Self {
        Self {
            track_id,
            consecutive_accident_frames: 0,
            run_start: frame_index,
            run_tracks: BTreeSet::new(),
            run_sensors: BTreeSet::new(),
            run_lane: None,
            run_location: None,
            last_positive_frame: None,
            standing_since: None,
            last_lane: None,
            last_seen_frame: frame_index,
            accident: None,
            standing: None,
        }
    }
}

/// Classifier state for one ordered stream. Serializable so a stream can be
/// checkpointed between frames and resumed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassifierState {
    tracks: BTreeMap<u64, TrackState>,
    last_frame: Option<u64>,
}

impl ClassifierState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.last_frame
    }

    pub fn track(&self, track_id: u64) -> Option<&TrackState> {
        self.tracks.get(&track_id)
    }

    pub fn track_count(&self) -> usize {
        self.tracks.len()
    }

    /// Snapshot of events that are currently open, ordered by track id.
    pub fn open_events(&self) -> Vec<TrafficEvent> {
        self.tracks.values().flat_map(|t| t.accident.iter().chain(t.standing.iter())).map(|o| o.event.clone()).collect()
    }

    /// Advance by one frame. Returns the events that closed during this frame.
    pub fn step(
        &mut self,
        frame: &Frame,
        rule_evals: &[RuleEvaluation],
        config: &ClassifierConfig,
    ) -> Result<Vec<TrafficEvent>, OrderingError> {
        let idx = frame.frame_index;
        let prev_frame = self.last_frame;
        if let Some(prev) = prev_frame {
            if idx <= prev {
                return Err(OrderingError { context: "classifier".into(), previous: prev, index: idx });
            }
        }
        self.last_frame = Some(idx);
        let mut closed = Vec::new();

        for eval in rule_evals {
            let state = self.tracks.entry(eval.track_id).or_insert_with(|| TrackState::new(eval.track_id, idx));
            state.last_seen_frame = idx;
            state.last_lane = eval.lane;
            update_accident(state, eval, frame, prev_frame, config);
            if let Some(done) = update_standing(state, eval, frame, config) {
                closed.push(done);
            }
        }

        let stale = config.stale_frames;
        let release = config.release_frames;
        self.tracks.retain(|_, state| {
            if let Some(last_pos) = state.last_positive_frame {
                if idx - last_pos >= release {
                    if let Some(open) = state.accident.take() {
                        closed.push(open.close_at_last_positive(last_pos));
                    }
                }
            }
            if idx - state.last_seen_frame >= stale {
                if let Some(open) = state.accident.take() {
                    let end = state.last_positive_frame.unwrap_or(open.event.start);
                    closed.push(open.close_at_last_positive(end));
                }
                if let Some(open) = state.standing.take() {
                    let end = open.event.end_or_start();
                    closed.push(open.close_at_last_positive(end));
                }
                return false;
            }
            true
        });
        Ok(closed)
    }

    /// Close every open event at the last processed frame.
    pub fn finalize(self) -> Vec<TrafficEvent> {
        let Some(last) = self.last_frame else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for state in self.tracks.into_values() {
            if let Some(open) = state.accident {
                out.push(open.close_at_stream_end(last));
            }
            if let Some(open) = state.standing {
                out.push(open.close_at_stream_end(last));
            }
        }
        out
    }
}

fn update_accident(
    state: &mut TrackState,
    eval: &RuleEvaluation,
    frame: &Frame,
    prev_frame: Option<u64>,
    config: &ClassifierConfig,
) {
    let idx = frame.frame_index;
    if !eval.accident {
        state.consecutive_accident_frames = 0;
        if let Some(open) = &mut state.accident {
            open.observed_frames += 1;
        }
        return;
    }
    let continues_run =
        state.consecutive_accident_frames > 0 && prev_frame.is_some() && state.last_positive_frame == prev_frame;
    if continues_run {
        state.consecutive_accident_frames += 1;
    } else {
        state.consecutive_accident_frames = 1;
        state.run_start = idx;
        state.run_tracks.clear();
        state.run_sensors.clear();
        state.run_lane = eval.lane.map(|l| l.lane_id);
        state.run_location = frame.object(eval.track_id).map(|o| o.ground_position());
    }
    state.last_positive_frame = Some(idx);
    state.run_tracks.insert(eval.track_id);
    if let Some(lead) = &eval.lead {
        state.run_tracks.insert(lead.lead_id);
    }
    state.run_sensors.insert(frame.sensor_id.clone());

    match &mut state.accident {
        Some(open) => {
            open.observed_frames += 1;
            open.positive_frames += 1;
            open.observed_at_last_positive = open.observed_frames;
            open.event.end = Some(idx);
            open.event.track_ids.extend(state.run_tracks.iter().copied());
            open.event.sensor_ids.insert(frame.sensor_id.clone());
        }
        None if state.consecutive_accident_frames >= config.confirm_frames => {
            let run = u64::from(state.consecutive_accident_frames);
            let mut event = TrafficEvent::new(EventType::Accident, state.run_start);
            event.end = Some(idx);
            event.track_ids = state.run_tracks.clone();
            event.sensor_ids = state.run_sensors.clone();
            event.lane = state.run_lane;
            event.location = state.run_location;
            state.accident =
                Some(OpenEvent { event, positive_frames: run, observed_frames: run, observed_at_last_positive: run });
        }
        None => {}
    }
}

fn standing_type(lane: Option<&LaneAssignment>, duration: f64, config: &ClassifierConfig) -> EventType {
    match lane.map(|l| l.lane_type) {
        Some(LaneType::Shoulder) if duration >= config.breakdown_duration => EventType::Breakdown,
        Some(LaneType::Shoulder) => EventType::StandingShoulder,
        _ => EventType::StandingActiveLane,
    }
}

fn update_standing(
    state: &mut TrackState,
    eval: &RuleEvaluation,
    frame: &Frame,
    config: &ClassifierConfig,
) -> Option<TrafficEvent> {
    let idx = frame.frame_index;
    let standing = eval.lane.is_some() && eval.speed < config.standing_speed;
    if !standing {
        state.standing_since = None;
        return state.standing.take().map(|open| {
            let end = open.event.end_or_start();
            open.close_at_last_positive(end)
        });
    }
    let (since_frame, since_t) = *state.standing_since.get_or_insert((idx, frame.timestamp));
    let duration = frame.timestamp - since_t;
    match &mut state.standing {
        Some(open) => {
            open.observed_frames += 1;
            open.positive_frames += 1;
            open.observed_at_last_positive = open.observed_frames;
            open.event.end = Some(idx);
            open.event.sensor_ids.insert(frame.sensor_id.clone());
            if open.event.event_type == EventType::StandingShoulder && duration >= config.breakdown_duration {
                open.event.event_type = EventType::Breakdown;
            }
        }
        None if duration >= config.standing_duration => {
            let mut event = TrafficEvent::new(standing_type(eval.lane.as_ref(), duration, config), since_frame);
            event.end = Some(idx);
            event.track_ids.insert(eval.track_id);
            event.sensor_ids.insert(frame.sensor_id.clone());
            event.lane = eval.lane.map(|l| l.lane_id);
            event.location = frame.object(eval.track_id).map(|o| o.ground_position());
            // every frame since `since_frame` was standing
            let span = idx - since_frame + 1;
            state.standing = Some(OpenEvent {
                event,
                positive_frames: span,
                observed_frames: span,
                observed_at_last_positive: span,
            });
        }
        None => {}
    }
    None
}
