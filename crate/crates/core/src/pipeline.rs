//! The per-stream detection pipeline: velocity fill, rules, classifier.

use std::io::BufRead;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierState;
use crate::config::PipelineConfig;
use crate::error::Result;
use crate::event::TrafficEvent;
use crate::ingest::TrajectoryReader;
use crate::rules::{evaluate_frame, RuleEvaluation};
use crate::trajectory::{Frame, LaneMap, VelocityTracker};

/// Everything that carries over between frames of one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorState {
    pub velocity: VelocityTracker,
    pub classifier: ClassifierState,
}

/// One ordered stream's detector. Memory is bounded by the number of live
/// tracks; no frames are retained.
#[derive(Debug, Clone)]
pub struct Detector<'m> {
    lane_map: &'m LaneMap,
    config: PipelineConfig,
    state: DetectorState,
}

impl<'m> Detector<'m> {
    pub fn new(lane_map: &'m LaneMap, config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            lane_map,
            config,
            state: DetectorState {
                velocity: VelocityTracker::new(config.velocity.smoothing)?,
                classifier: ClassifierState::new(),
            },
        })
    }

    /// Resume from a checkpoint taken with [`Detector::state`].
    pub fn resume(lane_map: &'m LaneMap, config: PipelineConfig, state: DetectorState) -> Result<Self> {
        config.validate()?;
        Ok(Self { lane_map, config, state })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn state(&self) -> &DetectorState {
        &self.state
    }

    /// Rule evaluations for a frame, after filling in missing velocities.
    /// Does not advance the classifier.
    pub fn evaluate(&mut self, frame: &mut Frame) -> Vec<RuleEvaluation> {
        self.state.velocity.fill_frame(frame);
        evaluate_frame(frame, self.lane_map, &self.config.rules)
    }

    /// Process one frame; returns events that closed on it.
    pub fn process(&mut self, mut frame: Frame) -> Result<Vec<TrafficEvent>> {
        if let Some(prev) = self.state.classifier.last_frame() {
            if frame.frame_index <= prev {
                return Err(crate::error::OrderingError {
                    context: "detector".into(),
                    previous: prev,
                    index: frame.frame_index,
                }
                .into());
            }
        }
        let evals = self.evaluate(&mut frame);
        let closed = self.state.classifier.step(&frame, &evals, &self.config.classifier)?;
        self.state.velocity.prune(frame.frame_index, self.config.classifier.stale_frames);
        Ok(closed)
    }

    /// Close all open events and return them.
    pub fn finish(self) -> Vec<TrafficEvent> {
        self.state.classifier.finalize()
    }
}

/// Run a whole trajectory stream and return every event in emission order.
pub fn detect_stream<R: BufRead>(
    reader: TrajectoryReader<R>,
    lane_map: &LaneMap,
    config: PipelineConfig,
) -> Result<Vec<TrafficEvent>> {
    let mut detector = Detector::new(lane_map, config)?;
    let mut events = Vec::new();
    for frame in reader {
        events.extend(detector.process(frame?)?);
    }
    events.extend(detector.finish());
    Ok(events)
}

/// Run already-parsed frames; convenient for generated data.
pub fn detect_frames(
    frames: impl IntoIterator<Item = Frame>,
    lane_map: &LaneMap,
    config: PipelineConfig,
) -> Result<Vec<TrafficEvent>> {
    let mut detector = Detector::new(lane_map, config)?;
    let mut events = Vec::new();
    for frame in frames {
        events.extend(detector.process(frame)?);
    }
    events.extend(detector.finish());
    Ok(events)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub frames: usize,
    pub repetitions: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    /// Wall time of the pipeline stage summed over frames, one repetition on average.
    pub total_s: f64,
    pub events: usize,
}

impl LatencyReport {
    /// Build from per-frame samples (all repetitions pooled).
    pub fn from_samples(mut samples: Vec<Duration>, repetitions: usize, events: usize) -> Self {
        samples.sort_unstable();
        let n = samples.len();
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        let pct = |p: f64| -> f64 {
            if n == 0 {
                return 0.0;
            }
            let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
            ms(samples[rank - 1])
        };
        let total: f64 = samples.iter().map(|d| d.as_secs_f64()).sum();
        Self {
            frames: n / repetitions.max(1),
            repetitions,
            mean_ms: if n == 0 { 0.0 } else { total * 1e3 / n as f64 },
            p50_ms: pct(0.5),
            p99_ms: pct(0.99),
            max_ms: samples.last().copied().map_or(0.0, ms),
            total_s: total / repetitions.max(1) as f64,
            events,
        }
    }
}

/// Time the pipeline stage (velocity fill, rules, classifier) per frame.
/// Frame generation or parsing happens outside the timed region.
pub fn time_frames(
    frames: impl IntoIterator<Item = Frame>,
    lane_map: &LaneMap,
    config: PipelineConfig,
    samples: &mut Vec<Duration>,
) -> Result<usize> {
    let mut detector = Detector::new(lane_map, config)?;
    let mut events = 0;
    for frame in frames {
        let start = Instant::now();
        events += detector.process(frame)?.len();
        samples.push(start.elapsed());
    }
    events += detector.finish().len();
    Ok(events)
}
