//! Precision, recall, F1 and average precision of predicted events against truth.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::event::{EventType, TrafficEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    FrameLevel,
    #[default]
    EventLevel,
}

impl std::str::FromStr for MatchMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "frame" | "frame_level" => Ok(MatchMode::FrameLevel),
            "event" | "event_level" => Ok(MatchMode::EventLevel),
            _ => Err(format!("unknown matching mode {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    AllPoint,
    ElevenPoint,
}

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.1;

/// Output of matching: counts plus the ranked predictions for AP.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchOutcome {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    /// (confidence, is true positive) in ranking order.
    pub scored: Vec<(f64, bool)>,
    /// Positives in the truth (events or frames).
    pub total_truth: u64,
    /// (prediction index, truth index); event-level only.
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mode: MatchMode,
    pub interpolation: Interpolation,
    pub iou_threshold: f64,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub average_precision: f64,
}

/// Temporal intersection-over-union of two inclusive frame spans.
pub fn temporal_iou(a: &TrafficEvent, b: &TrafficEvent) -> f64 {
    let (a0, a1) = (a.start, a.end_or_start());
    let (b0, b1) = (b.start, b.end_or_start());
    let lo = a0.max(b0);
    let hi = a1.min(b1);
    if hi < lo {
        return 0.0;
    }
    let inter = (hi - lo + 1) as f64;
    let union = (a1 - a0 + 1 + b1 - b0 + 1) as f64 - inter;
    inter / union
}

/// Whether `pred` may be matched to `truth` at all.
pub fn compatible(pred: &TrafficEvent, truth: &TrafficEvent, threshold: f64) -> bool {
    if pred.event_type != truth.event_type {
        return false;
    }
    if !pred.track_ids.is_empty() && !truth.track_ids.is_empty() && pred.track_ids.is_disjoint(&truth.track_ids) {
        return false;
    }
    let iou = temporal_iou(pred, truth);
    iou > 0.0 && iou >= threshold
}

/// Descending confidence, then earlier start, then lower first track id, then input order.
pub fn ranking_order(events: &[TrafficEvent]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&events[i], &events[j]);
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.start.cmp(&b.start))
            .then(a.track_ids.first().cmp(&b.track_ids.first()))
            .then(i.cmp(&j))
    });
    order
}

fn match_event_level(predicted: &[TrafficEvent], truth: &[TrafficEvent], threshold: f64) -> MatchOutcome {
    let mut taken = vec![false; truth.len()];
    let mut out = MatchOutcome { total_truth: truth.len() as u64, ..Default::default() };
    for p in ranking_order(predicted) {
        let best = truth
            .iter()
            .enumerate()
            .filter(|(t, ev)| !taken[*t] && compatible(&predicted[p], ev, threshold))
            .map(|(t, ev)| (t, temporal_iou(&predicted[p], ev)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        match best {
            Some((t, _)) => {
                taken[t] = true;
                out.true_positives += 1;
                out.pairs.push((p, t));
                out.scored.push((predicted[p].confidence, true));
            }
            None => {
                out.false_positives += 1;
                out.scored.push((predicted[p].confidence, false));
            }
        }
    }
    out.false_negatives = taken.iter().filter(|t| !**t).count() as u64;
    out
}

fn accident_frames(events: &[TrafficEvent]) -> BTreeSet<u64> {
    events.iter().filter(|e| e.event_type == EventType::Accident).flat_map(|e| e.start..=e.end_or_start()).collect()
}

fn match_frame_level(predicted: &[TrafficEvent], truth: &[TrafficEvent]) -> MatchOutcome {
    let truth_frames = accident_frames(truth);
    let mut best: std::collections::BTreeMap<u64, f64> = Default::default();
    for e in predicted.iter().filter(|e| e.event_type == EventType::Accident) {
        for f in e.start..=e.end_or_start() {
            let c = best.entry(f).or_insert(f64::NEG_INFINITY);
            *c = c.max(e.confidence);
        }
    }
    let mut out = MatchOutcome { total_truth: truth_frames.len() as u64, ..Default::default() };
    for (&frame, &conf) in &best {
        let hit = truth_frames.contains(&frame);
        if hit {
            out.true_positives += 1;
        } else {
            out.false_positives += 1;
        }
        out.scored.push((conf, hit));
    }
    out.false_negatives = truth_frames.iter().filter(|f| !best.contains_key(f)).count() as u64;
    // stable, so equal confidences stay in frame order
    out.scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    out
}

/// Match predictions to truth. `threshold` is the minimum temporal IoU
/// (event level); frame level labels each frame by ACCIDENT coverage.
pub fn match_events(
    predicted: &[TrafficEvent],
    truth: &[TrafficEvent],
    mode: MatchMode,
    threshold: f64,
) -> MatchOutcome {
    match mode {
        MatchMode::EventLevel => match_event_level(predicted, truth, threshold),
        MatchMode::FrameLevel => match_frame_level(predicted, truth),
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// (precision, recall, f1); each is 0 when its denominator is 0.
pub fn compute_metrics(tp: u64, fp: u64, fn_: u64) -> (f64, f64, f64) {
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    (p, r, f1_score(p, r))
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Average precision of ranked predictions. Ties in confidence keep input order.
pub fn average_precision(scored: &[(f64, bool)], total_truth: u64, interpolation: Interpolation) -> f64 {
    if total_truth == 0 || scored.is_empty() {
        return 0.0;
    }
    let mut ranked = scored.to_vec();
    ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
    let mut tp = 0u64;
    let mut points = Vec::with_capacity(ranked.len());
    for (k, &(_, hit)) in ranked.iter().enumerate() {
        tp += u64::from(hit);
        points.push((tp as f64 / total_truth as f64, tp as f64 / (k + 1) as f64));
    }
    // precision envelope from the right
    for k in (0..points.len().saturating_sub(1)).rev() {
        points[k].1 = points[k].1.max(points[k + 1].1);
    }
    match interpolation {
        Interpolation::AllPoint => {
            let mut prev_recall = 0.0;
            let mut ap = 0.0;
            for &(recall, precision) in &points {
                ap += (recall - prev_recall) * precision;
                prev_recall = recall;
            }
            ap
        }
        Interpolation::ElevenPoint => {
            (0..=10)
                .map(|i| {
                    let r = i as f64 / 10.0;
                    points.iter().filter(|p| p.0 >= r - 1e-12).map(|p| p.1).fold(0.0, f64::max)
                })
                .sum::<f64>()
                / 11.0
        }
    }
}

/// Match, count and score in one call.
pub fn evaluate(
    predicted: &[TrafficEvent],
    truth: &[TrafficEvent],
    mode: MatchMode,
    threshold: f64,
    interpolation: Interpolation,
) -> MetricReport {
    let m = match_events(predicted, truth, mode, threshold);
    let (precision, recall, f1) = compute_metrics(m.true_positives, m.false_positives, m.false_negatives);
    MetricReport {
        mode,
        interpolation,
        iou_threshold: threshold,
        true_positives: m.true_positives,
        false_positives: m.false_positives,
        false_negatives: m.false_negatives,
        precision,
        recall,
        f1,
        average_precision: average_precision(&m.scored, m.total_truth, interpolation),
    }
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mode = match self.mode {
            MatchMode::FrameLevel => "frame-level",
            MatchMode::EventLevel => "event-level",
        };
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10} {:>5} {:>5} {:>5} {:>9} {:>9} {:>9} {:>9}",
            "mode", "TP", "FP", "FN", "precision", "recall", "F1", "AP"
        );
        let _ = writeln!(
            s,
            "{:<10} {:>5} {:>5} {:>5} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
            mode,
            self.true_positives,
            self.false_positives,
            self.false_negatives,
            self.precision,
            self.recall,
            self.f1,
            self.average_precision
        );
        s
    }
}
