use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roadwatch_core::evaluation::{
    average_precision, compute_metrics, evaluate, match_events, Interpolation, MatchMode,
};
use roadwatch_core::{EventType, TrafficEvent};

fn ev(start: u64, end: u64, conf: f64, tracks: &[u64]) -> TrafficEvent {
    let mut e = TrafficEvent::new(EventType::Accident, start);
    e.end = Some(end);
    e.confidence = conf;
    e.track_ids = tracks.iter().copied().collect();
    e
}

/// Truth events in disjoint slots of 100 frames; each prediction either
/// jitters around one truth event or sits alone in an empty slot, so it is
/// compatible with at most one truth event.
fn instance(rng: &mut ChaCha8Rng, max: usize) -> (Vec<TrafficEvent>, Vec<TrafficEvent>) {
    let n_truth = rng.random_range(0..=max);
    let truth: Vec<TrafficEvent> = (0..n_truth)
        .map(|i| {
            let s = i as u64 * 100 + rng.random_range(10..30);
            ev(s, s + rng.random_range(5..40), 1.0, &[i as u64 * 10, i as u64 * 10 + 1])
        })
        .collect();
    let n_pred = rng.random_range(0..=max);
    let pred = (0..n_pred)
        .map(|_| {
            let slot = rng.random_range(0..max as u64 + 2);
            let s = slot * 100 + rng.random_range(0..50);
            let tracks: Vec<u64> = match rng.random_range(0..4) {
                0 => vec![],
                1 => vec![999],
                _ => vec![slot * 10 + rng.random_range(0..2)],
            };
            ev(s, s + rng.random_range(0..40), (rng.random_range(1..1000) as f64) / 1000.0, &tracks)
        })
        .collect();
    (pred, truth)
}

fn iou(a: &TrafficEvent, b: &TrafficEvent) -> f64 {
    let (a0, a1, b0, b1) = (a.start as f64, a.end.unwrap() as f64, b.start as f64, b.end.unwrap() as f64);
    let inter = (a1.min(b1) - a0.max(b0) + 1.0).max(0.0);
    inter / ((a1 - a0 + 1.0) + (b1 - b0 + 1.0) - inter)
}

fn compatible(p: &TrafficEvent, t: &TrafficEvent) -> bool {
    let tracks_ok =
        p.track_ids.is_empty() || t.track_ids.is_empty() || p.track_ids.iter().any(|x| t.track_ids.contains(x));
    p.event_type == t.event_type && tracks_ok && iou(p, t) >= 0.1 && iou(p, t) > 0.0
}

/// Maximum one-to-one matching by trying every assignment.
fn exhaustive(pred: &[TrafficEvent], truth: &[TrafficEvent]) -> usize {
    fn go(i: usize, used: &mut Vec<bool>, pred: &[TrafficEvent], truth: &[TrafficEvent]) -> usize {
        if i == pred.len() {
            return 0;
        }
        let mut best = go(i + 1, used, pred, truth);
        for t in 0..truth.len() {
            if !used[t] && compatible(&pred[i], &truth[t]) {
                used[t] = true;
                best = best.max(1 + go(i + 1, used, pred, truth));
                used[t] = false;
            }
        }
        best
    }
    go(0, &mut vec![false; truth.len()], pred, truth)
}

#[test]
fn greedy_matches_exhaustive_assignment() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for _ in 0..2000 {
        let (pred, truth) = instance(&mut rng, 8);
        let m = match_events(&pred, &truth, MatchMode::EventLevel, 0.1);
        let best = exhaustive(&pred, &truth) as u64;
        assert_eq!(m.true_positives, best);
        assert_eq!(m.false_positives, pred.len() as u64 - best);
        assert_eq!(m.false_negatives, truth.len() as u64 - best);
    }
}

#[test]
fn identity_is_perfect() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let (_, truth) = instance(&mut rng, 8);
        let r = evaluate(&truth, &truth, MatchMode::EventLevel, 0.1, Interpolation::AllPoint);
        assert_eq!((r.true_positives, r.false_positives, r.false_negatives), (truth.len() as u64, 0, 0));
    }
}

#[test]
fn table_two_f1() {
    let (_, _, f1) = compute_metrics(1, 0, 1);
    assert!((f1 - 0.667).abs() <= 5e-4);
    let (_, _, f1) = compute_metrics(4, 1, 0);
    assert!((f1 - 0.889).abs() <= 5e-4);
}

proptest! {
    #[test]
    fn ap_invariant_under_monotone_maps(
        scored in proptest::collection::vec((0.0..1.0f64, any::<bool>()), 0..40),
        extra in 0u64..5,
    ) {
        let total = scored.iter().filter(|s| s.1).count() as u64 + extra;
        let base = average_precision(&scored, total, Interpolation::AllPoint);
        for f in [|c: f64| c * c * c + 2.0, |c: f64| (5.0 * c).exp(), |c: f64| c.ln_1p() * 0.5 - 3.0] {
            let mapped: Vec<(f64, bool)> = scored.iter().map(|&(c, t)| (f(c), t)).collect();
            prop_assert!((average_precision(&mapped, total, Interpolation::AllPoint) - base).abs() < 1e-12);
        }
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn metrics_ignore_prediction_order(seed in 0u64..5000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut pred, truth) = instance(&mut rng, 8);
        // coarse confidences force ties that the start-frame tie-break resolves
        for p in &mut pred {
            p.confidence = (p.confidence * 3.0).round() / 3.0;
        }
        // the tie-break is total only over distinct (confidence, start, track) keys
        let mut seen = std::collections::HashSet::new();
        pred.retain(|p| seen.insert((p.confidence.to_bits(), p.start, p.track_ids.first().copied())));
        let a = evaluate(&pred, &truth, MatchMode::EventLevel, 0.1, Interpolation::AllPoint);
        pred.shuffle(&mut rng);
        let b = evaluate(&pred, &truth, MatchMode::EventLevel, 0.1, Interpolation::AllPoint);
        prop_assert_eq!(a, b);
        let fa = evaluate(&pred, &truth, MatchMode::FrameLevel, 0.1, Interpolation::AllPoint);
        pred.reverse();
        let fb = evaluate(&pred, &truth, MatchMode::FrameLevel, 0.1, Interpolation::AllPoint);
        prop_assert_eq!(fa, fb);
    }
}
