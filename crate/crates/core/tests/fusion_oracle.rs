use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roadwatch_core::fusion::{
    aggregate_cameras, camera_events_mergeable, fuse_observations, merge_paths, BoundingBox, CameraEvent,
    DetectionObservation, Detector, FusionState, ScriptedDetector, ScriptedHit,
};
use roadwatch_core::{EventType, FusionConfig, TrafficEvent, Vec2};

fn obs(sensor: &str, frame: u64, conf: f64) -> DetectionObservation {
    DetectionObservation::new(sensor, frame, BoundingBox { x: 0.0, y: 0.0, w: 5.0, h: 5.0 }, conf, None).unwrap()
}

/// Frames at which a run of qualifying frames reaches three, by rescanning
/// the whole history at every frame.
fn linear_scan(stream: &[(u64, f64)]) -> Vec<u64> {
    let qualifying: BTreeSet<u64> = stream.iter().filter(|o| o.1 >= 0.8).map(|o| o.0).collect();
    let mut out = Vec::new();
    for &f in &qualifying {
        // length of the run of consecutive qualifying frames ending at f
        let mut len = 0;
        while len <= f && qualifying.contains(&(f - len)) {
            len += 1;
        }
        if len == 3 {
            out.push(f);
        }
    }
    out
}

fn random_stream(rng: &mut ChaCha8Rng) -> Vec<(u64, f64)> {
    let mut frame = rng.random_range(0..5);
    let mut out = Vec::new();
    for _ in 0..rng.random_range(0..40) {
        let conf = match rng.random_range(0..4) {
            0 => rng.random_range(0.0..0.8),
            1 => 0.8,
            _ => rng.random_range(0.8..=1.0),
        };
        out.push((frame, conf));
        // mostly consecutive, sometimes repeated or skipping
        frame += match rng.random_range(0..10) {
            0 => 0,
            1 => rng.random_range(2..5),
            _ => 1,
        };
    }
    out
}

#[test]
fn confirmation_matches_linear_scan() {
    let cfg = FusionConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    for _ in 0..10_000 {
        let stream = random_stream(&mut rng);
        let mut state = FusionState::new();
        let got: Vec<u64> = stream
            .iter()
            .filter_map(|&(f, c)| state.ingest_observation(&obs("cam", f, c), &cfg).unwrap())
            .map(|e| e.end_frame)
            .collect();
        assert_eq!(got, linear_scan(&stream), "{stream:?}");
    }
}

#[test]
fn sensors_are_counted_independently() {
    let cfg = FusionConfig::default();
    // two cameras alternate frames: neither has a run of three on its own
    let mut all = Vec::new();
    for f in 0..10 {
        all.push(obs(if f % 2 == 0 { "a" } else { "b" }, f, 0.95));
    }
    assert!(fuse_observations(&all, &cfg).unwrap().is_empty());
    all.extend([obs("c", 3, 0.9), obs("c", 4, 0.9), obs("c", 5, 0.9)]);
    let events = fuse_observations(&all, &cfg).unwrap();
    assert_eq!(events.len(), 1);
    assert_eq!(events[0].sensor_ids, ["c".to_string()].into());
}

#[test]
fn going_backwards_is_an_error() {
    let cfg = FusionConfig::default();
    let mut state = FusionState::new();
    state.ingest_observation(&obs("a", 5, 0.9), &cfg).unwrap();
    assert!(state.ingest_observation(&obs("a", 4, 0.9), &cfg).is_err());
}

fn random_camera_events(rng: &mut ChaCha8Rng, n: usize) -> Vec<CameraEvent> {
    (0..n)
        .map(|i| {
            let start = rng.random_range(0..600);
            CameraEvent {
                sensor_id: format!("cam{i}"),
                start_frame: start,
                end_frame: start + 2,
                confidence: rng.random_range(0.8..1.0),
                world_point: rng
                    .random_bool(0.7)
                    .then(|| Vec2::new(rng.random_range(0.0..120.0), rng.random_range(0.0..20.0))),
            }
        })
        .collect()
}

/// Connected components of the pairwise predicate by repeated scanning.
fn components(events: &[CameraEvent], cfg: &FusionConfig) -> BTreeSet<BTreeSet<String>> {
    let mut label: Vec<usize> = (0..events.len()).collect();
    loop {
        let mut changed = false;
        for i in 0..events.len() {
            for j in 0..events.len() {
                if camera_events_mergeable(&events[i], &events[j], cfg) && label[j] < label[i] {
                    label[i] = label[j];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut groups: std::collections::BTreeMap<usize, BTreeSet<String>> = Default::default();
    for (i, e) in events.iter().enumerate() {
        groups.entry(label[i]).or_default().insert(e.sensor_id.clone());
    }
    groups.into_values().collect()
}

#[test]
fn aggregation_matches_pairwise_oracle() {
    let cfg = FusionConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..500 {
        let n = rng.random_range(0..25);
        let events = random_camera_events(&mut rng, n);
        let merged = aggregate_cameras(&events, &cfg);
        let got: BTreeSet<BTreeSet<String>> = merged.iter().map(|e| e.sensor_ids.clone()).collect();
        assert_eq!(got, components(&events, &cfg));
        for m in &merged {
            let members: Vec<&CameraEvent> = events.iter().filter(|e| m.sensor_ids.contains(&e.sensor_id)).collect();
            assert_eq!(m.start, members.iter().map(|e| e.start_frame).min().unwrap());
            assert_eq!(m.end, members.iter().map(|e| e.end_frame).max());
            assert_eq!(m.confidence, members.iter().map(|e| e.confidence).fold(0.0, f64::max));
            assert_eq!(m.event_type, EventType::Accident);
        }
    }
}

proptest! {
    #[test]
    fn aggregation_ignores_input_order(seed in 0u64..100_000) {
        let cfg = FusionConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(0..20);
        let mut events = random_camera_events(&mut rng, n);
        let a = aggregate_cameras(&events, &cfg);
        events.shuffle(&mut rng);
        prop_assert_eq!(aggregate_cameras(&events, &cfg), a);
    }
}

#[test]
fn scripted_detector_feeds_merge_paths() {
    let cfg = FusionConfig::default();
    let mut det = ScriptedDetector {
        hits: vec![
            ScriptedHit {
                sensor_id: "cam_n".into(),
                frames: 100..=104,
                confidence: 0.92,
                world_point: Some(Vec2::new(50.0, 0.0)),
            },
            ScriptedHit {
                sensor_id: "cam_s".into(),
                frames: 101..=103,
                confidence: 0.85,
                world_point: Some(Vec2::new(55.0, 1.0)),
            },
            ScriptedHit { sensor_id: "cam_n".into(), frames: 900..=905, confidence: 0.9, world_point: None },
        ],
    };
    let observations: Vec<DetectionObservation> = (0..1000).flat_map(|f| det.detect(f)).collect();
    let learned = fuse_observations(&observations, &cfg).unwrap();
    assert_eq!(learned.len(), 2);
    assert_eq!(learned[0].sensor_ids.len(), 2);
    assert_eq!(learned[0].confidence, 0.92);

    let mut rule = TrafficEvent::new(EventType::Accident, 95);
    rule.end = Some(130);
    rule.track_ids = [4, 5].into();
    rule.location = Some(Vec2::new(52.0, 0.0));
    let mut standing = TrafficEvent::new(EventType::StandingActiveLane, 200);
    standing.end = Some(400);

    let merged = merge_paths(&[rule, standing.clone()], &learned, &cfg);
    assert_eq!(merged.len(), 3);
    assert_eq!(merged[0].verified, Some(true));
    assert_eq!(merged[0].rule_support, Some(true));
    assert!(merged[0].sensor_ids.contains("cam_s"));
    assert_eq!(merged[1], standing);
    assert_eq!(merged[2].rule_support, Some(false));
    assert_eq!(merged[2].start, 900);
}
