use roadwatch_core::rules::{evaluate_frame, RuleConfig};
use roadwatch_core::simulator::lane_y;
use roadwatch_core::trajectory::{Dimensions, Lane, LaneType};
use roadwatch_core::{Category, EventType, Frame, FusionConfig, LaneMap, TrackedObject, Vec2};
use roadwatch_web::{check_pair, confirm_sequence, rear_end_timeline, rule_region, RearEndInput};

/// The same pair laid out as a real frame on a straight lane.
fn through_engine(follower_kmh: f64, lead_kmh: f64, gap: f64) -> [bool; 6] {
    let map = LaneMap::new(vec![Lane::new(
        1,
        LaneType::Driving,
        3.5,
        vec![Vec2::new(-10.0, lane_y(1)), Vec2::new(500.0, lane_y(1))],
    )
    .unwrap()])
    .unwrap();
    let dims = Dimensions::new(4.0, 1.8, 1.5);
    let mut f = Frame::new(0, 0.0, "t");
    for (id, x, kmh) in [(1, 0.0, follower_kmh), (2, gap + 4.0, lead_kmh)] {
        f.objects.push(
            TrackedObject::new(id, Category::Car, [x, lane_y(1), 0.7], dims, 0.0, Some(Vec2::new(kmh / 3.6, 0.0)))
                .unwrap(),
        );
    }
    evaluate_frame(&f, &map, &RuleConfig::default())[0].flags.0
}

#[test]
fn pair_check_agrees_with_frame_evaluation() {
    let cfg = RuleConfig::default();
    for follower in [0.0, 10.0, 20.0, 60.0, 100.0, 140.0] {
        for lead in [0.0, 30.0, 90.0] {
            for gap in [0.0, 0.5, 1.0, 3.0, 12.0, 40.0] {
                assert_eq!(
                    check_pair(follower, lead, gap, &cfg).flags,
                    through_engine(follower, lead, gap),
                    "{follower} {lead} {gap}"
                );
            }
        }
    }
}

#[test]
fn pair_check_worked_example() {
    // 100 km/h onto a stopped car 10 m ahead: bound (100/30)² ≈ 11.1 m, ttc 0.36 s
    let r = check_pair(100.0, 0.0, 10.0, &RuleConfig::default());
    assert!(r.accident);
    assert!((r.bound - 100.0 / 9.0).abs() < 1e-9);
    assert!((r.ttc.unwrap() - 0.36).abs() < 1e-9);
    let r = check_pair(50.0, 60.0, 10.0, &RuleConfig::default());
    assert_eq!(r.ttc, None);
    assert!(!r.accident);
}

#[test]
fn region_bits_match_pair_checks() {
    let cfg = RuleConfig::default();
    let region = rule_region(30.0, 150.0, 20.0, 15, 10, &cfg);
    assert_eq!(region.cells.len(), 150);
    let cell = region.cells[3 * 15 + 7];
    let flags = check_pair(7.5 / 15.0 * 150.0, 30.0, 3.5 / 10.0 * 20.0, &cfg).flags;
    for (i, f) in flags.iter().enumerate() {
        assert_eq!(cell >> i & 1 == 1, *f);
    }
    assert!(region.cells.contains(&0b11_1111));
}

#[test]
fn default_timeline_confirms_one_accident() {
    let t = rear_end_timeline(&RearEndInput::default()).unwrap();
    let trigger = t.trigger_frame.expect("default scenario collides");
    let accidents: Vec<_> = t.events.iter().filter(|e| e.event_type == EventType::Accident).collect();
    assert_eq!(accidents.len(), 1);
    assert!(accidents[0].start.abs_diff(trigger) <= 3);
    assert!(t.steps[trigger as usize].flags.iter().all(|&f| f));
    assert!((t.steps[0].follower_speed - 30.0).abs() < 1e-9);
    let json = serde_json::to_string(&t).unwrap();
    assert!(json.contains("\"trigger_frame\""));
}

#[test]
fn timeline_rejects_bad_parameters() {
    let input = RearEndInput { initial_gap: -5.0, ..RearEndInput::default() };
    assert!(rear_end_timeline(&input).is_err());
}

#[test]
fn confirmation_sequence() {
    let seq = [Some(0.9), Some(0.95), None, Some(0.8), Some(0.85), Some(0.99), Some(0.97), Some(0.5), Some(0.9)];
    let steps = confirm_sequence(&seq, &FusionConfig::default()).unwrap();
    let runs: Vec<u32> = steps.iter().map(|s| s.run).collect();
    assert_eq!(runs, [1, 2, 0, 1, 2, 3, 4, 0, 1]);
    let confirmed: Vec<u64> = steps.iter().filter(|s| s.confirmed).map(|s| s.frame).collect();
    assert_eq!(confirmed, [5]);
    assert!(confirm_sequence(&[Some(1.5)], &FusionConfig::default()).is_err());
}
