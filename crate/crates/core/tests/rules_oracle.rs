use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roadwatch_core::rules::{evaluate_frame, evaluate_rules, find_lead, RuleEvaluation};
use roadwatch_core::trajectory::{Dimensions, Lane, LaneType};
use roadwatch_core::{Category, Frame, LaneMap, RuleConfig, TrackedObject, Vec2};

const X0: f64 = -50.0;

fn road() -> LaneMap {
    LaneMap::new(
        (0..3)
            .map(|i| {
                let y = i as f64 * 3.5;
                Lane::new(i + 1, LaneType::Driving, 3.5, vec![Vec2::new(X0, y), Vec2::new(450.0, y)]).unwrap()
            })
            .collect(),
    )
    .unwrap()
}

fn random_frame(rng: &mut ChaCha8Rng, max_vehicles: usize) -> Frame {
    let mut f = Frame::new(0, 0.0, "t");
    let n = rng.random_range(1..=max_vehicles);
    for id in 0..n as u64 {
        let lane = rng.random_range(0..3) as f64;
        // mostly vehicles, a few pedestrians, a few off the road
        let category = match rng.random_range(0..20) {
            0 => Category::Pedestrian,
            1 => Category::Bicycle,
            2 => Category::Truck,
            _ => Category::Car,
        };
        let y = if rng.random_range(0..15) == 0 { 30.0 } else { lane * 3.5 + rng.random_range(-1.5..1.5) };
        let x = rng.random_range(0.0..300.0);
        let len = rng.random_range(3.5..13.0);
        let speed = rng.random_range(0.0..40.0);
        let heading: f64 = rng.random_range(-0.05..0.05);
        f.objects.push(
            TrackedObject::new(
                id,
                category,
                [x, y, 0.8],
                Dimensions::new(len, 2.0, 1.6),
                heading,
                Some(Vec2::new(speed * heading.cos(), speed * heading.sin())),
            )
            .unwrap(),
        );
    }
    f
}

#[derive(Debug, PartialEq)]
struct OracleResult {
    id: u64,
    flags: [bool; 6],
    lead: Option<u64>,
}

/// Straight lanes along x: lane from the y band, s = x − X0. All pairs.
fn brute_force(frame: &Frame, cfg: &RuleConfig) -> Vec<OracleResult> {
    let lane_of = |o: &TrackedObject| -> Option<usize> {
        if matches!(o.category, Category::Pedestrian | Category::Bicycle) {
            return None;
        }
        (0..3).find(|&l| (o.position[1] - l as f64 * 3.5).abs() <= 1.75)
    };
    let speed = |o: &TrackedObject| o.velocity.map_or(0.0, |v| (v.x * v.x + v.y * v.y).sqrt());
    let mut out = Vec::new();
    for a in &frame.objects {
        let Some(la) = lane_of(a) else { continue };
        let sa = a.position[0] - X0;
        let va = speed(a);
        let mut lead: Option<&TrackedObject> = None;
        let mut ahead_ok = true;
        for b in &frame.objects {
            if b.track_id == a.track_id || lane_of(b) != Some(la) {
                continue;
            }
            let ds = (b.position[0] - X0) - sa;
            if ds <= 0.0 || ds > cfg.lead_horizon {
                continue;
            }
            ahead_ok &= va >= speed(b);
            let better = match lead {
                None => true,
                Some(l) => {
                    let sl = l.position[0] - X0;
                    let sb = b.position[0] - X0;
                    sb < sl || (sb == sl && b.track_id < l.track_id)
                }
            };
            if better {
                lead = Some(b);
            }
        }
        let r1 = va >= cfg.min_speed;
        let flags = match lead {
            None => [r1, false, false, false, false, false],
            Some(l) => {
                let vl = speed(l);
                let gap = ((l.position[0] - X0) - sa - (a.dimensions.length + l.dimensions.length) / 2.0).max(0.0);
                let closing = va - vl;
                let ttc = if closing > 0.0 { gap / closing } else { f64::INFINITY };
                let kmh = (va * 3.6 - vl * 3.6) / 30.0;
                [r1, va > vl, ahead_ok, gap >= cfg.distance_threshold, gap < kmh * kmh, ttc <= cfg.ttc_threshold]
            }
        };
        out.push(OracleResult { id: a.track_id, flags, lead: lead.map(|l| l.track_id) });
    }
    out
}

fn as_results(evals: &[RuleEvaluation]) -> Vec<OracleResult> {
    evals.iter().map(|e| OracleResult { id: e.track_id, flags: e.flags.0, lead: e.lead.map(|l| l.lead_id) }).collect()
}

#[test]
fn evaluate_frame_matches_brute_force() {
    let map = road();
    let cfg = RuleConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut accidents = 0;
    for _ in 0..1000 {
        let frame = random_frame(&mut rng, 20);
        let evals = evaluate_frame(&frame, &map, &cfg);
        accidents += evals.iter().filter(|e| e.accident).count();
        assert!(evals.iter().all(|e| e.accident == e.flags.all()));
        assert_eq!(as_results(&evals), brute_force(&frame, &cfg));
    }
    // the generator must actually exercise the positive case
    assert!(accidents > 20, "only {accidents} accident flags");
}

#[test]
fn find_lead_matches_all_pairs_on_15_vehicles() {
    let map = road();
    let cfg = RuleConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..200 {
        let mut frame = random_frame(&mut rng, 15);
        while frame.objects.len() < 15 {
            frame = random_frame(&mut rng, 15);
        }
        let oracle = brute_force(&frame, &cfg);
        for o in &oracle {
            let v = frame.object(o.id).unwrap();
            let lead = find_lead(v, &frame, &map, &cfg);
            assert_eq!(lead.map(|l| l.lead_id), o.lead);
            if let Some(l) = lead {
                assert!(l.gap >= 0.0);
                if l.closing_speed > 0.0 {
                    assert_eq!(l.ttc, l.gap / l.closing_speed);
                } else {
                    assert!(l.ttc.is_infinite());
                }
            }
        }
    }
}

#[test]
fn frame_and_single_vehicle_evaluation_agree() {
    let map = road();
    let cfg = RuleConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let frame = random_frame(&mut rng, 20);
        for e in evaluate_frame(&frame, &map, &cfg) {
            let v = frame.object(e.track_id).unwrap();
            assert_eq!(evaluate_rules(v, &frame, &map, &cfg), e);
        }
    }
}

fn two_car_frame(gap: f64, vf: f64, vl: f64) -> Frame {
    let mut f = Frame::new(0, 0.0, "t");
    let dims = Dimensions::new(4.0, 1.8, 1.5);
    f.objects
        .push(TrackedObject::new(1, Category::Car, [0.0, 0.0, 0.75], dims, 0.0, Some(Vec2::new(vf, 0.0))).unwrap());
    f.objects.push(
        TrackedObject::new(2, Category::Car, [gap + 4.0, 0.0, 0.75], dims, 0.0, Some(Vec2::new(vl, 0.0))).unwrap(),
    );
    f
}

/// Margins of every inequality, to skip cases that sit on a threshold.
fn margins(e: &RuleEvaluation, cfg: &RuleConfig) -> f64 {
    let mut m = (e.speed - cfg.min_speed).abs();
    if let Some(l) = e.lead {
        let kmh = (l.follower_speed * 3.6 - l.lead_speed * 3.6) / 30.0;
        m = m
            .min(l.closing_speed.abs())
            .min((l.gap - cfg.distance_threshold).abs())
            .min((kmh * kmh - l.gap).abs())
            .min((l.ttc - cfg.ttc_threshold).abs())
            .min(l.gap);
    }
    m
}

proptest! {
    #[test]
    fn shrinking_the_gap_never_clears_rule_5(gap in 0.0..200.0f64, shrink in 0.0..1.0f64, vf in 0.0..45.0f64, vl in 0.0..45.0f64) {
        let map = road();
        let cfg = RuleConfig::default();
        let wide = evaluate_frame(&two_car_frame(gap, vf, vl), &map, &cfg);
        let narrow = evaluate_frame(&two_car_frame(gap * shrink, vf, vl), &map, &cfg);
        if wide[0].flags.0[4] {
            prop_assert!(narrow[0].flags.0[4]);
        }
    }

    #[test]
    fn accident_is_invariant_under_rigid_motion(seed in 0u64..10_000, angle in -std::f64::consts::PI..std::f64::consts::PI, tx in -500.0..500.0f64, ty in -500.0..500.0f64) {
        let map = road();
        let cfg = RuleConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frame = random_frame(&mut rng, 20);
        let shift = Vec2::new(tx, ty);
        let mut moved = frame.clone();
        for o in &mut moved.objects {
            let p = Vec2::new(o.position[0], o.position[1]).rotate(angle) + shift;
            o.position[0] = p.x;
            o.position[1] = p.y;
            o.velocity = o.velocity.map(|v| v.rotate(angle));
        }
        let moved_map = map.transformed(angle, shift);
        let a = evaluate_frame(&frame, &map, &cfg);
        let b = evaluate_frame(&moved, &moved_map, &cfg);
        for ea in &a {
            // rounding can only matter for quantities sitting on a boundary
            if margins(ea, &cfg) < 1e-6 || ea.lane.is_none_or(|l| (l.lateral_offset.abs() - 1.75).abs() < 1e-6) {
                continue;
            }
            let eb = b.iter().find(|e| e.track_id == ea.track_id);
            prop_assert!(eb.is_some());
            prop_assert_eq!(ea.accident, eb.unwrap().accident);
        }
    }
}

#[test]
fn hand_worked_pairs() {
    let map = road();
    let cfg = RuleConfig::default();
    let e = &evaluate_frame(&two_car_frame(10.0, 30.0, 0.0), &map, &cfg)[0];
    assert_eq!(e.flags.0, [true; 6]);
    assert!((e.lead.unwrap().ttc - 1.0 / 3.0).abs() < 1e-12);
    let e = &evaluate_frame(&two_car_frame(14.0, 30.0, 0.0), &map, &cfg)[0];
    assert_eq!(e.flags.0, [true, true, true, true, false, true]);
    assert!(!e.accident);
}
