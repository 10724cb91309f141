//! The six maneuver rules evaluated per vehicle per frame.
//!
//! With `v` the vehicle's scalar speed, `v_lead` the speed of the nearest
//! same-lane vehicle ahead and `gap` the bumper-to-bumper distance to it:
//!
//! 1. `v >= min_speed` (15 km/h by default)
//! 2. `v > v_lead`
//! 3. `v >= v_j` for every vehicle `j` ahead in the same lane within the horizon
//! 4. `gap >= distance_threshold`
//! 5. `gap < ((v_kmh - v_lead_kmh) / 30)^2`, speeds in km/h, result in meters
//! 6. `ttc <= ttc_threshold`, with `ttc = gap / (v - v_lead)` while closing
//!
//! A vehicle is flagged as an accident when all six hold. Rules 2 to 6 are
//! false when there is no lead vehicle.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::trajectory::{assign_lane, Frame, LaneAssignment, LaneMap, TrackedObject};

pub const KMH_PER_MPS: f64 = 3.6;

/// Thresholds for the maneuver rules. SI units throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleConfig {
    /// m/s
    pub min_speed: f64,
    /// m
    pub distance_threshold: f64,
    /// s
    pub ttc_threshold: f64,
    /// Longest center-to-center distance searched for vehicles ahead, m.
    pub lead_horizon: f64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self { min_speed: 15.0 / KMH_PER_MPS, distance_threshold: 1.0, ttc_threshold: 1.5, lead_horizon: 150.0 }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, value) in [
            ("rules.min_speed", self.min_speed),
            ("rules.distance_threshold", self.distance_threshold),
            ("rules.ttc_threshold", self.ttc_threshold),
            ("rules.lead_horizon", self.lead_horizon),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError::Invalid { field, expected: "strictly positive", value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadRelation {
    pub follower_id: u64,
    pub lead_id: u64,
    /// Bumper-to-bumper distance, clamped at zero.
    pub gap: f64,
    pub follower_speed: f64,
    pub lead_speed: f64,
    pub closing_speed: f64,
    /// `f64::INFINITY` unless closing.
    pub ttc: f64,
}

impl LeadRelation {
    fn new(follower: &TrackedObject, follower_s: f64, lead: &TrackedObject, lead_s: f64) -> Self {
        let gap = ((lead_s - follower_s) - (follower.dimensions.length + lead.dimensions.length) / 2.0).max(0.0);
        let follower_speed = follower.speed();
        let lead_speed = lead.speed();
        let closing_speed = follower_speed - lead_speed;
        let ttc = if closing_speed > 0.0 { gap / closing_speed } else { f64::INFINITY };
        Self {
            follower_id: follower.track_id,
            lead_id: lead.track_id,
            gap,
            follower_speed,
            lead_speed,
            closing_speed,
            ttc,
        }
    }
}

/// Outcome of the six rules, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RuleFlags(pub [bool; 6]);

impl RuleFlags {
    pub fn all(&self) -> bool {
        self.0.iter().all(|&f| f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleEvaluation {
    pub track_id: u64,
    pub speed: f64,
    pub lane: Option<LaneAssignment>,
    pub flags: RuleFlags,
    pub accident: bool,
    pub lead: Option<LeadRelation>,
    /// Same-lane vehicles ahead within the horizon that rule 3 compared against.
    pub vehicles_ahead: usize,
}

/// Evaluate rule 5's bound in meters for a pair of speeds in m/s.
pub fn braking_distance_bound(speed: f64, lead_speed: f64) -> f64 {
    let diff_kmh = speed * KMH_PER_MPS - lead_speed * KMH_PER_MPS;
    (diff_kmh / 30.0).powi(2)
}

/// Pure inequality check given a vehicle's speed and its lead relation.
pub fn rule_flags(speed: f64, lead: Option<&LeadRelation>, all_ahead_slower: bool, config: &RuleConfig) -> RuleFlags {
    let r1 = speed >= config.min_speed;
    let Some(lead) = lead else {
        return RuleFlags([r1, false, false, false, false, false]);
    };
    RuleFlags([
        r1,
        speed > lead.lead_speed,
        all_ahead_slower,
        lead.gap >= config.distance_threshold,
        lead.gap < braking_distance_bound(speed, lead.lead_speed),
        lead.ttc <= config.ttc_threshold,
    ])
}

struct Placed<'a> {
    object: &'a TrackedObject,
    lane: Option<LaneAssignment>,
}

fn place<'a>(frame: &'a Frame, lane_map: &LaneMap) -> Vec<Placed<'a>> {
    frame
        .objects
        .iter()
        .map(|object| Placed {
            object,
            lane: if object.category.is_vehicle() { assign_lane(object.ground_position(), lane_map) } else { None },
        })
        .collect()
}

/// Lead vehicle and rule-3 context for `vehicle` among `placed`.
fn lead_context(
    vehicle: &TrackedObject,
    lane: &LaneAssignment,
    placed: &[Placed<'_>],
    config: &RuleConfig,
) -> (Option<LeadRelation>, bool, usize) {
    let speed = vehicle.speed();
    let mut best: Option<(f64, u64, &TrackedObject)> = None;
    let mut all_slower = true;
    let mut ahead = 0;
    for p in placed {
        let Some(other_lane) = &p.lane else { continue };
        if p.object.track_id == vehicle.track_id || other_lane.lane_id != lane.lane_id {
            continue;
        }
        let ds = other_lane.s - lane.s;
        if ds <= 0.0 || ds > config.lead_horizon {
            continue;
        }
        ahead += 1;
        all_slower &= speed >= p.object.speed();
        let key = (other_lane.s, p.object.track_id);
        if best.is_none_or(|(bs, bid, _)| key < (bs, bid)) {
            best = Some((key.0, key.1, p.object));
        }
    }
    let lead = best.map(|(s, _, obj)| LeadRelation::new(vehicle, lane.s, obj, s));
    (lead, all_slower, ahead)
}

/// Nearest vehicle ahead in the same lane, within `lead_horizon` (measured
/// center to center along the lane). Ties on arc-length go to the lowest
/// track id. `None` if the vehicle is off-lane or nobody is ahead.
pub fn find_lead(
    vehicle: &TrackedObject,
    frame: &Frame,
    lane_map: &LaneMap,
    config: &RuleConfig,
) -> Option<LeadRelation> {
    let lane = assign_lane(vehicle.ground_position(), lane_map)?;
    let placed = place(frame, lane_map);
    lead_context(vehicle, &lane, &placed, config).0
}

fn evaluate_placed(
    vehicle: &TrackedObject,
    lane: Option<LaneAssignment>,
    placed: &[Placed<'_>],
    config: &RuleConfig,
) -> RuleEvaluation {
    let speed = vehicle.speed();
    let (lead, all_slower, ahead) = match &lane {
        Some(l) => lead_context(vehicle, l, placed, config),
        None => (None, true, 0),
    };
    let flags = rule_flags(speed, lead.as_ref(), all_slower, config);
    RuleEvaluation {
        track_id: vehicle.track_id,
        speed,
        lane,
        flags,
        accident: flags.all(),
        lead,
        vehicles_ahead: ahead,
    }
}

/// Evaluate all six rules for one vehicle of the frame.
pub fn evaluate_rules(
    vehicle: &TrackedObject,
    frame: &Frame,
    lane_map: &LaneMap,
    config: &RuleConfig,
) -> RuleEvaluation {
    let placed = place(frame, lane_map);
    let lane = assign_lane(vehicle.ground_position(), lane_map);
    evaluate_placed(vehicle, lane, &placed, config)
}

/// One evaluation per on-lane vehicle, in frame order. Off-lane objects and
/// non-vehicle categories are skipped.
pub fn evaluate_frame(frame: &Frame, lane_map: &LaneMap, config: &RuleConfig) -> Vec<RuleEvaluation> {
    let placed = place(frame, lane_map);
    placed.iter().filter(|p| p.lane.is_some()).map(|p| evaluate_placed(p.object, p.lane, &placed, config)).collect()
}
