//! Deterministic scenario generator with analytic ground truth.
//!
//! Vehicles move on a straight road with three driving lanes (ids 1 to 3,
//! travelling +x) and a shoulder (id 4) to their right. Longitudinal motion
//! is piecewise constant acceleration: cruise, then optionally brake at a
//! constant rate to a standstill. Because gaps and speeds are closed-form,
//! the frame at which the six rules first hold, and the frames at which
//! standing events open, are known without running the detector.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierConfig;
use crate::error::ConfigError;
use crate::event::{EventType, TrafficEvent};
use crate::rules::{RuleConfig, KMH_PER_MPS};
use crate::trajectory::{Category, Dimensions, Frame, Lane, LaneMap, LaneType, TrackedObject, Vec2};

pub const LANE_WIDTH: f64 = 3.5;
pub const SHOULDER_WIDTH: f64 = 3.0;
pub const SHOULDER_LANE: u32 = 4;
/// Lateral position of the shoulder centerline.
pub const SHOULDER_Y: f64 = -(LANE_WIDTH + SHOULDER_WIDTH) / 2.0;

/// Lateral position of driving lane `id` (1-based).
pub fn lane_y(id: u32) -> f64 {
    (id - 1) as f64 * LANE_WIDTH
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScenarioType {
    FreeFlow,
    RearEnd,
    ShoulderStop,
    StandingQueue,
}

impl std::str::FromStr for ScenarioType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "free_flow" => Ok(ScenarioType::FreeFlow),
            "rear_end" => Ok(ScenarioType::RearEnd),
            "shoulder_stop" => Ok(ScenarioType::ShoulderStop),
            "standing_queue" => Ok(ScenarioType::StandingQueue),
            _ => Err(format!("unknown scenario type {s:?}")),
        }
    }
}

/// A follower at constant speed closes on a lead vehicle that brakes to a stop in lane 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RearEndParams {
    /// m/s
    pub follower_speed: f64,
    /// m/s
    pub lead_speed: f64,
    /// m/s², positive
    pub lead_deceleration: f64,
    /// s
    pub lead_brake_time: f64,
    /// Bumper-to-bumper gap at t = 0, m.
    pub initial_gap: f64,
    /// Optional follower braking: (start time s, deceleration m/s²).
    pub follower_brake: Option<(f64, f64)>,
    pub lead_category: Category,
}

impl Default for RearEndParams {
    fn default() -> Self {
        Self {
            follower_speed: 30.0,
            lead_speed: 25.0,
            lead_deceleration: 6.0,
            lead_brake_time: 1.0,
            initial_gap: 200.0,
            follower_brake: None,
            lead_category: Category::Car,
        }
    }
}

/// One vehicle leaves lane 1 for the shoulder while braking to a stop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShoulderStopParams {
    pub initial_speed: f64,
    pub deceleration: f64,
    /// Time the lane change and braking start, s.
    pub maneuver_start: f64,
    /// Duration of the lateral move onto the shoulder, s.
    pub lane_change_duration: f64,
}

impl Default for ShoulderStopParams {
    fn default() -> Self {
        Self { initial_speed: 25.0, deceleration: 2.0, maneuver_start: 2.0, lane_change_duration: 3.0 }
    }
}

/// A platoon in lane 1 brakes in unison and stays stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueParams {
    pub queue_len: u32,
    pub initial_speed: f64,
    pub deceleration: f64,
    pub brake_time: f64,
    /// Bumper-to-bumper spacing, m.
    pub spacing: f64,
}

impl Default for QueueParams {
    fn default() -> Self {
        Self { queue_len: 4, initial_speed: 20.0, deceleration: 3.0, brake_time: 1.0, spacing: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub scenario_type: ScenarioType,
    pub seed: u64,
    /// Hz
    pub frame_rate: f64,
    /// s
    pub duration: f64,
    /// Total vehicles, designated ones included.
    pub vehicle_count: u32,
    /// Standard deviation of Gaussian position jitter, m. Ground truth is clean.
    pub noise_sigma: f64,
    /// Write velocities into the stream; otherwise the detector estimates them.
    pub emit_velocity: bool,
    pub sensor_id: String,
    pub rear_end: RearEndParams,
    pub shoulder_stop: ShoulderStopParams,
    pub queue: QueueParams,
    /// Thresholds the ground truth is derived under.
    pub rules: RuleConfig,
    pub classifier: ClassifierConfig,
}

impl Scenario {
    /// Default parameters for a scenario type.
    pub fn new(scenario_type: ScenarioType, seed: u64) -> Self {
        let (duration, vehicle_count) = match scenario_type {
            ScenarioType::FreeFlow => (60.0, 12),
            ScenarioType::RearEnd => (20.0, 8),
            ScenarioType::ShoulderStop => (150.0, 8),
            ScenarioType::StandingQueue => (30.0, 10),
        };
        Self {
            scenario_type,
            seed,
            frame_rate: 25.0,
            duration,
            vehicle_count,
            noise_sigma: 0.0,
            emit_velocity: true,
            sensor_id: "sim".to_string(),
            rear_end: RearEndParams::default(),
            shoulder_stop: ShoulderStopParams::default(),
            queue: QueueParams::default(),
            rules: RuleConfig::default(),
            classifier: ClassifierConfig::default(),
        }
    }

    /// Like [`Scenario::new`] but with the scenario's kinematics drawn from `seed`.
    pub fn randomized(scenario_type: ScenarioType, seed: u64) -> Self {
        let mut s = Self::new(scenario_type, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e_ed0f_5ce7_a210);
        match scenario_type {
            ScenarioType::FreeFlow => {}
            ScenarioType::RearEnd => {
                s.rear_end = RearEndParams {
                    follower_speed: rng.random_range(25.0..38.0),
                    lead_speed: rng.random_range(15.0..25.0),
                    lead_deceleration: rng.random_range(4.0..8.0),
                    lead_brake_time: rng.random_range(0.0..2.0),
                    initial_gap: rng.random_range(150.0..250.0),
                    follower_brake: None,
                    lead_category: if rng.random_bool(0.3) { Category::Truck } else { Category::Car },
                };
            }
            ScenarioType::ShoulderStop => {
                s.shoulder_stop = ShoulderStopParams {
                    initial_speed: rng.random_range(20.0..30.0),
                    deceleration: rng.random_range(1.5..3.0),
                    maneuver_start: rng.random_range(1.0..3.0),
                    lane_change_duration: rng.random_range(2.0..4.0),
                };
            }
            ScenarioType::StandingQueue => {
                s.queue = QueueParams {
                    queue_len: rng.random_range(3..=6),
                    initial_speed: rng.random_range(15.0..25.0),
                    deceleration: rng.random_range(2.0..4.0),
                    brake_time: rng.random_range(0.5..2.0),
                    spacing: rng.random_range(8.0..15.0),
                };
                s.vehicle_count = s.vehicle_count.max(s.queue.queue_len);
            }
        }
        s
    }

    pub fn frame_count(&self) -> u64 {
        (self.duration * self.frame_rate).round() as u64
    }

    pub fn timestamp(&self, frame: u64) -> f64 {
        frame as f64 / self.frame_rate
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("frame_rate", self.frame_rate),
            ("duration", self.duration),
            ("rear_end.follower_speed", self.rear_end.follower_speed),
            ("rear_end.lead_deceleration", self.rear_end.lead_deceleration),
            ("rear_end.initial_gap", self.rear_end.initial_gap),
            ("shoulder_stop.initial_speed", self.shoulder_stop.initial_speed),
            ("shoulder_stop.deceleration", self.shoulder_stop.deceleration),
            ("shoulder_stop.lane_change_duration", self.shoulder_stop.lane_change_duration),
            ("queue.initial_speed", self.queue.initial_speed),
            ("queue.deceleration", self.queue.deceleration),
            ("queue.spacing", self.queue.spacing),
        ];
        for (field, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError::Invalid { field, expected: "strictly positive", value });
            }
        }
        let non_negative = [
            ("noise_sigma", self.noise_sigma),
            ("rear_end.lead_speed", self.rear_end.lead_speed),
            ("rear_end.lead_brake_time", self.rear_end.lead_brake_time),
            ("shoulder_stop.maneuver_start", self.shoulder_stop.maneuver_start),
            ("queue.brake_time", self.queue.brake_time),
        ];
        for (field, value) in non_negative {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ConfigError::Invalid { field, expected: "non-negative", value });
            }
        }
        if let Some((t, a)) = self.rear_end.follower_brake {
            if !(t >= 0.0 && a > 0.0) {
                return Err(ConfigError::Invalid {
                    field: "rear_end.follower_brake",
                    expected: "start >= 0 and deceleration > 0",
                    value: a,
                });
            }
        }
        if self.scenario_type == ScenarioType::StandingQueue && self.queue.queue_len == 0 {
            return Err(ConfigError::Invalid { field: "queue.queue_len", expected: ">= 1", value: 0.0 });
        }
        self.rules.validate()?;
        self.classifier.validate()
    }
}

/// Cruise at `v0`, then brake at `decel` from `brake_start` until stopped.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Motion {
    x0: f64,
    v0: f64,
    brake_start: f64,
    decel: f64,
}

impl Motion {
    fn cruise(x0: f64, v0: f64) -> Self {
        Self { x0, v0, brake_start: f64::INFINITY, decel: 0.0 }
    }

    fn braking(x0: f64, v0: f64, brake_start: f64, decel: f64) -> Self {
        Self { x0, v0, brake_start, decel }
    }

    fn stop_time(&self) -> f64 {
        if self.decel > 0.0 {
            self.brake_start + self.v0 / self.decel
        } else {
            f64::INFINITY
        }
    }

    /// Position and speed at time `t`.
    fn state(&self, t: f64) -> (f64, f64) {
        if t <= self.brake_start {
            return (self.x0 + self.v0 * t, self.v0);
        }
        let xb = self.x0 + self.v0 * self.brake_start;
        let tau = (t - self.brake_start).min(self.v0 / self.decel);
        let v = (self.v0 - self.decel * tau).max(0.0);
        (xb + self.v0 * tau - 0.5 * self.decel * tau * tau, v)
    }

    fn accel_on(&self, a: f64, b: f64) -> f64 {
        let mid = 0.5 * (a + b);
        if mid > self.brake_start && mid < self.stop_time() {
            -self.decel
        } else {
            0.0
        }
    }

    fn breakpoints(&self) -> [f64; 2] {
        [self.brake_start, self.stop_time()]
    }
}

/// Linear lateral move from `y0` to `y1` over `[start, start + duration]`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Lateral {
    y0: f64,
    y1: f64,
    start: f64,
    duration: f64,
}

impl Lateral {
    fn fixed(y: f64) -> Self {
        Self { y0: y, y1: y, start: 0.0, duration: 1.0 }
    }

    fn state(&self, t: f64) -> (f64, f64) {
        if t <= self.start {
            (self.y0, 0.0)
        } else if t >= self.start + self.duration {
            (self.y1, 0.0)
        } else {
            let rate = (self.y1 - self.y0) / self.duration;
            (self.y0 + rate * (t - self.start), rate)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct SimVehicle {
    id: u64,
    category: Category,
    dims: Dimensions,
    motion: Motion,
    lateral: Lateral,
}

/// The rear-end pair and when (if ever) they touch.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Collision {
    follower: usize,
    lead: usize,
    time: f64,
}

/// An event the detector is expected to produce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedEvent {
    pub event_type: EventType,
    pub track_ids: BTreeSet<u64>,
    /// First frame of the triggering condition; the event's start frame.
    pub trigger_frame: u64,
    /// Frame at which the classifier should open the event.
    pub open_frame: u64,
    pub end_frame: u64,
    pub lane: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagRow {
    pub track_id: u64,
    pub frame: u64,
    pub flags: [bool; 6],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scenario: Scenario,
    pub expected: Vec<ExpectedEvent>,
    /// Per-frame rule outcomes for designated tracks.
    pub flag_table: Vec<FlagRow>,
    pub notices: Vec<String>,
}

impl GroundTruth {
    /// Expected events in the classifier's output format.
    pub fn to_events(&self) -> Vec<TrafficEvent> {
        self.expected
            .iter()
            .map(|e| {
                let mut ev = TrafficEvent::new(e.event_type, e.trigger_frame);
                ev.end = Some(e.end_frame);
                ev.lane = Some(e.lane);
                ev.track_ids = e.track_ids.clone();
                ev.sensor_ids.insert(self.scenario.sensor_id.clone());
                ev
            })
            .collect()
    }

    pub fn first_of(&self, event_type: EventType) -> Option<&ExpectedEvent> {
        self.expected.iter().find(|e| e.event_type == event_type)
    }
}

/// A generated scenario: vehicles, road, and the ground truth derived from them.
#[derive(Debug, Clone)]
pub struct Simulation {
    scenario: Scenario,
    vehicles: Vec<SimVehicle>,
    collision: Option<Collision>,
    lane_map: LaneMap,
    notices: Vec<String>,
}

fn dims_for(category: Category) -> Dimensions {
    match category {
        Category::Truck => Dimensions::new(12.0, 2.5, 3.6),
        Category::Van => Dimensions::new(5.5, 2.0, 2.2),
        _ => Dimensions::new(4.5, 1.8, 1.5),
    }
}

/// Value of `c0 + c1 τ + c2 τ²`.
#[derive(Debug, Clone, Copy)]
struct Quad {
    c0: f64,
    c1: f64,
    c2: f64,
}

impl Quad {
    fn at(&self, tau: f64) -> f64 {
        self.c0 + tau * (self.c1 + tau * self.c2)
    }

    fn scale(self, k: f64) -> Quad {
        Quad { c0: self.c0 * k, c1: self.c1 * k, c2: self.c2 * k }
    }

    fn sub(self, o: Quad) -> Quad {
        Quad { c0: self.c0 - o.c0, c1: self.c1 - o.c1, c2: self.c2 - o.c2 }
    }

    /// Real roots strictly inside `(0, len)`.
    fn roots_in(&self, len: f64) -> Vec<f64> {
        let mut roots = Vec::new();
        let scale = self.c0.abs().max(self.c1.abs()).max(self.c2.abs()).max(1e-300);
        if self.c2.abs() <= 1e-14 * scale {
            if self.c1 != 0.0 {
                roots.push(-self.c0 / self.c1);
            }
        } else {
            let disc = self.c1 * self.c1 - 4.0 * self.c2 * self.c0;
            if disc >= 0.0 {
                // numerically stable form
                let sign = if self.c1 >= 0.0 { 1.0 } else { -1.0 };
                let q = -0.5 * (self.c1 + sign * disc.sqrt());
                let q = if q == 0.0 { -0.5 * disc.sqrt() } else { q };
                roots.push(q / self.c2);
                if q != 0.0 {
                    roots.push(self.c0 / q);
                }
            }
        }
        roots.retain(|r| r.is_finite() && *r > 0.0 && *r < len);
        roots
    }
}

/// First root of a linear function with `c0 + c1 τ` product of two linear terms.
fn linear_product(a: (f64, f64), b: (f64, f64)) -> Quad {
    Quad { c0: a.0 * b.0, c1: a.0 * b.1 + a.1 * b.0, c2: a.1 * b.1 }
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self, ConfigError> {
        scenario.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        let mut vehicles = Vec::new();
        let mut notices = Vec::new();
        let mut next_id = 1u64;
        let mut add = |category: Category, motion: Motion, lateral: Lateral, vehicles: &mut Vec<SimVehicle>| {
            vehicles.push(SimVehicle { id: next_id, category, dims: dims_for(category), motion, lateral });
            next_id += 1;
        };

        let designated_lanes: &[u32] = match scenario.scenario_type {
            ScenarioType::FreeFlow => &[],
            _ => &[1],
        };
        let mut collision = None;
        match scenario.scenario_type {
            ScenarioType::FreeFlow => {}
            ScenarioType::RearEnd => {
                let p = &scenario.rear_end;
                let follower_dims = dims_for(Category::Car);
                let lead_dims = dims_for(p.lead_category);
                let follower = match p.follower_brake {
                    Some((t, a)) => Motion::braking(0.0, p.follower_speed, t, a),
                    None => Motion::cruise(0.0, p.follower_speed),
                };
                let lead_x = p.initial_gap + (follower_dims.length + lead_dims.length) / 2.0;
                let lead = Motion::braking(lead_x, p.lead_speed, p.lead_brake_time, p.lead_deceleration);
                add(Category::Car, follower, Lateral::fixed(lane_y(1)), &mut vehicles);
                add(p.lead_category, lead, Lateral::fixed(lane_y(1)), &mut vehicles);
                let time = first_contact(&vehicles[0], &vehicles[1], scenario.duration);
                match time {
                    Some(time) => collision = Some(Collision { follower: 0, lead: 1, time }),
                    None => notices.push("follower never reaches the lead vehicle".to_string()),
                }
            }
            ScenarioType::ShoulderStop => {
                let p = &scenario.shoulder_stop;
                let motion = Motion::braking(0.0, p.initial_speed, p.maneuver_start, p.deceleration);
                let lateral = Lateral {
                    y0: lane_y(1),
                    y1: SHOULDER_Y,
                    start: p.maneuver_start,
                    duration: p.lane_change_duration,
                };
                add(Category::Car, motion, lateral, &mut vehicles);
            }
            ScenarioType::StandingQueue => {
                let p = &scenario.queue;
                let dims = dims_for(Category::Car);
                for i in 0..p.queue_len {
                    let x0 = i as f64 * (dims.length + p.spacing);
                    let motion = Motion::braking(x0, p.initial_speed, p.brake_time, p.deceleration);
                    add(Category::Car, motion, Lateral::fixed(lane_y(1)), &mut vehicles);
                }
            }
        }

        // background traffic: one constant speed per lane, at least 100 m apart
        let lanes: Vec<u32> = (1..=3).filter(|l| !designated_lanes.contains(l)).collect();
        let background = scenario.vehicle_count.saturating_sub(vehicles.len() as u32);
        let speeds: Vec<f64> = lanes.iter().map(|_| rng.random_range(22.0..36.0)).collect();
        let mut heads: Vec<f64> = lanes.iter().map(|_| rng.random_range(-50.0..50.0)).collect();
        for i in 0..background as usize {
            let slot = i % lanes.len();
            let category = match rng.random_range(0..10) {
                0 => Category::Truck,
                1 => Category::Van,
                _ => Category::Car,
            };
            let dims = dims_for(category);
            let x0 = heads[slot] - dims.length / 2.0;
            heads[slot] = x0 - dims.length / 2.0 - rng.random_range(100.0..160.0);
            add(category, Motion::cruise(x0, speeds[slot]), Lateral::fixed(lane_y(lanes[slot])), &mut vehicles);
        }

        let x_min = vehicles.iter().map(|v| v.motion.x0 - v.dims.length).fold(0.0, f64::min) - 50.0;
        let x_max =
            vehicles.iter().map(|v| v.motion.state(scenario.duration).0 + v.dims.length).fold(0.0, f64::max) + 100.0;
        let mut lanes: Vec<Lane> = (1..=3)
            .map(|id| {
                Lane::new(
                    id,
                    LaneType::Driving,
                    LANE_WIDTH,
                    vec![Vec2::new(x_min, lane_y(id)), Vec2::new(x_max, lane_y(id))],
                )
            })
            .collect::<Result<_, _>>()
            .expect("fixture lanes are valid");
        lanes.push(
            Lane::new(
                SHOULDER_LANE,
                LaneType::Shoulder,
                SHOULDER_WIDTH,
                vec![Vec2::new(x_min, SHOULDER_Y), Vec2::new(x_max, SHOULDER_Y)],
            )
            .expect("fixture shoulder is valid"),
        );
        let lane_map = LaneMap::new(lanes).expect("fixture map is valid");

        Ok(Self { scenario: scenario.clone(), vehicles, collision, lane_map, notices })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn lane_map(&self) -> &LaneMap {
        &self.lane_map
    }

    /// Clean (noise-free) longitudinal position and speed of vehicle `index` at `t`.
    fn longitudinal(&self, index: usize, t: f64) -> (f64, f64) {
        if let Some(c) = self.collision {
            if (index == c.follower || index == c.lead) && t >= c.time {
                return (self.vehicles[index].motion.state(c.time).0, 0.0);
            }
        }
        self.vehicles[index].motion.state(t)
    }

    fn clean_object(&self, index: usize, t: f64) -> TrackedObject {
        let v = &self.vehicles[index];
        let (x, vx) = self.longitudinal(index, t);
        let (y, vy) = v.lateral.state(t);
        let yaw = if vx > 0.0 { vy.atan2(vx) } else { 0.0 };
        TrackedObject::new(
            v.id,
            v.category,
            [x, y, v.dims.height / 2.0],
            v.dims,
            yaw,
            self.scenario.emit_velocity.then_some(Vec2::new(vx, vy)),
        )
        .expect("simulated objects are valid")
    }

    /// Stream of frames. Noise, if any, is drawn from a generator derived from the seed.
    pub fn frames(&self) -> impl Iterator<Item = Frame> + '_ {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(self.scenario.seed.rotate_left(17) ^ 0x6e_6f69_7365);
        let sigma = self.scenario.noise_sigma;
        let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
        (0..self.scenario.frame_count()).map(move |k| {
            let t = self.scenario.timestamp(k);
            let mut frame = Frame::new(k, t, self.scenario.sensor_id.clone());
            for i in 0..self.vehicles.len() {
                let mut obj = self.clean_object(i, t);
                if sigma > 0.0 {
                    obj.position[0] += normal.sample(&mut noise_rng);
                    obj.position[1] += normal.sample(&mut noise_rng);
                }
                frame.objects.push(obj);
            }
            frame
        })
    }

    /// Rule outcomes for the rear-end follower at frame `k`, from clean kinematics.
    fn follower_flags(&self, k: u64) -> [bool; 6] {
        let (fi, li) = (0, 1);
        let t = self.scenario.timestamp(k);
        let cfg = &self.scenario.rules;
        let (xf, vf) = self.longitudinal(fi, t);
        let (xl, vl) = self.longitudinal(li, t);
        let r1 = vf >= cfg.min_speed;
        let ds = xl - xf;
        if !(ds > 0.0 && ds <= cfg.lead_horizon) {
            return [r1, false, false, false, false, false];
        }
        let half = (self.vehicles[fi].dims.length + self.vehicles[li].dims.length) / 2.0;
        let gap = (ds - half).max(0.0);
        let closing = vf - vl;
        let ttc = if closing > 0.0 { gap / closing } else { f64::INFINITY };
        let bound = ((vf * KMH_PER_MPS - vl * KMH_PER_MPS) / 30.0).powi(2);
        [r1, vf > vl, vf >= vl, gap >= cfg.distance_threshold, gap < bound, ttc <= cfg.ttc_threshold]
    }

    /// Time intervals (as sorted critical points) on which the rear-end follower
    /// satisfies all six rules, located in closed form piece by piece.
    fn rear_end_trigger_frame(&self) -> Option<u64> {
        let (f, l) = (&self.vehicles[0], &self.vehicles[1]);
        let cfg = &self.scenario.rules;
        let end = self.collision.map_or(self.scenario.duration, |c| c.time.min(self.scenario.duration));
        let half = (f.dims.length + l.dims.length) / 2.0;
        let mut cuts: Vec<f64> = [0.0, end]
            .into_iter()
            .chain(f.motion.breakpoints())
            .chain(l.motion.breakpoints())
            .filter(|t| t.is_finite() && *t >= 0.0 && *t <= end)
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        let k = KMH_PER_MPS / 30.0;
        let mut critical = cuts.clone();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (xf, vf) = f.motion.state(a);
            let (xl, vl) = l.motion.state(a);
            let (af, al) = (f.motion.accel_on(a, b), l.motion.accel_on(a, b));
            let gap = Quad { c0: xl - xf - half, c1: vl - vf, c2: 0.5 * (al - af) };
            let closing = (vf - vl, af - al);
            let polys = [
                Quad { c0: vf - cfg.min_speed, c1: af, c2: 0.0 },
                Quad { c0: closing.0, c1: closing.1, c2: 0.0 },
                Quad { c0: cfg.lead_horizon - half, c1: 0.0, c2: 0.0 }.sub(gap),
                gap.sub(Quad { c0: cfg.distance_threshold, c1: 0.0, c2: 0.0 }),
                linear_product(closing, closing).scale(k * k).sub(gap),
                Quad { c0: closing.0, c1: closing.1, c2: 0.0 }.scale(cfg.ttc_threshold).sub(gap),
            ];
            for p in polys {
                critical.extend(p.roots_in(b - a).into_iter().map(|r| a + r));
            }
        }
        critical.sort_by(f64::total_cmp);
        critical.dedup();

        let last_frame = self.scenario.frame_count().saturating_sub(1);
        let fr = self.scenario.frame_rate;
        for w in critical.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = 0.5 * (a + b);
            if !self.all_rules_at_time(mid) {
                continue;
            }
            // confirm against the sampled frames around and inside the interval
            let first = ((a * fr).floor() as u64).saturating_sub(1);
            let last = ((b * fr).ceil() as u64 + 1).min(last_frame);
            if let Some(hit) = (first..=last).find(|&k| self.follower_flags(k).iter().all(|&x| x)) {
                return Some(hit);
            }
        }
        None
    }

    fn all_rules_at_time(&self, t: f64) -> bool {
        let cfg = &self.scenario.rules;
        let (xf, vf) = self.longitudinal(0, t);
        let (xl, vl) = self.longitudinal(1, t);
        let half = (self.vehicles[0].dims.length + self.vehicles[1].dims.length) / 2.0;
        let ds = xl - xf;
        let gap = (ds - half).max(0.0);
        let closing = vf - vl;
        ds > 0.0
            && ds <= cfg.lead_horizon
            && vf >= cfg.min_speed
            && closing > 0.0
            && gap >= cfg.distance_threshold
            && gap < ((vf * KMH_PER_MPS - vl * KMH_PER_MPS) / 30.0).powi(2)
            && gap / closing <= cfg.ttc_threshold
    }

    fn lane_of(&self, index: usize, t: f64) -> (u32, LaneType) {
        let (y, _) = self.vehicles[index].lateral.state(t);
        if (y - SHOULDER_Y).abs() < (y - lane_y(1)).abs() {
            (SHOULDER_LANE, LaneType::Shoulder)
        } else {
            let id =
                (1..=3).min_by(|&a, &b| (y - lane_y(a)).abs().total_cmp(&(y - lane_y(b)).abs())).expect("three lanes");
            (id, LaneType::Driving)
        }
    }

    fn standing_events(&self, index: usize, out: &mut Vec<ExpectedEvent>) {
        let cfg = &self.scenario.classifier;
        let last = self.scenario.frame_count().saturating_sub(1);
        let speed_at = |k: u64| {
            let t = self.scenario.timestamp(k);
            let (_, vx) = self.longitudinal(index, t);
            let (_, vy) = self.vehicles[index].lateral.state(t);
            Vec2::new(vx, vy).norm()
        };
        // speeds are non-increasing once braking starts, so standing never breaks
        let Some(since) = (0..=last).find(|&k| speed_at(k) < cfg.standing_speed) else {
            return;
        };
        let t_since = self.scenario.timestamp(since);
        let Some(open) = (since..=last).find(|&k| self.scenario.timestamp(k) - t_since >= cfg.standing_duration) else {
            return;
        };
        let (lane, lane_type) = self.lane_of(index, self.scenario.timestamp(open));
        let event_type = match lane_type {
            LaneType::Driving => EventType::StandingActiveLane,
            LaneType::Shoulder => {
                let upgraded = (open..=last).any(|k| self.scenario.timestamp(k) - t_since >= cfg.breakdown_duration);
                if upgraded {
                    EventType::Breakdown
                } else {
                    EventType::StandingShoulder
                }
            }
        };
        out.push(ExpectedEvent {
            event_type,
            track_ids: [self.vehicles[index].id].into(),
            trigger_frame: since,
            open_frame: open,
            end_frame: last,
            lane,
        });
    }

    pub fn ground_truth(&self) -> GroundTruth {
        let mut expected = Vec::new();
        let mut flag_table = Vec::new();
        let mut notices = self.notices.clone();
        let last = self.scenario.frame_count().saturating_sub(1);
        let cfg = &self.scenario.classifier;

        if self.scenario.scenario_type == ScenarioType::RearEnd {
            let follower_id = self.vehicles[0].id;
            for k in 0..=last {
                flag_table.push(FlagRow { track_id: follower_id, frame: k, flags: self.follower_flags(k) });
            }
            match self.rear_end_trigger_frame() {
                Some(trigger) => {
                    let run =
                        (trigger..=last).take_while(|&k| self.follower_flags(k).iter().all(|&x| x)).count() as u64;
                    if run >= u64::from(cfg.confirm_frames) {
                        let last_positive = trigger + run - 1;
                        let end = if last_positive + cfg.release_frames <= last { last_positive } else { last };
                        expected.push(ExpectedEvent {
                            event_type: EventType::Accident,
                            track_ids: [self.vehicles[0].id, self.vehicles[1].id].into(),
                            trigger_frame: trigger,
                            open_frame: trigger + u64::from(cfg.confirm_frames) - 1,
                            end_frame: end,
                            lane: 1,
                        });
                    } else {
                        notices.push(format!(
                            "all rules hold for only {run} frame(s) from frame {trigger}; below confirmation"
                        ));
                    }
                }
                None => notices.push("the six rules never hold simultaneously".to_string()),
            }
        }
        let designated = match self.scenario.scenario_type {
            ScenarioType::FreeFlow => 0,
            ScenarioType::RearEnd => 2,
            ScenarioType::ShoulderStop => 1,
            ScenarioType::StandingQueue => self.scenario.queue.queue_len as usize,
        };
        for i in 0..designated.min(self.vehicles.len()) {
            self.standing_events(i, &mut expected);
        }
        GroundTruth { scenario: self.scenario.clone(), expected, flag_table, notices }
    }
}

/// Earliest time the two vehicles touch (bumper gap reaches zero), if before `horizon`.
fn first_contact(follower: &SimVehicle, lead: &SimVehicle, horizon: f64) -> Option<f64> {
    let half = (follower.dims.length + lead.dims.length) / 2.0;
    let mut cuts: Vec<f64> = [0.0, horizon]
        .into_iter()
        .chain(follower.motion.breakpoints())
        .chain(lead.motion.breakpoints())
        .filter(|t| t.is_finite() && *t >= 0.0 && *t <= horizon)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (xf, vf) = follower.motion.state(a);
        let (xl, vl) = lead.motion.state(a);
        let gap = Quad {
            c0: xl - xf - half,
            c1: vl - vf,
            c2: 0.5 * (lead.motion.accel_on(a, b) - follower.motion.accel_on(a, b)),
        };
        if gap.c0 <= 0.0 {
            return Some(a);
        }
        if let Some(r) = gap.roots_in(b - a).into_iter().filter(|&r| gap.at(r * 0.5) > 0.0).reduce(f64::min) {
            return Some(a + r);
        }
    }
    None
}

/// Generate a scenario's full frame list and ground truth.
pub fn generate(scenario: &Scenario) -> Result<(LaneMap, Vec<Frame>, GroundTruth), ConfigError> {
    let sim = Simulation::new(scenario)?;
    let frames = sim.frames().collect();
    Ok((sim.lane_map().clone(), frames, sim.ground_truth()))
}
