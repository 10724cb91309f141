//! Frames, tracked objects and the lane geometry every other module reads.

mod lane;
mod velocity;

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

pub use lane::{assign_lane, Lane, LaneAssignment, LaneMap, LaneType, Projection};
pub use velocity::{estimate_velocity, VelocityTracker, DEFAULT_SMOOTHING};

/// 2D point or vector in the map frame (meters, or m/s for velocities).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product; positive when `other` is to the left of `self`.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

/// The ten object classes of the roadside dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Car,
    Truck,
    Bus,
    Trailer,
    Van,
    Pedestrian,
    Motorcycle,
    Bicycle,
    EmergencyVehicle,
    Other,
}

impl Category {
    pub const ALL: [Category; 10] = [
        Category::Car,
        Category::Truck,
        Category::Bus,
        Category::Trailer,
        Category::Van,
        Category::Pedestrian,
        Category::Motorcycle,
        Category::Bicycle,
        Category::EmergencyVehicle,
        Category::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Car => "car",
            Category::Truck => "truck",
            Category::Bus => "bus",
            Category::Trailer => "trailer",
            Category::Van => "van",
            Category::Pedestrian => "pedestrian",
            Category::Motorcycle => "motorcycle",
            Category::Bicycle => "bicycle",
            Category::EmergencyVehicle => "emergency_vehicle",
            Category::Other => "other",
        }
    }

    /// Categories the maneuver rules apply to. Pedestrians and bicycles are exempt.
    pub fn is_vehicle(self) -> bool {
        !matches!(self, Category::Pedestrian | Category::Bicycle)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    /// Case-insensitive; accepts `-`, `_` and space as word separators.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .chars()
            .map(|c| match c {
                '-' | ' ' => '_',
                c => c.to_ascii_lowercase(),
            })
            .collect();
        Category::ALL.into_iter().find(|c| c.as_str() == norm).ok_or_else(|| s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dimensions {
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

impl Dimensions {
    pub const fn new(length: f64, width: f64, height: f64) -> Self {
        Self { length, width, height }
    }
}

/// Wrap an angle into `[-π, π)`.
pub fn normalize_yaw(yaw: f64) -> f64 {
    if (-PI..PI).contains(&yaw) {
        return yaw;
    }
    let wrapped = (yaw + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2π
    if wrapped >= PI {
        -PI
    } else {
        wrapped
    }
}

/// One object observation in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedObject {
    pub track_id: u64,
    pub category: Category,
    /// Box center in the map frame: x, y, z.
    pub position: [f64; 3],
    pub dimensions: Dimensions,
    /// Heading in `[-π, π)`.
    pub yaw: f64,
    pub velocity: Option<Vec2>,
}

impl TrackedObject {
    /// Validates dimensions and pose; the yaw is wrapped into `[-π, π)`.
    pub fn new(
        track_id: u64,
        category: Category,
        position: [f64; 3],
        dimensions: Dimensions,
        yaw: f64,
        velocity: Option<Vec2>,
    ) -> Result<Self, GeometryError> {
        let Dimensions { length, width, height } = dimensions;
        if !(length > 0.0 && width > 0.0 && height > 0.0)
            || !(length.is_finite() && width.is_finite() && height.is_finite())
        {
            return Err(GeometryError::BadDimensions { track_id, length, width, height });
        }
        if !position.iter().all(|v| v.is_finite()) || !yaw.is_finite() || velocity.is_some_and(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinitePose { track_id });
        }
        Ok(Self { track_id, category, position, dimensions, yaw: normalize_yaw(yaw), velocity })
    }

    pub fn ground_position(&self) -> Vec2 {
        Vec2::new(self.position[0], self.position[1])
    }

    /// Scalar speed, the Euclidean norm of the velocity. Objects without a
    /// velocity are treated as stationary.
    pub fn speed(&self) -> f64 {
        self.velocity.map_or(0.0, Vec2::norm)
    }
}

/// All objects seen by one sensor at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_index: u64,
    /// Seconds.
    pub timestamp: f64,
    pub sensor_id: String,
    pub objects: Vec<TrackedObject>,
}

impl Frame {
    pub fn new(frame_index: u64, timestamp: f64, sensor_id: impl Into<String>) -> Self {
        Self { frame_index, timestamp, sensor_id: sensor_id.into(), objects: Vec::new() }
    }

    pub fn object(&self, track_id: u64) -> Option<&TrackedObject> {
        self.objects.iter().find(|o| o.track_id == track_id)
    }

    /// First track id that appears twice, if any.
    pub fn duplicate_track(&self) -> Option<u64> {
        let mut ids: Vec<u64> = self.objects.iter().map(|o| o.track_id).collect();
        ids.sort_unstable();
        ids.windows(2).find(|w| w[0] == w[1]).map(|w| w[0])
    }
}
