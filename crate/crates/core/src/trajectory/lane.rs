use serde::{Deserialize, Serialize};

use super::Vec2;
use crate::error::GeometryError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaneType {
    Driving,
    Shoulder,
}

/// A lane described by its centerline polyline and a constant width.
///
/// The centerline is ordered in the direction of travel. Positive lateral
/// offsets are to the left of that direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    id: u32,
    lane_type: LaneType,
    width: f64,
    centerline: Vec<Vec2>,
    /// Arc-length at each centerline vertex; `cumulative[0] == 0`.
    cumulative: Vec<f64>,
}

/// Closest point on a lane centerline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub s: f64,
    pub lateral_offset: f64,
    pub point: Vec2,
}

impl Lane {
    pub fn new(id: u32, lane_type: LaneType, width: f64, centerline: Vec<Vec2>) -> Result<Self, GeometryError> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(GeometryError::BadWidth { lane_id: id, width });
        }
        if centerline.len() < 2 {
            return Err(GeometryError::TooFewPoints { lane_id: id, count: centerline.len() });
        }
        if !centerline.iter().all(|p| p.is_finite()) {
            return Err(GeometryError::NonFinite { lane_id: id });
        }
        let mut cumulative = Vec::with_capacity(centerline.len());
        cumulative.push(0.0);
        for (i, w) in centerline.windows(2).enumerate() {
            let len = w[0].distance(w[1]);
            let next = cumulative[i] + len;
            if len <= 0.0 || next <= cumulative[i] {
                return Err(GeometryError::DegenerateSegment { lane_id: id, index: i, next: i + 1 });
            }
            cumulative.push(next);
        }
        Ok(Self { id, lane_type, width, centerline, cumulative })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn lane_type(&self) -> LaneType {
        self.lane_type
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn centerline(&self) -> &[Vec2] {
        &self.centerline
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().expect("centerline has >= 2 points")
    }

    /// Segment-wise orthogonal projection clamped to segment ends. On ties the
    /// earliest segment wins.
    pub fn project(&self, p: Vec2) -> Projection {
        let mut best: Option<(f64, Projection)> = None;
        for (i, w) in self.centerline.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            let d = b - a;
            let seg_len = self.cumulative[i + 1] - self.cumulative[i];
            let t = ((p - a).dot(d) / d.dot(d)).clamp(0.0, 1.0);
            let q = a + d * t;
            let dist = p.distance(q);
            if best.as_ref().is_none_or(|(bd, _)| dist < *bd) {
                let side = if d.cross(p - q) < 0.0 { -1.0 } else { 1.0 };
                best = Some((
                    dist,
                    Projection {
                        s: (self.cumulative[i] + t * seg_len).min(self.length()),
                        lateral_offset: side * dist,
                        point: q,
                    },
                ));
            }
        }
        best.expect("centerline has >= 1 segment").1
    }

    /// Centerline point and unit direction at arc-length `s` (clamped).
    pub fn point_at(&self, s: f64) -> (Vec2, Vec2) {
        let s = s.clamp(0.0, self.length());
        let i = match self.cumulative.partition_point(|&c| c <= s) {
            0 => 0,
            n => (n - 1).min(self.centerline.len() - 2),
        };
        let (a, b) = (self.centerline[i], self.centerline[i + 1]);
        let seg_len = self.cumulative[i + 1] - self.cumulative[i];
        let dir = (b - a) * (1.0 / seg_len);
        (a + dir * (s - self.cumulative[i]), dir)
    }

    fn transformed(&self, rotation: f64, translation: Vec2) -> Lane {
        Lane { centerline: self.centerline.iter().map(|p| p.rotate(rotation) + translation).collect(), ..self.clone() }
    }
}

/// A vehicle's position expressed relative to one lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneAssignment {
    pub lane_id: u32,
    pub lane_type: LaneType,
    pub s: f64,
    pub lateral_offset: f64,
    pub on_lane: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneMap {
    lanes: Vec<Lane>,
}

#[derive(Serialize, Deserialize)]
struct LaneMapFile {
    lanes: Vec<LaneFile>,
}

#[derive(Serialize, Deserialize)]
struct LaneFile {
    id: u32,
    #[serde(rename = "type")]
    lane_type: LaneType,
    width: f64,
    centerline: Vec<[f64; 2]>,
}

impl LaneMap {
    pub fn new(lanes: Vec<Lane>) -> Result<Self, GeometryError> {
        if lanes.is_empty() {
            return Err(GeometryError::EmptyMap);
        }
        let mut ids: Vec<u32> = lanes.iter().map(Lane::id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(GeometryError::DuplicateLane(w[0]));
        }
        Ok(Self { lanes })
    }

    pub fn from_json(text: &str) -> Result<Self, GeometryError> {
        let file: LaneMapFile = serde_json::from_str(text).map_err(|e| GeometryError::Json(e.to_string()))?;
        let lanes = file
            .lanes
            .into_iter()
            .map(|l| {
                Lane::new(l.id, l.lane_type, l.width, l.centerline.into_iter().map(|[x, y]| Vec2::new(x, y)).collect())
            })
            .collect::<Result<Vec<_>, _>>()?;
        LaneMap::new(lanes)
    }

    pub fn to_json(&self) -> String {
        let file = LaneMapFile {
            lanes: self
                .lanes
                .iter()
                .map(|l| LaneFile {
                    id: l.id,
                    lane_type: l.lane_type,
                    width: l.width,
                    centerline: l.centerline.iter().map(|p| [p.x, p.y]).collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("lane map serializes")
    }

    pub fn lanes(&self) -> &[Lane] {
        &self.lanes
    }

    pub fn lane(&self, id: u32) -> Option<&Lane> {
        self.lanes.iter().find(|l| l.id == id)
    }

    /// Same map after rotating by `rotation` radians about the origin, then translating.
    pub fn transformed(&self, rotation: f64, translation: Vec2) -> LaneMap {
        LaneMap { lanes: self.lanes.iter().map(|l| l.transformed(rotation, translation)).collect() }
    }
}

/// Assign a ground point to the lane whose centerline is laterally closest,
/// among lanes the point actually lies on. Ties go to the lowest lane id.
/// `None` means the point is off every lane.
pub fn assign_lane(position: Vec2, lane_map: &LaneMap) -> Option<LaneAssignment> {
    let mut best: Option<LaneAssignment> = None;
    for lane in &lane_map.lanes {
        let proj = lane.project(position);
        if proj.lateral_offset.abs() > lane.width / 2.0 {
            continue;
        }
        let candidate = LaneAssignment {
            lane_id: lane.id,
            lane_type: lane.lane_type,
            s: proj.s,
            lateral_offset: proj.lateral_offset,
            on_lane: true,
        };
        let better = match &best {
            None => true,
            Some(b) => {
                let (ca, ba) = (candidate.lateral_offset.abs(), b.lateral_offset.abs());
                ca < ba || (ca == ba && candidate.lane_id < b.lane_id)
            }
        };
        if better {
            best = Some(candidate);
        }
    }
    best
}
