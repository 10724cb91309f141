//! Subset reader for OpenLABEL annotation files.
//!
//! Only what trajectories need is read: `openlabel.frames`, the per-frame
//! object entries, their cuboids, and 2D boxes (counted, not kept).
//! Cuboids are taken as center-origin: `val` is either
//! `[x, y, z, qx, qy, qz, qw, l, w, h]` (quaternion) or
//! `[x, y, z, rx, ry, rz, l, w, h]` (Euler angles, yaw = `rz`).

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{Map, Value};

use super::stats::RawCounts;
use crate::error::IngestError;
use crate::trajectory::{Category, Dimensions, Frame, TrackedObject, Vec2};

/// Frame period assumed when a frame carries no timestamp (10 Hz).
pub const DEFAULT_FRAME_PERIOD: f64 = 0.1;

/// Non-numeric object keys are mapped to ids starting here, in first-seen order.
pub const INTERNED_ID_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct OpenLabelDocument {
    pub frames: Vec<Frame>,
    pub counts: RawCounts,
}

fn byte_offset(text: &[u8], line: usize, column: usize) -> usize {
    let mut offset = 0;
    let mut current = 1;
    if line > 1 {
        for (i, &b) in text.iter().enumerate() {
            if b == b'\n' {
                current += 1;
                if current == line {
                    offset = i + 1;
                    break;
                }
            }
        }
    }
    (offset + column.saturating_sub(1)).min(text.len())
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// `x` may be a single entry or an array of entries.
fn entries(v: Option<&Value>) -> Vec<&Value> {
    match v {
        None | Some(Value::Null) => vec![],
        Some(Value::Array(a)) => a.iter().collect(),
        Some(other) => vec![other],
    }
}

fn quaternion_yaw(qx: f64, qy: f64, qz: f64, qw: f64) -> f64 {
    (2.0 * (qw * qz + qx * qy)).atan2(1.0 - 2.0 * (qy * qy + qz * qz))
}

struct Cuboid {
    position: [f64; 3],
    yaw: f64,
    dimensions: Dimensions,
}

fn parse_cuboid(entry: &Value) -> Option<Cuboid> {
    let val: Vec<f64> = entry.get("val")?.as_array()?.iter().map(as_f64).collect::<Option<_>>()?;
    match val.len() {
        10 => Some(Cuboid {
            position: [val[0], val[1], val[2]],
            yaw: quaternion_yaw(val[3], val[4], val[5], val[6]),
            dimensions: Dimensions::new(val[7], val[8], val[9]),
        }),
        9 => Some(Cuboid {
            position: [val[0], val[1], val[2]],
            yaw: val[5],
            dimensions: Dimensions::new(val[6], val[7], val[8]),
        }),
        _ => None,
    }
}

fn category_of(entry: &Value, globals: Option<&Map<String, Value>>, key: &str) -> Category {
    let local = entry.get("object_data").and_then(|d| d.get("type")).or_else(|| entry.get("type"));
    let global = globals.and_then(|g| g.get(key)).and_then(|o| o.get("type"));
    local.or(global).and_then(Value::as_str).and_then(|s| s.parse().ok()).unwrap_or(Category::Other)
}

fn sensor_of(props: Option<&Value>) -> String {
    props
        .and_then(|p| p.get("streams"))
        .and_then(Value::as_object)
        .and_then(|s| s.keys().next().cloned())
        .unwrap_or_else(|| "openlabel".to_string())
}

/// Parse an OpenLABEL document into frames plus raw annotation counts.
pub fn parse_openlabel(document: &[u8]) -> Result<OpenLabelDocument, IngestError> {
    let root: Value = serde_json::from_slice(document).map_err(|e| IngestError::Parse {
        offset: byte_offset(document, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let ol = root.get("openlabel").ok_or_else(|| IngestError::Format("missing top-level \"openlabel\" key".into()))?;
    let globals = ol.get("objects").and_then(Value::as_object);
    let frames_map = match ol.get("frames") {
        None | Some(Value::Null) => Map::new(),
        Some(Value::Object(m)) => m.clone(),
        Some(_) => return Err(IngestError::Format("\"frames\" must be an object".into())),
    };

    let mut keyed: Vec<(u64, &Value)> = Vec::with_capacity(frames_map.len());
    for (k, v) in &frames_map {
        let idx: u64 = k.trim().parse().map_err(|_| IngestError::Format(format!("non-numeric frame key {k:?}")))?;
        keyed.push((idx, v));
    }
    keyed.sort_by_key(|(idx, _)| *idx);
    if let Some(w) = keyed.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(IngestError::Format(format!("duplicate frame index {}", w[0].0)));
    }

    let mut interned: BTreeMap<String, u64> = BTreeMap::new();
    let mut track_id = |key: &str| -> u64 {
        if let Ok(n) = key.trim().parse::<u64>() {
            return n;
        }
        let next = INTERNED_ID_BASE + interned.len() as u64;
        *interned.entry(key.to_string()).or_insert(next)
    };

    let mut counts = RawCounts::default();
    let mut tracks = BTreeSet::new();
    let mut frames = Vec::with_capacity(keyed.len());
    for (idx, body) in keyed {
        let props = body.get("frame_properties");
        let timestamp =
            props.and_then(|p| p.get("timestamp")).and_then(as_f64).unwrap_or(idx as f64 * DEFAULT_FRAME_PERIOD);
        let mut frame = Frame::new(idx, timestamp, sensor_of(props));
        let objects = body.get("objects").and_then(Value::as_object);
        for (key, entry) in objects.into_iter().flatten() {
            let id = track_id(key);
            let category = category_of(entry, globals, key);
            let data = entry.get("object_data");
            let cuboids = entries(data.and_then(|d| d.get("cuboid")));
            let bboxes = entries(data.and_then(|d| d.get("bbox")));
            counts.box3d += cuboids.len() as u64;
            counts.box2d += bboxes.len() as u64;
            *counts.per_class.entry(category).or_default() += 1;
            tracks.insert(id);

            let Some(cuboid) = cuboids.iter().find_map(|c| parse_cuboid(c)) else {
                continue;
            };
            let velocity = data
                .and_then(|d| d.get("velocity"))
                .and_then(|v| Some(Vec2::new(as_f64(v.get(0)?)?, as_f64(v.get(1)?)?)));
            let obj = TrackedObject::new(id, category, cuboid.position, cuboid.dimensions, cuboid.yaw, velocity)
                .map_err(|e| IngestError::Format(format!("frame {idx}, object {key:?}: {e}")))?;
            frame.objects.push(obj);
        }
        frames.push(frame);
    }
    counts.tracks = tracks;
    Ok(OpenLabelDocument { frames, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quaternion_yaw_about_z() {
        let half = 0.3_f64;
        let yaw = quaternion_yaw(0.0, 0.0, half.sin(), half.cos());
        assert!((yaw - 0.6).abs() < 1e-12);
    }

    #[test]
    fn parse_error_has_byte_offset() {
        let doc = b"{\"openlabel\": {\n  \"frames\": {,}}}";
        match parse_openlabel(doc).unwrap_err() {
            IngestError::Parse { offset, .. } => assert_eq!(doc[offset], b','),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn missing_root_and_bad_keys() {
        assert!(matches!(parse_openlabel(b"{\"frames\": {}}"), Err(IngestError::Format(_))));
        assert!(matches!(parse_openlabel(br#"{"openlabel": {"frames": {"abc": {}}}}"#), Err(IngestError::Format(_))));
    }

    #[test]
    fn empty_frames() {
        let doc = parse_openlabel(br#"{"openlabel": {"frames": {}}}"#).unwrap();
        assert!(doc.frames.is_empty());
        let doc = parse_openlabel(br#"{"openlabel": {"metadata": {}}}"#).unwrap();
        assert!(doc.frames.is_empty());
    }

    #[test]
    fn uuid_keys_are_interned_and_frames_sorted_numerically() {
        let doc = br#"{"openlabel": {"frames": {
            "10": {"objects": {"b-uuid": {"object_data": {"type": "VAN", "cuboid": {"name": "shape3D", "val": [1,2,3, 0,0,0,1, 5,2,2]}}}}},
            "9":  {"objects": {"a-uuid": {"object_data": {"type": "CAR", "cuboid": {"name": "shape3D", "val": [1,2,3, 0,0,0,1, 4,2,1.5]}}},
                               "b-uuid": {"object_data": {"type": "VAN", "cuboid": {"name": "shape3D", "val": [0,2,3, 0,0,0,1, 5,2,2]}}}}}
        }}}"#;
        let parsed = parse_openlabel(doc).unwrap();
        assert_eq!(parsed.frames[0].frame_index, 9);
        assert_eq!(parsed.frames[1].frame_index, 10);
        let a = parsed.frames[0].objects[0].track_id;
        let b = parsed.frames[0].objects[1].track_id;
        assert_eq!((a, b), (INTERNED_ID_BASE, INTERNED_ID_BASE + 1));
        assert_eq!(parsed.frames[1].objects[0].track_id, b);
        assert_eq!(parsed.frames[0].timestamp, 0.9);
    }
}
