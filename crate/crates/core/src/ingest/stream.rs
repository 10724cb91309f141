//! Line-delimited trajectory stream: one JSON frame per line.
//!
//! ```text
//! {"frame": 0, "t": 0.0, "sensor": "s110_n", "objects": [
//!     {"id": 1, "cat": "car", "x": 1.0, "y": 2.0, "z": 0.0,
//!      "l": 4.5, "w": 1.8, "h": 1.5, "yaw": 0.0, "vx": 30.0, "vy": 0.0}]}
//! ```
//!
//! `vx`/`vy` are optional. Unknown keys are ignored.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{StreamError, StreamErrorKind};
use crate::trajectory::{Category, Dimensions, Frame, TrackedObject, Vec2};

/// Nominal stream period (25 lines per second).
pub const NOMINAL_PERIOD: f64 = 1.0 / 25.0;

#[derive(Debug, Serialize, Deserialize)]
struct FrameLine {
    frame: u64,
    t: f64,
    sensor: String,
    objects: Vec<ObjectLine>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ObjectLine {
    id: u64,
    cat: String,
    x: f64,
    y: f64,
    z: f64,
    l: f64,
    w: f64,
    h: f64,
    yaw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vy: Option<f64>,
}

/// Serialize one frame as a single JSONL line (without the trailing newline).
pub fn frame_to_line(frame: &Frame) -> String {
    let line = FrameLine {
        frame: frame.frame_index,
        t: frame.timestamp,
        sensor: frame.sensor_id.clone(),
        objects: frame
            .objects
            .iter()
            .map(|o| ObjectLine {
                id: o.track_id,
                cat: o.category.as_str().to_string(),
                x: o.position[0],
                y: o.position[1],
                z: o.position[2],
                l: o.dimensions.length,
                w: o.dimensions.width,
                h: o.dimensions.height,
                yaw: o.yaw,
                vx: o.velocity.map(|v| v.x),
                vy: o.velocity.map(|v| v.y),
            })
            .collect(),
    };
    serde_json::to_string(&line).expect("frame serializes")
}

pub fn write_frames<'a, W: Write>(mut out: W, frames: impl IntoIterator<Item = &'a Frame>) -> std::io::Result<()> {
    for f in frames {
        writeln!(out, "{}", frame_to_line(f))?;
    }
    Ok(())
}

/// Parse a single line without any cross-frame validation.
pub fn parse_frame_line(text: &str) -> Result<Frame, StreamErrorKind> {
    let raw: FrameLine = serde_json::from_str(text).map_err(|e| StreamErrorKind::Json(e.to_string()))?;
    let mut objects = Vec::with_capacity(raw.objects.len());
    for o in raw.objects {
        let category: Category = o.cat.parse().map_err(StreamErrorKind::UnknownCategory)?;
        let velocity = match (o.vx, o.vy) {
            (Some(x), Some(y)) => Some(Vec2::new(x, y)),
            _ => None,
        };
        objects.push(TrackedObject::new(
            o.id,
            category,
            [o.x, o.y, o.z],
            Dimensions::new(o.l, o.w, o.h),
            o.yaw,
            velocity,
        )?);
    }
    Ok(Frame { frame_index: raw.frame, timestamp: raw.t, sensor_id: raw.sensor, objects })
}

/// Streaming reader over a trajectory JSONL source.
///
/// Frames are validated incrementally: strictly increasing frame index,
/// non-decreasing timestamps within 10x the nominal period, and unique
/// track ids per frame. Blank lines are skipped. After the first error the
/// iterator is fused.
pub struct TrajectoryReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    previous: Option<(u64, f64)>,
    nominal_period: Option<f64>,
    failed: bool,
}

impl<R: BufRead> TrajectoryReader<R> {
    pub fn new(reader: R) -> Self {
        Self { lines: reader.lines(), line_no: 0, previous: None, nominal_period: Some(NOMINAL_PERIOD), failed: false }
    }

    /// Override the nominal period used by the gap check; `None` disables it.
    pub fn with_nominal_period(mut self, period: Option<f64>) -> Self {
        self.nominal_period = period;
        self
    }

    fn validate(&mut self, frame: &Frame) -> Result<(), StreamErrorKind> {
        if let Some((prev_idx, prev_t)) = self.previous {
            if frame.frame_index <= prev_idx {
                return Err(StreamErrorKind::FrameIndex { previous: prev_idx, index: frame.frame_index });
            }
            // NaN timestamps fail this comparison too
            if frame.timestamp.partial_cmp(&prev_t).is_none_or(|o| o.is_lt()) {
                return Err(StreamErrorKind::Timestamp { previous: prev_t, t: frame.timestamp });
            }
            if let Some(period) = self.nominal_period {
                let delta = frame.timestamp - prev_t;
                if delta > 10.0 * period {
                    return Err(StreamErrorKind::TimestampGap { delta, period });
                }
            }
        }
        let mut seen = HashSet::with_capacity(frame.objects.len());
        for o in &frame.objects {
            if !seen.insert(o.track_id) {
                return Err(StreamErrorKind::DuplicateTrack(o.track_id));
            }
        }
        self.previous = Some((frame.frame_index, frame.timestamp));
        Ok(())
    }
}

impl<R: BufRead> Iterator for TrajectoryReader<R> {
    type Item = Result<Frame, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            let line_no = self.line_no;
            let result = line
                .map_err(|e| StreamErrorKind::Io(e.to_string()))
                .and_then(|text| if text.trim().is_empty() { Ok(None) } else { parse_frame_line(&text).map(Some) })
                .and_then(|frame| match frame {
                    Some(f) => self.validate(&f).map(|_| Some(f)),
                    None => Ok(None),
                });
            match result {
                Ok(None) => continue,
                Ok(Some(frame)) => return Some(Ok(frame)),
                Err(kind) => {
                    self.failed = true;
                    return Some(Err(StreamError { line: line_no, kind }));
                }
            }
        }
    }
}

/// Convenience wrapper over [`TrajectoryReader`].
pub fn parse_trajectory_stream<R: BufRead>(reader: R) -> TrajectoryReader<R> {
    TrajectoryReader::new(reader)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TWO_LINES: &str = r#"{"frame": 10, "t": 0.4, "sensor": "cam_n", "objects": [{"id": 1, "cat": "car", "x": 1.5, "y": -2.0, "z": 0.7, "l": 4.4, "w": 1.8, "h": 1.5, "yaw": 0.1, "vx": 25.0, "vy": 0.5, "extra": "ignored"}]}
{"frame": 11, "t": 0.44, "sensor": "cam_n", "objects": [{"id": 1, "cat": "car", "x": 2.5, "y": -2.0, "z": 0.7, "l": 4.4, "w": 1.8, "h": 1.5, "yaw": 0.1}, {"id": 2, "cat": "truck", "x": 40.0, "y": -2.0, "z": 1.5, "l": 12.0, "w": 2.5, "h": 3.5, "yaw": 0.0}]}
"#;

    #[test]
    fn empty_input_yields_nothing() {
        assert_eq!(parse_trajectory_stream("".as_bytes()).count(), 0);
        assert_eq!(parse_trajectory_stream("\n  \n".as_bytes()).count(), 0);
    }

    #[test]
    fn two_line_fixture() {
        let frames: Vec<Frame> = parse_trajectory_stream(TWO_LINES.as_bytes()).collect::<Result<_, _>>().unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].timestamp, 0.4);
        assert_eq!(frames[1].timestamp, 0.44);
        assert_eq!(frames[0].objects[0].velocity, Some(Vec2::new(25.0, 0.5)));
        assert_eq!(frames[1].objects[0].velocity, None);
        assert_eq!(frames[1].objects[1].category, Category::Truck);
    }

    #[test]
    fn duplicate_track_is_reported_with_line() {
        let text = r#"{"frame": 1, "t": 0.0, "sensor": "a", "objects": []}
{"frame": 2, "t": 0.04, "sensor": "a", "objects": [{"id": 5, "cat": "car", "x": 0, "y": 0, "z": 0, "l": 4, "w": 2, "h": 1.5, "yaw": 0}, {"id": 5, "cat": "van", "x": 9, "y": 0, "z": 0, "l": 5, "w": 2, "h": 2, "yaw": 0}]}
{"frame": 3, "t": 0.08, "sensor": "a", "objects": []}
"#;
        let items: Vec<_> = parse_trajectory_stream(text.as_bytes()).collect();
        assert_eq!(items.len(), 2);
        assert_eq!(items[1].clone().unwrap_err(), StreamError { line: 2, kind: StreamErrorKind::DuplicateTrack(5) });
    }

    #[test]
    fn ordering_violations() {
        let text = "{\"frame\": 4, \"t\": 1.0, \"sensor\": \"a\", \"objects\": []}\n\
                    {\"frame\": 4, \"t\": 1.04, \"sensor\": \"a\", \"objects\": []}\n";
        let err = parse_trajectory_stream(text.as_bytes()).find_map(Result::err).unwrap();
        assert_eq!(err.line, 2);
        assert!(matches!(err.kind, StreamErrorKind::FrameIndex { .. }));

        let text = "{\"frame\": 4, \"t\": 1.0, \"sensor\": \"a\", \"objects\": []}\n\
                    {\"frame\": 5, \"t\": 0.9, \"sensor\": \"a\", \"objects\": []}\n";
        let err = parse_trajectory_stream(text.as_bytes()).find_map(Result::err).unwrap();
        assert!(matches!(err.kind, StreamErrorKind::Timestamp { .. }));

        let text = "{\"frame\": 4, \"t\": 1.0, \"sensor\": \"a\", \"objects\": []}\n\
                    {\"frame\": 5, \"t\": 2.0, \"sensor\": \"a\", \"objects\": []}\n";
        let err = parse_trajectory_stream(text.as_bytes()).find_map(Result::err).unwrap();
        assert!(matches!(err.kind, StreamErrorKind::TimestampGap { .. }));
        assert!(parse_trajectory_stream(text.as_bytes()).with_nominal_period(None).all(|r| r.is_ok()));
    }

    #[test]
    fn bad_lines() {
        let err = parse_trajectory_stream("{not json}\n".as_bytes()).next().unwrap().unwrap_err();
        assert!(matches!(err.kind, StreamErrorKind::Json(_)));
        let text = r#"{"frame": 1, "t": 0.0, "sensor": "a", "objects": [{"id": 5, "cat": "tank", "x": 0, "y": 0, "z": 0, "l": 4, "w": 2, "h": 1.5, "yaw": 0}]}"#;
        let err = parse_trajectory_stream(text.as_bytes()).next().unwrap().unwrap_err();
        assert_eq!(err.kind, StreamErrorKind::UnknownCategory("tank".into()));
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e6..1e6f64, Just(0.0), Just(-0.0), Just(1e-300), Just(f64::MAX)]
    }

    fn object() -> impl Strategy<Value = TrackedObject> {
        (
            any::<u64>(),
            proptest::sample::select(Category::ALL.to_vec()),
            [finite(), finite(), finite()],
            (1e-3..50.0f64, 1e-3..5.0f64, 1e-3..5.0f64),
            -std::f64::consts::PI..std::f64::consts::PI,
            proptest::option::of((finite(), finite())),
        )
            .prop_map(|(id, cat, pos, (l, w, h), yaw, v)| {
                TrackedObject::new(id, cat, pos, Dimensions::new(l, w, h), yaw, v.map(|(x, y)| Vec2::new(x, y)))
                    .unwrap()
            })
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(
            idx in any::<u64>(),
            t in finite(),
            sensor in "[a-z0-9_\\-\"\\\\ ]{0,12}",
            objects in proptest::collection::vec(object(), 0..6),
        ) {
            let frame = Frame { frame_index: idx, timestamp: t, sensor_id: sensor, objects };
            let parsed = parse_frame_line(&frame_to_line(&frame)).unwrap();
            // bit-exact comparison, including the sign of zero
            prop_assert_eq!(parsed.frame_index, frame.frame_index);
            prop_assert_eq!(parsed.timestamp.to_bits(), frame.timestamp.to_bits());
            prop_assert_eq!(&parsed.sensor_id, &frame.sensor_id);
            prop_assert_eq!(parsed.objects.len(), frame.objects.len());
            for (a, b) in parsed.objects.iter().zip(&frame.objects) {
                prop_assert_eq!(a.track_id, b.track_id);
                prop_assert_eq!(a.category, b.category);
                for i in 0..3 {
                    prop_assert_eq!(a.position[i].to_bits(), b.position[i].to_bits());
                }
                prop_assert_eq!(a.dimensions.length.to_bits(), b.dimensions.length.to_bits());
                prop_assert_eq!(a.dimensions.width.to_bits(), b.dimensions.width.to_bits());
                prop_assert_eq!(a.dimensions.height.to_bits(), b.dimensions.height.to_bits());
                prop_assert_eq!(a.yaw.to_bits(), b.yaw.to_bits());
                prop_assert_eq!(a.velocity.map(|v| (v.x.to_bits(), v.y.to_bits())),
                                b.velocity.map(|v| (v.x.to_bits(), v.y.to_bits())));
            }
        }
    }
}
