use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{StreamError, StreamErrorKind};
use crate::trajectory::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventType {
    Accident,
    StandingActiveLane,
    StandingShoulder,
    Breakdown,
}

impl EventType {
    pub const ALL: [EventType; 4] =
        [EventType::Accident, EventType::StandingActiveLane, EventType::StandingShoulder, EventType::Breakdown];

    pub fn as_str(self) -> &'static str {
        match self {
            EventType::Accident => "ACCIDENT",
            EventType::StandingActiveLane => "STANDING_ACTIVE_LANE",
            EventType::StandingShoulder => "STANDING_SHOULDER",
            EventType::Breakdown => "BREAKDOWN",
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A detected traffic event.
///
/// `end` is `None` while the event is still open. `verified` and
/// `rule_support` are only set once rule-path and learned-path events have
/// been merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficEvent {
    #[serde(rename = "type")]
    pub event_type: EventType,
    #[serde(rename = "tracks")]
    pub track_ids: BTreeSet<u64>,
    pub start: u64,
    pub end: Option<u64>,
    pub lane: Option<u32>,
    pub confidence: f64,
    #[serde(rename = "sensors")]
    pub sensor_ids: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verified: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_support: Option<bool>,
    /// Map-frame location, when known.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "location")]
    pub location: Option<Vec2>,
}

mod location {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::trajectory::Vec2;

    pub fn serialize<S: Serializer>(v: &Option<Vec2>, s: S) -> Result<S::Ok, S::Error> {
        v.map(|p| [p.x, p.y]).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec2>, D::Error> {
        Ok(Option::<[f64; 2]>::deserialize(d)?.map(|[x, y]| Vec2::new(x, y)))
    }
}

impl TrafficEvent {
    pub fn new(event_type: EventType, start: u64) -> Self {
        Self {
            event_type,
            track_ids: BTreeSet::new(),
            start,
            end: None,
            lane: None,
            confidence: 1.0,
            sensor_ids: BTreeSet::new(),
            verified: None,
            rule_support: None,
            location: None,
        }
    }

    /// Last frame covered; open events count as ending at `start`.
    pub fn end_or_start(&self) -> u64 {
        self.end.unwrap_or(self.start)
    }

    pub fn span_len(&self) -> u64 {
        self.end_or_start().saturating_sub(self.start) + 1
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

pub fn write_events<'a, W: Write>(
    mut out: W,
    events: impl IntoIterator<Item = &'a TrafficEvent>,
) -> std::io::Result<()> {
    for e in events {
        writeln!(out, "{}", e.to_line())?;
    }
    Ok(())
}

pub fn read_events<R: BufRead>(reader: R) -> Result<Vec<TrafficEvent>, StreamError> {
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| StreamError { line: i + 1, kind: StreamErrorKind::Io(e.to_string()) })?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line)
            .map_err(|e| StreamError { line: i + 1, kind: StreamErrorKind::Json(e.to_string()) })?;
        events.push(event);
    }
    Ok(events)
}

/// Event counts per type, in the fixed type order.
pub fn count_by_type(events: &[TrafficEvent]) -> [(EventType, usize); 4] {
    EventType::ALL.map(|t| (t, events.iter().filter(|e| e.event_type == t).count()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_format() {
        let mut e = TrafficEvent::new(EventType::StandingActiveLane, 12);
        e.end = Some(40);
        e.lane = Some(2);
        e.track_ids.insert(7);
        e.sensor_ids.insert("cam".into());
        assert_eq!(
            e.to_line(),
            r#"{"type":"STANDING_ACTIVE_LANE","tracks":[7],"start":12,"end":40,"lane":2,"confidence":1.0,"sensors":["cam"]}"#
        );
        e.location = Some(Vec2::new(1.5, -2.0));
        e.verified = Some(false);
        let back: TrafficEvent = serde_json::from_str(&e.to_line()).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn read_reports_line_numbers() {
        let text = "{\"type\":\"ACCIDENT\",\"tracks\":[],\"start\":1,\"end\":2,\"lane\":null,\"confidence\":0.5,\"sensors\":[]}\n\nnope\n";
        let err = read_events(text.as_bytes()).unwrap_err();
        assert_eq!(err.line, 3);
        let ok = read_events(&text.as_bytes()[..text.find("\n\n").unwrap()]).unwrap();
        assert_eq!(ok.len(), 1);
        assert_eq!(count_by_type(&ok)[0], (EventType::Accident, 1));
    }
}
