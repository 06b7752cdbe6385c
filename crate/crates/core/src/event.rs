//! The append-only event record.
//!
//! On the wire each event is one JSON object with the fields `seq`, `t`,
//! `kind`, `subject` and `detail`, where `detail` depends on `kind`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::protocol::{Direction, SignMode};
use crate::signboard::LightColor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail")]
pub enum EventBody {
    PulseSent {
        period_ms: f64,
        direction: Direction,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<String>,
    },
    PulseReceived {
        period_ms: f64,
        mode: SignMode,
        from: String,
    },
    FrameRejected {
        /// `None` when the period was not a finite number.
        period_ms: Option<f64>,
        from: String,
        reason: String,
    },
    AlertRaised {
        speed_mps: f64,
        clamp_mps: f64,
        deadline_s: f64,
    },
    AlertCleared {
        speed_mps: f64,
        clamp_mps: f64,
    },
    AutoBrakeEngaged {
        speed_mps: f64,
        clamp_mps: f64,
    },
    AutoBrakeReleased {
        position_m: f64,
    },
    SpeedClamped {
        mode: SignMode,
        clamp_mps: f64,
    },
    LightChanged {
        previous: LightColor,
        light: LightColor,
        period_ms: f64,
        source: String,
    },
    VehicleCrossedBoard {
        board: String,
        position_m: f64,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::PulseSent { .. } => "PulseSent",
            EventBody::PulseReceived { .. } => "PulseReceived",
            EventBody::FrameRejected { .. } => "FrameRejected",
            EventBody::AlertRaised { .. } => "AlertRaised",
            EventBody::AlertCleared { .. } => "AlertCleared",
            EventBody::AutoBrakeEngaged { .. } => "AutoBrakeEngaged",
            EventBody::AutoBrakeReleased { .. } => "AutoBrakeReleased",
            EventBody::SpeedClamped { .. } => "SpeedClamped",
            EventBody::LightChanged { .. } => "LightChanged",
            EventBody::VehicleCrossedBoard { .. } => "VehicleCrossedBoard",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WireEvent", into = "WireEvent")]
pub struct SimEvent {
    pub seq: u64,
    pub t: f64,
    pub subject: String,
    pub body: EventBody,
}

impl SimEvent {
    /// An event not yet placed in a log; the log assigns `seq` on append.
    pub fn new(t: f64, subject: impl Into<String>, body: EventBody) -> Self {
        Self {
            seq: 0,
            t,
            subject: subject.into(),
            body,
        }
    }

    pub fn kind(&self) -> &'static str {
        self.body.kind()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("event serialization is infallible")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireEvent {
    seq: u64,
    t: f64,
    kind: String,
    subject: String,
    detail: Value,
}

impl TryFrom<WireEvent> for SimEvent {
    type Error = serde_json::Error;

    fn try_from(w: WireEvent) -> Result<Self, Self::Error> {
        let tagged = serde_json::json!({ "kind": w.kind, "detail": w.detail });
        Ok(SimEvent {
            seq: w.seq,
            t: w.t,
            subject: w.subject,
            body: serde_json::from_value(tagged)?,
        })
    }
}

impl From<SimEvent> for WireEvent {
    fn from(e: SimEvent) -> Self {
        let kind = e.kind().to_string();
        let detail = match serde_json::to_value(&e.body) {
            Ok(Value::Object(mut map)) => map.remove("detail").unwrap_or(Value::Null),
            _ => Value::Null,
        };
        WireEvent {
            seq: e.seq,
            t: e.t,
            kind,
            subject: e.subject,
            detail,
        }
    }
}

/// Ordered log that owns sequence numbering.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    events: Vec<SimEvent>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, mut event: SimEvent) -> &SimEvent {
        event.seq = self.events.len() as u64;
        self.events.push(event);
        self.events.last().unwrap()
    }

    pub fn extend(&mut self, events: impl IntoIterator<Item = SimEvent>) {
        for e in events {
            self.push(e);
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events(&self) -> &[SimEvent] {
        &self.events
    }

    pub fn since(&self, seq: usize) -> &[SimEvent] {
        &self.events[seq.min(self.events.len())..]
    }

    pub fn into_events(self) -> Vec<SimEvent> {
        self.events
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_json_line());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_field_layout() {
        let e = SimEvent {
            seq: 7,
            t: 1.25,
            subject: "car1".into(),
            body: EventBody::SpeedClamped {
                mode: SignMode::Humps,
                clamp_mps: 6.0,
            },
        };
        let line = e.to_json_line();
        assert_eq!(
            line,
            r#"{"seq":7,"t":1.25,"kind":"SpeedClamped","subject":"car1","detail":{"mode":"humps","clamp_mps":6.0}}"#
        );
        let back: SimEvent = serde_json::from_str(&line).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let line = r#"{"seq":0,"t":0.0,"kind":"Teleported","subject":"x","detail":{}}"#;
        assert!(serde_json::from_str::<SimEvent>(line).is_err());
    }

    #[test]
    fn log_assigns_dense_seq() {
        let mut log = EventLog::new();
        for i in 0..3 {
            log.push(SimEvent::new(
                f64::from(i),
                "b",
                EventBody::AutoBrakeReleased { position_m: 0.0 },
            ));
        }
        let seqs: Vec<u64> = log.events().iter().map(|e| e.seq).collect();
        assert_eq!(seqs, vec![0, 1, 2]);
        assert_eq!(log.since(2).len(), 1);
        assert_eq!(log.to_ndjson().lines().count(), 3);
    }
}
