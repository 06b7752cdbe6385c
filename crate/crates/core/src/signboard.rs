//! Smart sign board: periodic beacon in its configured mode, plus an optional
//! traffic light that ambulances can preempt.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{EventBody, SimEvent};
use crate::protocol::{AmbulanceSignal, Direction, PulseFrame, SignMode, WindowTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightColor {
    Green,
    Red,
    /// Board has no traffic light.
    None,
}

impl LightColor {
    pub fn as_str(self) -> &'static str {
        match self {
            LightColor::Green => "green",
            LightColor::Red => "red",
            LightColor::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignboardError {
    #[error("sign board `{0}` cannot be set to mode `unknown`")]
    UnknownMode(String),
    #[error("sign board `{id}`: {field} must be finite and positive, got {value}")]
    NonPositive {
        id: String,
        field: &'static str,
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Signboard {
    pub id: String,
    pub position_m: f64,
    pub beacon_range_m: f64,
    pub beacon_interval_s: f64,
    mode: SignMode,
    next_beacon_at: f64,
    light: LightColor,
}

/// Everything one board produced during a tick.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoardTick {
    pub emitted: Vec<PulseFrame>,
    pub events: Vec<SimEvent>,
}

impl Signboard {
    pub const DEFAULT_BEACON_INTERVAL_S: f64 = 0.5;
    pub const DEFAULT_RANGE_M: f64 = 50.0;

    /// A board whose first beacon is due at t = 0. Boards with a light start
    /// Red.
    pub fn new(
        id: impl Into<String>,
        position_m: f64,
        mode: SignMode,
        beacon_range_m: f64,
        beacon_interval_s: f64,
        has_light: bool,
    ) -> Result<Self, SignboardError> {
        let id = id.into();
        if !mode.is_named() {
            return Err(SignboardError::UnknownMode(id));
        }
        for (field, value) in [
            ("beacon_range_m", beacon_range_m),
            ("beacon_interval_s", beacon_interval_s),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(SignboardError::NonPositive { id, field, value });
            }
        }
        Ok(Self {
            id,
            position_m,
            beacon_range_m,
            beacon_interval_s,
            mode,
            next_beacon_at: 0.0,
            light: if has_light {
                LightColor::Red
            } else {
                LightColor::None
            },
        })
    }

    pub fn mode(&self) -> SignMode {
        self.mode
    }

    pub fn light(&self) -> LightColor {
        self.light
    }

    pub fn has_light(&self) -> bool {
        self.light != LightColor::None
    }

    pub fn next_beacon_at(&self) -> f64 {
        self.next_beacon_at
    }

    pub fn set_mode(&mut self, mode: SignMode) -> Result<(), SignboardError> {
        if !mode.is_named() {
            return Err(SignboardError::UnknownMode(self.id.clone()));
        }
        self.mode = mode;
        Ok(())
    }

    pub fn in_range(&self, position_m: f64) -> bool {
        (self.position_m - position_m).abs() <= self.beacon_range_m
    }

    /// One tick of the board loop: emit a beacon if one is due, then apply
    /// inbound preemption frames in arrival order.
    ///
    /// `jitter_ms` is called once per emitted beacon and its value is added
    /// to the nominal period.
    pub fn tick(
        &mut self,
        inbound: &[PulseFrame],
        now: f64,
        table: &WindowTable,
        mut jitter_ms: impl FnMut() -> f64,
    ) -> BoardTick {
        let mut out = BoardTick::default();

        if now >= self.next_beacon_at {
            let nominal = table
                .encode_sign_mode(self.mode)
                .expect("board mode is always named");
            let frame = PulseFrame::beacon(self.id.clone(), nominal + jitter_ms(), now);
            out.events.push(SimEvent::new(
                now,
                self.id.clone(),
                EventBody::PulseSent {
                    period_ms: frame.period_ms,
                    direction: frame.direction,
                    target: None,
                },
            ));
            out.emitted.push(frame);
            self.next_beacon_at += self.beacon_interval_s;
        }

        out.events.extend(self.receive_frames(inbound, now, table));
        out
    }

    /// Apply preemption frames in arrival order, without beacon emission.
    pub fn receive_frames(
        &mut self,
        inbound: &[PulseFrame],
        now: f64,
        table: &WindowTable,
    ) -> Vec<SimEvent> {
        inbound
            .iter()
            .filter_map(|frame| self.receive(frame, now, table))
            .collect()
    }

    fn receive(&mut self, frame: &PulseFrame, now: f64, table: &WindowTable) -> Option<SimEvent> {
        let reject = |reason: &str| {
            Some(SimEvent::new(
                now,
                self.id.clone(),
                EventBody::FrameRejected {
                    period_ms: frame.period_ms.is_finite().then_some(frame.period_ms),
                    from: frame.source_id.clone(),
                    reason: reason.to_string(),
                },
            ))
        };
        if frame.direction != Direction::VehicleToSignboard {
            return reject("wrong direction");
        }
        let signal = match table.classify_ambulance_pulse(frame.period_ms) {
            Ok(AmbulanceSignal::Unknown) => return reject("no ambulance window"),
            Ok(signal) => signal,
            Err(_) => return reject("corrupt period"),
        };
        if !self.has_light() {
            return None;
        }
        let next = match signal {
            AmbulanceSignal::RequestGreen => LightColor::Green,
            AmbulanceSignal::ClearedRed => LightColor::Red,
            AmbulanceSignal::Unknown => unreachable!(),
        };
        if next == self.light {
            return None;
        }
        let previous = std::mem::replace(&mut self.light, next);
        Some(SimEvent::new(
            now,
            self.id.clone(),
            EventBody::LightChanged {
                previous,
                light: next,
                period_ms: frame.period_ms,
                source: frame.source_id.clone(),
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn board(mode: SignMode, has_light: bool) -> Signboard {
        Signboard::new("b1", 100.0, mode, 50.0, 0.5, has_light).unwrap()
    }

    fn no_jitter() -> f64 {
        0.0
    }

    fn amb(period: f64) -> PulseFrame {
        PulseFrame::preemption("amb1", "b1", period, 0.0)
    }

    #[test]
    fn emits_midpoint_beacon_when_due() {
        let t = WindowTable::default();
        let mut b = board(SignMode::Humps, false);
        let out = b.tick(&[], 0.0, &t, no_jitter);
        assert_eq!(out.emitted.len(), 1);
        assert_eq!(out.emitted[0].period_ms, 70.0);
        assert_eq!(out.emitted[0].direction, Direction::SignboardToVehicle);
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.events[0].kind(), "PulseSent");
        assert_eq!(b.next_beacon_at(), 0.5);
        assert!(b.tick(&[], 0.25, &t, no_jitter).emitted.is_empty());
        assert_eq!(b.tick(&[], 0.5, &t, no_jitter).emitted.len(), 1);
    }

    #[test]
    fn set_mode_changes_next_beacon() {
        let t = WindowTable::default();
        let mut b = board(SignMode::Humps, false);
        b.set_mode(SignMode::SchoolZone).unwrap();
        assert_eq!(b.tick(&[], 0.0, &t, no_jitter).emitted[0].period_ms, 90.0);

        let mut a = board(SignMode::Humps, false);
        let before = a.clone();
        a.set_mode(SignMode::Humps).unwrap();
        assert_eq!(a, before);

        assert_eq!(
            a.set_mode(SignMode::Unknown),
            Err(SignboardError::UnknownMode("b1".into()))
        );
    }

    #[test]
    fn preemption_changes_light() {
        let t = WindowTable::default();
        let mut b = board(SignMode::SpeedLimit, true);
        assert_eq!(b.light(), LightColor::Red);
        let out = b.tick(&[amb(50.0)], 1.0, &t, no_jitter);
        assert_eq!(b.light(), LightColor::Green);
        let changes: Vec<_> = out
            .events
            .iter()
            .filter(|e| e.kind() == "LightChanged")
            .collect();
        assert_eq!(changes.len(), 1);

        b.tick(&[amb(70.0)], 1.1, &t, no_jitter);
        assert_eq!(b.light(), LightColor::Red);
    }

    #[test]
    fn repeated_request_is_one_transition() {
        let t = WindowTable::default();
        let mut b = board(SignMode::SpeedLimit, true);
        b.tick(&[amb(50.0)], 1.0, &t, no_jitter);
        let out = b.tick(&[amb(50.0)], 1.05, &t, no_jitter);
        assert!(out.events.iter().all(|e| e.kind() != "LightChanged"));
    }

    #[test]
    fn unknown_inbound_is_rejected() {
        let t = WindowTable::default();
        let mut b = board(SignMode::SpeedLimit, true);
        let out = b.tick(&[amb(90.0)], 0.0, &t, no_jitter);
        assert_eq!(b.light(), LightColor::Red);
        let kinds: Vec<_> = out.events.iter().map(SimEvent::kind).collect();
        assert_eq!(kinds, ["PulseSent", "FrameRejected"]);

        let out = b.tick(
            &[amb(f64::NAN), PulseFrame::beacon("x", 50.0, 1.0)],
            0.1,
            &t,
            no_jitter,
        );
        assert_eq!(out.events.len(), 2);
        assert!(out.events.iter().all(|e| e.kind() == "FrameRejected"));
    }

    #[test]
    fn last_writer_wins_within_tick() {
        let t = WindowTable::default();
        let mut b = board(SignMode::SpeedLimit, true);
        let out = b.tick(&[amb(50.0), amb(70.0)], 1.0, &t, no_jitter);
        assert_eq!(b.light(), LightColor::Red);
        assert_eq!(
            out.events
                .iter()
                .filter(|e| e.kind() == "LightChanged")
                .count(),
            2
        );
    }

    #[test]
    fn unlit_board_never_changes_light() {
        let t = WindowTable::default();
        let mut b = board(SignMode::Freeway, false);
        let out = b.tick(&[amb(50.0), amb(70.0)], 1.0, &t, no_jitter);
        assert_eq!(b.light(), LightColor::None);
        assert!(out.events.iter().all(|e| e.kind() != "LightChanged"));
    }

    #[test]
    fn cadence_over_span() {
        let t = WindowTable::default();
        let mut b = board(SignMode::Humps, false);
        let dt = 0.05;
        let steps = 400u32;
        let emitted: usize = (0..steps)
            .map(|k| b.tick(&[], f64::from(k) * dt, &t, no_jitter).emitted.len())
            .sum();
        let span = f64::from(steps) * dt;
        let expected = (span / 0.5).floor() as i64;
        assert!(
            (emitted as i64 - expected).abs() <= 1,
            "{emitted} vs {expected}"
        );
    }

    #[test]
    fn tick_is_deterministic() {
        let t = WindowTable::default();
        let mut a = board(SignMode::Humps, true);
        let mut b = a.clone();
        let frames = [amb(50.0), amb(90.0)];
        assert_eq!(
            a.tick(&frames, 0.0, &t, no_jitter),
            b.tick(&frames, 0.0, &t, no_jitter)
        );
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(Signboard::new("b", 0.0, SignMode::Unknown, 50.0, 0.5, false).is_err());
        assert!(Signboard::new("b", 0.0, SignMode::Humps, 0.0, 0.5, false).is_err());
        assert!(Signboard::new("b", 0.0, SignMode::Humps, 50.0, -1.0, false).is_err());
    }
}
