//! On-board unit of a vehicle.
//!
//! A received beacon lowers the speed ceiling (the clamp) to the mode's
//! fraction of `v_max`. The governor then watches measured speed against the
//! clamp: exceeding it raises the buzzer alert, and staying over it past the
//! grace period engages auto-brake down to a standstill. Ambulances also
//! address preemption frames to lighted boards around them.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{EventBody, SimEvent};
use crate::protocol::{AmbulanceSignal, Direction, PulseFrame, SignMode, WindowTable};
use crate::signboard::Signboard;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EcuError {
    #[error("time step must be finite and positive, got {0} s")]
    InvalidTimeStep(f64),
    #[error("throttle must be within [0, 1], got {0}")]
    ThrottleOutOfRange(f64),
    #[error("vehicle `{0}` is not an ambulance")]
    NotAmbulance(String),
    #[error("vehicle `{id}`: {reason}")]
    InvalidVehicle { id: String, reason: String },
    #[error("governor: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleKind {
    Car,
    Ambulance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum GovernorState {
    Cruise,
    Alerted { deadline: f64 },
    AutoBrake,
}

impl GovernorState {
    pub fn as_str(&self) -> &'static str {
        match self {
            GovernorState::Cruise => "cruise",
            GovernorState::Alerted { .. } => "alerted",
            GovernorState::AutoBrake => "auto_brake",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GovernorConfig {
    /// Seconds between the alert and auto-brake.
    pub alert_grace_s: f64,
    /// Tolerated fraction above the clamp before alerting.
    pub compliance_margin: f64,
    pub brake_decel_mps2: f64,
    pub accel_mps2: f64,
}

impl Default for GovernorConfig {
    fn default() -> Self {
        Self {
            alert_grace_s: 3.0,
            compliance_margin: 0.05,
            brake_decel_mps2: 4.0,
            accel_mps2: 2.0,
        }
    }
}

impl GovernorConfig {
    pub fn validate(&self) -> Result<(), EcuError> {
        for (name, v) in [
            ("alert_grace_s", self.alert_grace_s),
            ("brake_decel_mps2", self.brake_decel_mps2),
            ("accel_mps2", self.accel_mps2),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(EcuError::InvalidConfig(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        if !(self.compliance_margin.is_finite() && self.compliance_margin >= 0.0) {
            return Err(EcuError::InvalidConfig(format!(
                "compliance_margin must be finite and non-negative, got {}",
                self.compliance_margin
            )));
        }
        Ok(())
    }
}

/// The board whose beacon set the current clamp.
#[derive(Debug, Clone, PartialEq, Serialize)]
struct Zone {
    board: String,
    expires_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Vehicle {
    pub id: String,
    pub kind: VehicleKind,
    pub position_m: f64,
    speed_mps: f64,
    v_max_mps: f64,
    throttle_cmd: f64,
    active_mode: SignMode,
    clamp_mps: f64,
    governor: GovernorState,
    buzzer_on: bool,
    zone: Option<Zone>,
    emitter_on: bool,
    cleared_boards: BTreeSet<String>,
}

fn check_throttle(throttle: f64) -> Result<(), EcuError> {
    if (0.0..=1.0).contains(&throttle) {
        Ok(())
    } else {
        Err(EcuError::ThrottleOutOfRange(throttle))
    }
}

impl Vehicle {
    /// A vehicle at rest outside any zone. Ambulances start with their
    /// preemption emitter on.
    pub fn new(
        id: impl Into<String>,
        kind: VehicleKind,
        position_m: f64,
        v_max_mps: f64,
        throttle: f64,
    ) -> Result<Self, EcuError> {
        let id = id.into();
        if !(v_max_mps.is_finite() && v_max_mps > 0.0) {
            return Err(EcuError::InvalidVehicle {
                id,
                reason: format!("v_max_mps must be finite and positive, got {v_max_mps}"),
            });
        }
        if !position_m.is_finite() {
            return Err(EcuError::InvalidVehicle {
                id,
                reason: format!("position_m must be finite, got {position_m}"),
            });
        }
        check_throttle(throttle)?;
        Ok(Self {
            id,
            kind,
            position_m,
            speed_mps: 0.0,
            v_max_mps,
            throttle_cmd: throttle,
            active_mode: SignMode::Unknown,
            clamp_mps: v_max_mps,
            governor: GovernorState::Cruise,
            buzzer_on: false,
            zone: None,
            emitter_on: kind == VehicleKind::Ambulance,
            cleared_boards: BTreeSet::new(),
        })
    }

    pub fn with_speed(mut self, speed_mps: f64) -> Result<Self, EcuError> {
        if !(0.0..=self.v_max_mps).contains(&speed_mps) {
            return Err(EcuError::InvalidVehicle {
                id: self.id,
                reason: format!("initial speed must be within [0, v_max], got {speed_mps}"),
            });
        }
        self.speed_mps = speed_mps;
        Ok(self)
    }

    pub fn speed_mps(&self) -> f64 {
        self.speed_mps
    }

    pub fn v_max_mps(&self) -> f64 {
        self.v_max_mps
    }

    pub fn throttle_cmd(&self) -> f64 {
        self.throttle_cmd
    }

    pub fn active_mode(&self) -> SignMode {
        self.active_mode
    }

    pub fn clamp_mps(&self) -> f64 {
        self.clamp_mps
    }

    pub fn governor(&self) -> GovernorState {
        self.governor
    }

    pub fn buzzer_on(&self) -> bool {
        self.buzzer_on
    }

    pub fn emitter_on(&self) -> bool {
        self.emitter_on
    }

    pub fn set_emitter(&mut self, on: bool) {
        self.emitter_on = on && self.kind == VehicleKind::Ambulance;
    }

    /// Speed the vehicle is steering toward this step.
    pub fn commanded_speed(&self) -> f64 {
        match self.governor {
            GovernorState::AutoBrake => 0.0,
            _ => (self.throttle_cmd * self.v_max_mps).min(self.clamp_mps),
        }
    }

    /// Handle a received beacon. `lease_s` is how long the resulting clamp
    /// survives without another beacon from the same board.
    pub fn on_pulse(
        &mut self,
        frame: &PulseFrame,
        now: f64,
        table: &WindowTable,
        lease_s: f64,
    ) -> Vec<SimEvent> {
        let reject = |reason: &str| {
            vec![SimEvent::new(
                now,
                self.id.clone(),
                EventBody::FrameRejected {
                    period_ms: frame.period_ms.is_finite().then_some(frame.period_ms),
                    from: frame.source_id.clone(),
                    reason: reason.to_string(),
                },
            )]
        };
        if frame.direction != Direction::SignboardToVehicle {
            return reject("wrong direction");
        }
        let mode = match table.classify_sign_pulse(frame.period_ms) {
            Ok(SignMode::Unknown) => return reject("no sign window"),
            Ok(mode) => mode,
            Err(_) => return reject("corrupt period"),
        };
        let fraction = table
            .target_speed_fraction(mode)
            .expect("named mode has a fraction");
        let clamp = fraction * self.v_max_mps;

        let mut events = vec![SimEvent::new(
            now,
            self.id.clone(),
            EventBody::PulseReceived {
                period_ms: frame.period_ms,
                mode,
                from: frame.source_id.clone(),
            },
        )];
        if mode != self.active_mode || clamp != self.clamp_mps {
            events.push(SimEvent::new(
                now,
                self.id.clone(),
                EventBody::SpeedClamped {
                    mode,
                    clamp_mps: clamp,
                },
            ));
        }
        self.active_mode = mode;
        self.clamp_mps = clamp;
        self.zone = Some(Zone {
            board: frame.source_id.clone(),
            expires_at: now + lease_s,
        });
        events
    }

    fn expire_zone(&mut self, now: f64) -> Option<SimEvent> {
        match &self.zone {
            Some(zone) if now >= zone.expires_at => {
                self.zone = None;
                self.active_mode = SignMode::Unknown;
                self.clamp_mps = self.v_max_mps;
                Some(SimEvent::new(
                    now,
                    self.id.clone(),
                    EventBody::SpeedClamped {
                        mode: SignMode::Unknown,
                        clamp_mps: self.clamp_mps,
                    },
                ))
            }
            _ => None,
        }
    }

    /// Governor transitions followed by kinematics for one step of `dt`.
    pub fn governor_step(
        &mut self,
        cfg: &GovernorConfig,
        now: f64,
        dt: f64,
    ) -> Result<Vec<SimEvent>, EcuError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(EcuError::InvalidTimeStep(dt));
        }
        let mut events = Vec::new();
        events.extend(self.expire_zone(now));

        let threshold = self.clamp_mps * (1.0 + cfg.compliance_margin);
        let compliant = self.speed_mps <= threshold;
        let transition = match self.governor {
            GovernorState::Cruise if !compliant => {
                let deadline = now + cfg.alert_grace_s;
                Some((
                    GovernorState::Alerted { deadline },
                    EventBody::AlertRaised {
                        speed_mps: self.speed_mps,
                        clamp_mps: self.clamp_mps,
                        deadline_s: deadline,
                    },
                ))
            }
            GovernorState::Alerted { .. } if compliant => Some((
                GovernorState::Cruise,
                EventBody::AlertCleared {
                    speed_mps: self.speed_mps,
                    clamp_mps: self.clamp_mps,
                },
            )),
            GovernorState::Alerted { deadline } if now >= deadline => Some((
                GovernorState::AutoBrake,
                EventBody::AutoBrakeEngaged {
                    speed_mps: self.speed_mps,
                    clamp_mps: self.clamp_mps,
                },
            )),
            GovernorState::AutoBrake if self.speed_mps <= 0.0 => Some((
                GovernorState::Cruise,
                EventBody::AutoBrakeReleased {
                    position_m: self.position_m,
                },
            )),
            _ => None,
        };
        if let Some((next, body)) = transition {
            self.governor = next;
            self.buzzer_on = !matches!(next, GovernorState::Cruise);
            events.push(SimEvent::new(now, self.id.clone(), body));
        }

        self.speed_mps = match self.governor {
            GovernorState::AutoBrake => (self.speed_mps - cfg.brake_decel_mps2 * dt).max(0.0),
            _ => {
                let target = self.commanded_speed();
                let step = cfg.accel_mps2 * dt;
                if self.speed_mps < target {
                    (self.speed_mps + step).min(target)
                } else {
                    (self.speed_mps - step).max(target)
                }
            }
        };
        self.position_m += self.speed_mps * dt;
        Ok(events)
    }

    pub fn apply_driver_command(&mut self, throttle: f64) -> Result<(), EcuError> {
        check_throttle(throttle)?;
        self.throttle_cmd = throttle;
        Ok(())
    }

    /// Preemption frames for the lighted boards in range: request green while
    /// approaching a board, release it once on the first tick past it.
    pub fn ambulance_emit(
        &mut self,
        boards_in_range: &[&Signboard],
        now: f64,
        table: &WindowTable,
    ) -> Result<Vec<PulseFrame>, EcuError> {
        if self.kind != VehicleKind::Ambulance {
            return Err(EcuError::NotAmbulance(self.id.clone()));
        }
        let mut frames = Vec::new();
        if !self.emitter_on {
            return Ok(frames);
        }
        let mut seen = BTreeSet::new();
        for board in boards_in_range.iter().filter(|b| b.has_light()) {
            if !seen.insert(board.id.as_str()) {
                continue;
            }
            let signal = if self.position_m < board.position_m {
                AmbulanceSignal::RequestGreen
            } else if self.position_m > board.position_m
                && self.cleared_boards.insert(board.id.clone())
            {
                AmbulanceSignal::ClearedRed
            } else {
                continue;
            };
            let period = table.encode_ambulance(signal).expect("named signal");
            frames.push(PulseFrame::preemption(
                self.id.clone(),
                board.id.clone(),
                period,
                now,
            ));
        }
        Ok(frames)
    }
}
