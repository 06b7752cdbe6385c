//! Wire contract between a running simulation and driver consoles.
//!
//! Clients send [`DriverCommand`]s as JSON text frames; the server answers
//! with [`ServerMessage`]s: one `hello` on connect, then a `state` frame per
//! drivable vehicle per tick, and `rejected` frames for bad input. Parsing
//! and validation live here and are transport-free, so a malformed message
//! can never reach the engine.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ecu::VehicleKind;
use crate::engine::{Command, Snapshot};
use crate::protocol::SignMode;
use crate::scenario::Scenario;
use crate::signboard::LightColor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverCommand {
    Throttle {
        vehicle_id: String,
        value: f64,
        client_seq: u64,
    },
    AmbulanceToggle {
        vehicle_id: String,
        client_seq: u64,
    },
}

impl DriverCommand {
    pub fn client_seq(&self) -> u64 {
        match self {
            DriverCommand::Throttle { client_seq, .. }
            | DriverCommand::AmbulanceToggle { client_seq, .. } => *client_seq,
        }
    }

    pub fn vehicle_id(&self) -> &str {
        match self {
            DriverCommand::Throttle { vehicle_id, .. }
            | DriverCommand::AmbulanceToggle { vehicle_id, .. } => vehicle_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateUpdate {
    pub t: f64,
    pub vehicle_id: String,
    pub speed_mps: f64,
    pub clamp_mps: f64,
    pub governor: String,
    pub buzzer: bool,
    pub active_mode: String,
    pub nearest_light: String,
    pub position_m: f64,
    pub throttle: f64,
    /// Preemption emitter state; ambulances only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emitter_on: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        vehicles: Vec<String>,
        ambulances: Vec<String>,
    },
    State(StateUpdate),
    Rejected {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        client_seq: Option<u64>,
        reason: String,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("message serialization is infallible")
    }
}

/// Drivable vehicles a console may address.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    vehicles: BTreeMap<String, VehicleKind>,
}

impl Registry {
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let vehicles = scenario
            .vehicles
            .iter()
            .filter(|v| scenario.drivable.contains(&v.id))
            .map(|v| (v.id.clone(), v.kind))
            .collect();
        Self { vehicles }
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.vehicles.contains_key(id)
    }

    pub fn hello(&self) -> ServerMessage {
        ServerMessage::Hello {
            vehicles: self.vehicles.keys().cloned().collect(),
            ambulances: self
                .vehicles
                .iter()
                .filter(|(_, k)| **k == VehicleKind::Ambulance)
                .map(|(id, _)| id.clone())
                .collect(),
        }
    }
}

/// Per-connection state.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Session {
    last_seq: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub client_seq: Option<u64>,
    pub reason: String,
}

impl From<Rejection> for ServerMessage {
    fn from(r: Rejection) -> Self {
        ServerMessage::Rejected {
            client_seq: r.client_seq,
            reason: r.reason,
        }
    }
}

/// Parse and validate one client frame into an engine command.
pub fn handle_command(
    raw: &str,
    registry: &Registry,
    session: &mut Session,
) -> Result<Command, Rejection> {
    let cmd: DriverCommand = serde_json::from_str(raw).map_err(|e| Rejection {
        client_seq: serde_json::from_str::<serde_json::Value>(raw)
            .ok()
            .and_then(|v| v.get("client_seq").and_then(serde_json::Value::as_u64)),
        reason: format!("malformed command: {e}"),
    })?;
    let client_seq = cmd.client_seq();
    let reject = |reason: String| Rejection {
        client_seq: Some(client_seq),
        reason,
    };
    if session.last_seq.is_some_and(|last| client_seq <= last) {
        return Err(reject(format!(
            "client_seq {client_seq} does not increase past {}",
            session.last_seq.unwrap()
        )));
    }
    let Some(kind) = registry.vehicles.get(cmd.vehicle_id()).copied() else {
        return Err(reject(format!("unknown vehicle `{}`", cmd.vehicle_id())));
    };
    let command = match cmd {
        DriverCommand::Throttle {
            vehicle_id, value, ..
        } => {
            if !(0.0..=1.0).contains(&value) {
                return Err(reject(format!(
                    "throttle must be within [0, 1], got {value}"
                )));
            }
            Command::Throttle { vehicle_id, value }
        }
        DriverCommand::AmbulanceToggle { vehicle_id, .. } => {
            if kind != VehicleKind::Ambulance {
                return Err(reject(format!(
                    "vehicle `{vehicle_id}` is not an ambulance"
                )));
            }
            Command::AmbulanceToggle { vehicle_id }
        }
    };
    session.last_seq = Some(client_seq);
    Ok(command)
}

fn mode_name(mode: SignMode) -> String {
    match mode {
        SignMode::Unknown => "none".to_string(),
        named => named.as_str().to_string(),
    }
}

/// One update per drivable vehicle, in id order.
pub fn state_updates(snapshot: &Snapshot, registry: &Registry) -> Vec<StateUpdate> {
    snapshot
        .vehicles
        .iter()
        .filter(|v| registry.contains(&v.id))
        .map(|v| {
            let nearest_light = snapshot
                .boards
                .iter()
                .filter(|b| b.has_light() && b.in_range(v.position_m))
                .min_by(|a, b| {
                    (a.position_m - v.position_m)
                        .abs()
                        .total_cmp(&(b.position_m - v.position_m).abs())
                })
                .map_or(LightColor::None, |b| b.light());
            StateUpdate {
                t: snapshot.t,
                vehicle_id: v.id.clone(),
                speed_mps: v.speed_mps(),
                clamp_mps: v.clamp_mps(),
                governor: v.governor().as_str().to_string(),
                buzzer: v.buzzer_on(),
                active_mode: mode_name(v.active_mode()),
                nearest_light: nearest_light.as_str().to_string(),
                position_m: v.position_m,
                throttle: v.throttle_cmd(),
                emitter_on: (v.kind == VehicleKind::Ambulance).then(|| v.emitter_on()),
            }
        })
        .collect()
}
