//! Scenario file format and validation.
//!
//! A scenario is a UTF-8 JSON document:
//!
//! ```json
//! {
//!   "road_length_m": 1000.0, "dt_s": 0.05, "duration_s": 60.0,
//!   "seed": 7, "jitter_ms": 0.0,
//!   "windows": { ... },          // optional, WindowTable
//!   "governor": { ... },         // optional, any subset of GovernorConfig
//!   "signboards": [{ "id": "b1", "position_m": 100.0, "mode": "humps",
//!                    "range_m": 50.0, "beacon_interval_s": 0.5, "has_light": false }],
//!   "vehicles":   [{ "id": "car1", "kind": "car", "position_m": 0.0,
//!                    "v_max_mps": 20.0, "initial_throttle": 1.0 }]
//! }
//! ```
//!
//! Vehicles additionally accept `initial_speed_mps` (default 0), `drivable`
//! (default false) and, for ambulances, `emitter_on` (default true).

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ecu::{GovernorConfig, Vehicle, VehicleKind};
use crate::protocol::{SignMode, WindowTable};
use crate::signboard::Signboard;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn default_range() -> f64 {
    Signboard::DEFAULT_RANGE_M
}

fn default_interval() -> f64 {
    Signboard::DEFAULT_BEACON_INTERVAL_S
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignboardSpec {
    pub id: String,
    pub position_m: f64,
    pub mode: SignMode,
    #[serde(default = "default_range")]
    pub range_m: f64,
    #[serde(default = "default_interval")]
    pub beacon_interval_s: f64,
    #[serde(default)]
    pub has_light: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub id: String,
    pub kind: VehicleKind,
    pub position_m: f64,
    pub v_max_mps: f64,
    pub initial_throttle: f64,
    #[serde(default)]
    pub initial_speed_mps: f64,
    #[serde(default)]
    pub drivable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emitter_on: Option<bool>,
}

/// The document as written, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub road_length_m: f64,
    pub dt_s: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub jitter_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows: Option<WindowTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub governor: Option<GovernorConfig>,
    pub signboards: Vec<SignboardSpec>,
    pub vehicles: Vec<VehicleSpec>,
}

/// A fully validated scenario, ready to build a world from.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub road_length_m: f64,
    pub dt_s: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub jitter_ms: f64,
    pub governor: GovernorConfig,
    pub windows: WindowTable,
    pub signboards: Vec<Signboard>,
    /// Sorted by id.
    pub vehicles: Vec<Vehicle>,
    pub drivable: BTreeSet<String>,
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

fn positive(name: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!(
            "{name} must be finite and positive, got {v}"
        )))
    }
}

impl Scenario {
    pub fn from_json(document: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(document)?;
        Self::from_file(file)
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self, ScenarioError> {
        positive("road_length_m", file.road_length_m)?;
        positive("dt_s", file.dt_s)?;
        positive("duration_s", file.duration_s)?;
        if !(file.jitter_ms.is_finite() && file.jitter_ms >= 0.0) {
            return Err(invalid(format!(
                "jitter_ms must be finite and non-negative, got {}",
                file.jitter_ms
            )));
        }
        let governor = file.governor.unwrap_or_default();
        governor.validate().map_err(|e| invalid(e.to_string()))?;
        let windows = file.windows.unwrap_or_default();

        let in_road = |id: &str, pos: f64| {
            if (0.0..=file.road_length_m).contains(&pos) {
                Ok(())
            } else {
                Err(invalid(format!(
                    "position of `{id}` must be within [0, {}], got {pos}",
                    file.road_length_m
                )))
            }
        };
        let mut ids = HashSet::new();
        let mut unique = |id: &str| {
            if ids.insert(id.to_string()) {
                Ok(())
            } else {
                Err(invalid(format!("duplicate id `{id}`")))
            }
        };

        let mut signboards = Vec::with_capacity(file.signboards.len());
        for spec in file.signboards {
            unique(&spec.id)?;
            in_road(&spec.id, spec.position_m)?;
            let board = Signboard::new(
                spec.id.clone(),
                spec.position_m,
                spec.mode,
                spec.range_m,
                spec.beacon_interval_s,
                spec.has_light,
            )
            .map_err(|e| invalid(e.to_string()))?;
            if file.dt_s > board.beacon_interval_s {
                return Err(invalid(format!(
                    "dt_s ({}) exceeds beacon_interval_s ({}) of `{}`",
                    file.dt_s, board.beacon_interval_s, board.id
                )));
            }
            signboards.push(board);
        }

        let mut vehicles = Vec::with_capacity(file.vehicles.len());
        let mut drivable = BTreeSet::new();
        for spec in file.vehicles {
            unique(&spec.id)?;
            in_road(&spec.id, spec.position_m)?;
            let mut v = Vehicle::new(
                spec.id.clone(),
                spec.kind,
                spec.position_m,
                spec.v_max_mps,
                spec.initial_throttle,
            )
            .and_then(|v| v.with_speed(spec.initial_speed_mps))
            .map_err(|e| invalid(format!("vehicle `{}`: {e}", spec.id)))?;
            if let Some(on) = spec.emitter_on {
                if spec.kind != VehicleKind::Ambulance {
                    return Err(invalid(format!(
                        "emitter_on is only valid for ambulances, `{}` is a car",
                        spec.id
                    )));
                }
                v.set_emitter(on);
            }
            if spec.drivable {
                drivable.insert(spec.id.clone());
            }
            vehicles.push(v);
        }
        vehicles.sort_by(|a, b| a.id.cmp(&b.id));

        Ok(Scenario {
            road_length_m: file.road_length_m,
            dt_s: file.dt_s,
            duration_s: file.duration_s,
            seed: file.seed,
            jitter_ms: file.jitter_ms,
            governor,
            windows,
            signboards,
            vehicles,
            drivable,
        })
    }

    /// Number of ticks `run` executes: `ceil(duration_s / dt_s)`.
    pub fn steps(&self) -> u64 {
        let ratio = self.duration_s / self.dt_s;
        // Absorb representation error such as 10.0 / 0.05 = 200.00000000000003.
        let rounded = ratio.round();
        if (ratio - rounded).abs() < 1e-9 * rounded.max(1.0) {
            rounded as u64
        } else {
            ratio.ceil() as u64
        }
    }
}
