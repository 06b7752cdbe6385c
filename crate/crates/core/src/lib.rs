//! Beacon-driven traffic control: a pulse-width protocol between smart sign
//! boards and vehicles, an on-board speed governor with buzzer alert and
//! auto-brake, ambulance traffic-light preemption, a deterministic road
//! simulator and non-compliance telemetry.

pub mod control;
pub mod ecu;
pub mod engine;
pub mod event;
pub mod protocol;
pub mod rng;
pub mod scenario;
pub mod signboard;
pub mod telemetry;

pub use ecu::{GovernorConfig, GovernorState, Vehicle, VehicleKind};
pub use engine::{run, Command, RunOutcome, Snapshot, World};
pub use event::{EventBody, EventLog, SimEvent};
pub use protocol::{AmbulanceSignal, Direction, PulseFrame, SignMode, WindowTable};
pub use scenario::{Scenario, ScenarioError, ScenarioFile};
pub use signboard::{LightColor, Signboard};
