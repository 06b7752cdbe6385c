//! Fixed-timestep world.
//!
//! Tick `k` runs at `t = k * dt` in this order:
//!
//! 1. drain queued driver commands into vehicles;
//! 2. tick every sign board (beacon emission, with seeded jitter);
//! 3. deliver beacons to every vehicle within the sending board's range;
//! 4. ambulances address preemption frames to lighted boards in range, which
//!    receive them immediately;
//! 5. governor and kinematics for every vehicle in id order, then board
//!    crossings.
//!
//! Events are appended in that order. Nothing else touches the world, so a
//! scenario and its seed fully determine the log.

use std::sync::mpsc::{self, Receiver, Sender};

use crate::ecu::{GovernorConfig, Vehicle, VehicleKind};
use crate::event::{EventBody, EventLog, SimEvent};
use crate::protocol::WindowTable;
use crate::rng::SplitMix64;
use crate::scenario::Scenario;
use crate::signboard::Signboard;

/// Beacons missed before a vehicle considers itself out of a zone.
pub const ZONE_LEASE_BEACONS: f64 = 3.0;

/// Driver input, applied at the start of the next tick.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Throttle { vehicle_id: String, value: f64 },
    AmbulanceToggle { vehicle_id: String },
}

/// Immutable copy of the world after a tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Simulation time the state refers to.
    pub t: f64,
    pub tick: u64,
    pub vehicles: Vec<Vehicle>,
    pub boards: Vec<Signboard>,
}

pub struct World {
    tick: u64,
    dt: f64,
    jitter_ms: f64,
    governor: GovernorConfig,
    table: WindowTable,
    rng: SplitMix64,
    boards: Vec<Signboard>,
    vehicles: Vec<Vehicle>,
    log: EventLog,
    commands_tx: Sender<Command>,
    commands_rx: Receiver<Command>,
}

impl World {
    pub fn new(scenario: &Scenario) -> Self {
        let (commands_tx, commands_rx) = mpsc::channel();
        let mut vehicles = scenario.vehicles.clone();
        vehicles.sort_by(|a, b| a.id.cmp(&b.id));
        Self {
            tick: 0,
            dt: scenario.dt_s,
            jitter_ms: scenario.jitter_ms,
            governor: scenario.governor,
            table: scenario.windows.clone(),
            rng: SplitMix64::new(scenario.seed),
            boards: scenario.signboards.clone(),
            vehicles,
            log: EventLog::new(),
            commands_tx,
            commands_rx,
        }
    }

    /// Handle for queueing driver commands from any thread.
    pub fn command_sender(&self) -> Sender<Command> {
        self.commands_tx.clone()
    }

    pub fn now(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn into_log(self) -> EventLog {
        self.log
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn boards(&self) -> &[Signboard] {
        &self.boards
    }

    pub fn vehicle(&self, id: &str) -> Option<&Vehicle> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            t: self.now(),
            tick: self.tick,
            vehicles: self.vehicles.clone(),
            boards: self.boards.clone(),
        }
    }

    /// Advance one tick and return the events it produced.
    pub fn step(&mut self) -> &[SimEvent] {
        let now = self.now();
        let first = self.log.len();

        while let Ok(cmd) = self.commands_rx.try_recv() {
            self.apply(cmd);
        }

        let mut beacons = Vec::new();
        for board in &mut self.boards {
            let rng = &mut self.rng;
            let jitter = self.jitter_ms;
            let out = board.tick(&[], now, &self.table, || rng.symmetric(jitter));
            self.log.extend(out.events);
            beacons.extend(out.emitted.into_iter().map(|f| {
                let lease = ZONE_LEASE_BEACONS * board.beacon_interval_s;
                (board.position_m, board.beacon_range_m, lease, f)
            }));
        }

        for (origin, range, lease, frame) in &beacons {
            for vehicle in &mut self.vehicles {
                if (vehicle.position_m - origin).abs() <= *range {
                    let events = vehicle.on_pulse(frame, now, &self.table, *lease);
                    self.log.extend(events);
                }
            }
        }

        for vehicle in &mut self.vehicles {
            if vehicle.kind != VehicleKind::Ambulance {
                continue;
            }
            let in_range: Vec<&Signboard> = self
                .boards
                .iter()
                .filter(|b| b.in_range(vehicle.position_m))
                .collect();
            let frames = vehicle
                .ambulance_emit(&in_range, now, &self.table)
                .expect("kind checked above");
            for frame in frames {
                self.log.push(SimEvent::new(
                    now,
                    vehicle.id.clone(),
                    EventBody::PulseSent {
                        period_ms: frame.period_ms,
                        direction: frame.direction,
                        target: frame.target_id.clone(),
                    },
                ));
                let target = self
                    .boards
                    .iter_mut()
                    .find(|b| Some(&b.id) == frame.target_id.as_ref())
                    .expect("frames are addressed to boards in range");
                let events = target.receive_frames(std::slice::from_ref(&frame), now, &self.table);
                self.log.extend(events);
            }
        }

        for vehicle in &mut self.vehicles {
            let before = vehicle.position_m;
            let events = vehicle
                .governor_step(&self.governor, now, self.dt)
                .expect("dt validated at load");
            self.log.extend(events);
            let after = vehicle.position_m;
            for board in &self.boards {
                if before < board.position_m && board.position_m <= after {
                    self.log.push(SimEvent::new(
                        now,
                        vehicle.id.clone(),
                        EventBody::VehicleCrossedBoard {
                            board: board.id.clone(),
                            position_m: after,
                        },
                    ));
                }
            }
        }

        self.tick += 1;
        self.log.since(first)
    }

    fn apply(&mut self, cmd: Command) {
        match cmd {
            Command::Throttle { vehicle_id, value } => {
                if let Some(v) = self.vehicles.iter_mut().find(|v| v.id == vehicle_id) {
                    // Out-of-range values are filtered by the control channel.
                    let _ = v.apply_driver_command(value);
                }
            }
            Command::AmbulanceToggle { vehicle_id } => {
                if let Some(v) = self.vehicles.iter_mut().find(|v| v.id == vehicle_id) {
                    let on = !v.emitter_on();
                    v.set_emitter(on);
                }
            }
        }
    }
}

/// Result of a complete run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub log: EventLog,
    pub final_state: Snapshot,
}

pub fn run(scenario: &Scenario) -> RunOutcome {
    run_with(scenario, |_| {})
}

/// Like [`run`], calling `observe` with a snapshot after every tick.
pub fn run_with(scenario: &Scenario, mut observe: impl FnMut(&Snapshot)) -> RunOutcome {
    let mut world = World::new(scenario);
    for _ in 0..scenario.steps() {
        world.step();
        observe(&world.snapshot());
    }
    let final_state = world.snapshot();
    RunOutcome {
        log: world.into_log(),
        final_state,
    }
}
