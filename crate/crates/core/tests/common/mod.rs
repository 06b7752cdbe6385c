use tmsca_core::protocol::SignMode;
use tmsca_core::rng::SplitMix64;
use tmsca_core::scenario::{Scenario, ScenarioFile, SignboardSpec, VehicleSpec};
use tmsca_core::{GovernorConfig, VehicleKind};

/// Mixed traffic on an 800 m road: a few boards of random mode, range and
/// cadence, some lighted, and a handful of cars and ambulances.
pub fn random_scenario(rng: &mut SplitMix64) -> Scenario {
    let modes = SignMode::NAMED;
    let road = 800.0;
    let n_boards = 1 + (rng.next_u64() % 5) as usize;
    let signboards = (0..n_boards)
        .map(|i| SignboardSpec {
            id: format!("b{i}"),
            position_m: 100.0 + rng.next_f64() * 600.0,
            mode: modes[(rng.next_u64() % 4) as usize],
            range_m: 20.0 + rng.next_f64() * 60.0,
            beacon_interval_s: [0.25, 0.5, 1.0][(rng.next_u64() % 3) as usize],
            has_light: rng.next_u64().is_multiple_of(2),
        })
        .collect();
    let n_vehicles = 1 + (rng.next_u64() % 4) as usize;
    let vehicles = (0..n_vehicles)
        .map(|i| {
            let v_max = 10.0 + rng.next_f64() * 20.0;
            let ambulance = rng.next_u64().is_multiple_of(3);
            VehicleSpec {
                id: format!("v{i}"),
                kind: if ambulance {
                    VehicleKind::Ambulance
                } else {
                    VehicleKind::Car
                },
                position_m: rng.next_f64() * 100.0,
                v_max_mps: v_max,
                initial_throttle: 0.3 + 0.7 * rng.next_f64(),
                initial_speed_mps: rng.next_f64() * v_max,
                drivable: false,
                emitter_on: ambulance.then(|| !rng.next_u64().is_multiple_of(4)),
            }
        })
        .collect();
    let file = ScenarioFile {
        road_length_m: road,
        dt_s: 0.05,
        duration_s: 30.0 + rng.next_f64() * 30.0,
        seed: rng.next_u64(),
        jitter_ms: rng.next_f64() * 4.0,
        windows: None,
        governor: Some(GovernorConfig {
            alert_grace_s: 0.5 + rng.next_f64() * 3.5,
            compliance_margin: rng.next_f64() * 0.1,
            brake_decel_mps2: 2.0 + rng.next_f64() * 4.0,
            accel_mps2: 0.5 + rng.next_f64() * 3.5,
        }),
        signboards,
        vehicles,
    };
    Scenario::from_file(file).unwrap()
}
