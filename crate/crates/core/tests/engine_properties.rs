mod common;

use std::collections::BTreeMap;

use common::random_scenario;
use tmsca_core::engine::{run_with, Snapshot};
use tmsca_core::event::{EventBody, SimEvent};
use tmsca_core::rng::SplitMix64;
use tmsca_core::scenario::Scenario;
use tmsca_core::telemetry;
use tmsca_core::{GovernorState, SignMode};

struct Recorded {
    scenario: Scenario,
    log: Vec<SimEvent>,
    snaps: Vec<Snapshot>,
}

fn record(scenario: Scenario) -> Recorded {
    let mut snaps = Vec::new();
    let out = run_with(&scenario, |s| snaps.push(s.clone()));
    Recorded {
        scenario,
        log: out.log.into_events(),
        snaps,
    }
}

fn corpus() -> Vec<Recorded> {
    let mut rng = SplitMix64::new(0xE9_61E);
    (0..25).map(|_| record(random_scenario(&mut rng))).collect()
}

fn tick_of(scenario: &Scenario, t: f64) -> usize {
    (t / scenario.dt_s).round() as usize
}

/// Vehicle positions at the start of tick `k`.
fn positions_before(r: &Recorded, k: usize) -> BTreeMap<String, f64> {
    let vehicles = if k == 0 {
        &r.scenario.vehicles
    } else {
        &r.snaps[k - 1].vehicles
    };
    vehicles
        .iter()
        .map(|v| (v.id.clone(), v.position_m))
        .collect()
}

#[test]
fn log_invariants_hold() {
    for r in corpus() {
        telemetry::validate_log(&r.log).unwrap();
        assert_eq!(r.log.first().map(|e| e.seq), r.log.first().map(|_| 0));
    }
}

#[test]
fn every_reception_pairs_with_a_send_in_range() {
    for r in corpus() {
        let boards: BTreeMap<_, _> = r
            .scenario
            .signboards
            .iter()
            .map(|b| (b.id.clone(), (b.position_m, b.beacon_range_m)))
            .collect();
        for e in &r.log {
            let EventBody::PulseReceived {
                from, period_ms, ..
            } = &e.body
            else {
                continue;
            };
            let sends: Vec<_> = r
                .log
                .iter()
                .filter(|s| s.subject == *from && s.t == e.t)
                .filter(|s| matches!(s.body, EventBody::PulseSent { period_ms: p, .. } if p == *period_ms))
                .collect();
            assert_eq!(sends.len(), 1, "{e:?}");
            let k = tick_of(&r.scenario, e.t);
            let pos = positions_before(&r, k)[&e.subject];
            let (origin, range) = boards[from];
            assert!((pos - origin).abs() <= range, "{e:?} at {pos}");
        }
    }
}

#[test]
fn positions_integrate_speed() {
    for r in corpus() {
        for (i, initial) in r.scenario.vehicles.iter().enumerate() {
            let integrated: f64 = initial.position_m
                + r.snaps
                    .iter()
                    .map(|s| s.vehicles[i].speed_mps() * r.scenario.dt_s)
                    .sum::<f64>();
            let actual = r.snaps.last().unwrap().vehicles[i].position_m;
            let tol = 1e-6 * actual.abs().max(1.0);
            assert!(
                (integrated - actual).abs() <= tol,
                "{integrated} vs {actual}"
            );
        }
    }
}

#[test]
fn vehicle_state_invariants_every_tick() {
    for r in corpus() {
        let mut prev: Option<&Snapshot> = None;
        for s in &r.snaps {
            for (i, v) in s.vehicles.iter().enumerate() {
                assert!(v.speed_mps() >= 0.0 && v.speed_mps() <= v.v_max_mps());
                assert_eq!(
                    v.buzzer_on(),
                    !matches!(v.governor(), GovernorState::Cruise),
                    "{v:?}"
                );
                if v.active_mode() == SignMode::Unknown {
                    assert_eq!(v.clamp_mps(), v.v_max_mps());
                }
                if let Some(p) = prev {
                    let before = &p.vehicles[i];
                    if before.governor() == GovernorState::AutoBrake
                        && v.governor() == GovernorState::AutoBrake
                    {
                        assert!(v.speed_mps() <= before.speed_mps());
                    }
                }
            }
            prev = Some(s);
        }
    }
}

#[test]
fn auto_brake_always_follows_an_open_alert() {
    for r in corpus() {
        let mut open: BTreeMap<&str, bool> = BTreeMap::new();
        for e in &r.log {
            match e.body {
                EventBody::AlertRaised { .. } => {
                    open.insert(&e.subject, true);
                }
                EventBody::AlertCleared { .. } => {
                    open.insert(&e.subject, false);
                }
                EventBody::AutoBrakeEngaged { .. } => {
                    assert_eq!(open.insert(&e.subject, false), Some(true), "{e:?}");
                }
                _ => {}
            }
        }
    }
}

#[test]
fn light_changes_are_caused_by_frames() {
    for r in corpus() {
        for e in &r.log {
            let EventBody::LightChanged { source, .. } = &e.body else {
                continue;
            };
            let causes = r
                .log
                .iter()
                .filter(|s| &s.subject == source && s.t == e.t && s.seq < e.seq)
                .filter(|s| {
                    matches!(&s.body, EventBody::PulseSent { target: Some(t), .. } if *t == e.subject)
                })
                .count();
            assert_eq!(causes, 1, "{e:?}");
        }
        let unlit: Vec<_> = r
            .scenario
            .signboards
            .iter()
            .filter(|b| !b.has_light())
            .map(|b| b.id.clone())
            .collect();
        assert!(r
            .log
            .iter()
            .all(|e| !(e.kind() == "LightChanged" && unlit.contains(&e.subject))));
    }
}

#[test]
fn small_jitter_never_rejects_beacons() {
    // random_scenario keeps jitter below 4 ms, under the 5 ms half-window.
    for r in corpus() {
        assert!(r.scenario.jitter_ms < 5.0);
        assert!(r.log.iter().all(|e| e.kind() != "FrameRejected"));
    }
}

#[test]
fn oversized_jitter_is_rejected_not_fatal() {
    let mut rng = SplitMix64::new(99);
    let mut scenario = random_scenario(&mut rng);
    scenario.jitter_ms = 12.0;
    let r = record(scenario);
    assert!(r.log.iter().any(|e| e.kind() == "FrameRejected"));
    telemetry::validate_log(&r.log).unwrap();
}

#[test]
fn beacon_cadence_matches_interval() {
    for r in corpus() {
        let span = r.scenario.steps() as f64 * r.scenario.dt_s;
        for b in &r.scenario.signboards {
            let sent = r
                .log
                .iter()
                .filter(|e| e.subject == b.id && e.kind() == "PulseSent")
                .count() as i64;
            let expected = (span / b.beacon_interval_s).floor() as i64;
            assert!(
                (sent - expected).abs() <= 1,
                "{}: {sent} vs {expected}",
                b.id
            );
        }
    }
}

#[test]
fn persisted_engine_logs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for (i, r) in corpus().into_iter().take(5).enumerate() {
        let path = dir.path().join(format!("run{i}.ndjson"));
        telemetry::persist(&r.log, &path).unwrap();
        assert_eq!(telemetry::load(&path).unwrap(), r.log);
    }
}
