//! Event log persistence and reporting.
//!
//! Logs are stored as newline-delimited JSON, one event per line, and every
//! line including the last ends in `\n`. A missing final newline means the
//! writer was interrupted and the file is rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{EventBody, SimEvent};
use crate::signboard::LightColor;

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: truncated record (no trailing newline)")]
    Truncated { line: usize },
    #[error("event {index}: expected seq {expected}, found {found}")]
    SeqGap {
        index: usize,
        expected: u64,
        found: u64,
    },
    #[error("event seq {seq}: time goes backwards ({t} after {prev})")]
    TimeReversal { seq: u64, t: f64, prev: f64 },
}

impl TelemetryError {
    /// 1-based line number for format errors, if any.
    pub fn line(&self) -> Option<usize> {
        match self {
            TelemetryError::Parse { line, .. } | TelemetryError::Truncated { line } => Some(*line),
            _ => None,
        }
    }
}

/// Check the log invariants: dense, strictly increasing `seq` and
/// non-decreasing time.
pub fn validate_log(log: &[SimEvent]) -> Result<(), TelemetryError> {
    let Some(first) = log.first() else {
        return Ok(());
    };
    let mut prev_t = first.t;
    for (index, e) in log.iter().enumerate() {
        let expected = first.seq + index as u64;
        if e.seq != expected {
            return Err(TelemetryError::SeqGap {
                index,
                expected,
                found: e.seq,
            });
        }
        if e.t < prev_t || !e.t.is_finite() {
            return Err(TelemetryError::TimeReversal {
                seq: e.seq,
                t: e.t,
                prev: prev_t,
            });
        }
        prev_t = e.t;
    }
    Ok(())
}

pub fn to_ndjson(log: &[SimEvent]) -> String {
    log.iter().fold(String::new(), |mut out, e| {
        out.push_str(&e.to_json_line());
        out.push('\n');
        out
    })
}

pub fn parse_ndjson(text: &str) -> Result<Vec<SimEvent>, TelemetryError> {
    let mut events = Vec::new();
    let mut rest = text;
    let mut line = 0;
    while !rest.is_empty() {
        line += 1;
        let Some(end) = rest.find('\n') else {
            return Err(TelemetryError::Truncated { line });
        };
        let record = &rest[..end];
        rest = &rest[end + 1..];
        let event = serde_json::from_str(record)
            .map_err(|source| TelemetryError::Parse { line, source })?;
        events.push(event);
    }
    validate_log(&events)?;
    Ok(events)
}

pub fn persist(log: &[SimEvent], path: &Path) -> Result<(), TelemetryError> {
    validate_log(log)?;
    let io_err = |source| TelemetryError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    file.write_all(to_ndjson(log).as_bytes()).map_err(io_err)?;
    file.flush().map_err(io_err)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<SimEvent>, TelemetryError> {
    let text = fs::read_to_string(path).map_err(|source| TelemetryError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_ndjson(&text)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VehicleCompliance {
    pub alerts: u64,
    pub auto_brakes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub total_alerts: u64,
    pub alerts_cleared_by_driver: u64,
    pub auto_brake_events: u64,
    /// Distinct vehicles with at least one auto-brake.
    pub non_compliant_vehicles: u64,
    /// Vehicles with at least one alert or auto-brake.
    pub per_vehicle: BTreeMap<String, VehicleCompliance>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreemptionReport {
    pub preemption_requests: u64,
    /// Red transitions on a board whose previous transition was to green.
    pub completions: u64,
    pub ambulances_served: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub compliance: ComplianceReport,
    pub preemption: PreemptionReport,
}

pub fn compliance_report(log: &[SimEvent]) -> ComplianceReport {
    let mut report = ComplianceReport::default();
    for e in log {
        match e.body {
            EventBody::AlertRaised { .. } => {
                report.total_alerts += 1;
                report
                    .per_vehicle
                    .entry(e.subject.clone())
                    .or_default()
                    .alerts += 1;
            }
            EventBody::AlertCleared { .. } => report.alerts_cleared_by_driver += 1,
            EventBody::AutoBrakeEngaged { .. } => {
                report.auto_brake_events += 1;
                report
                    .per_vehicle
                    .entry(e.subject.clone())
                    .or_default()
                    .auto_brakes += 1;
            }
            _ => {}
        }
    }
    report.non_compliant_vehicles = report
        .per_vehicle
        .values()
        .filter(|v| v.auto_brakes > 0)
        .count() as u64;
    report
}

pub fn preemption_report(log: &[SimEvent]) -> PreemptionReport {
    let mut report = PreemptionReport::default();
    let mut last_change: BTreeMap<&str, LightColor> = BTreeMap::new();
    let mut served = BTreeSet::new();
    for e in log {
        if let EventBody::LightChanged { light, source, .. } = &e.body {
            match light {
                LightColor::Green => {
                    report.preemption_requests += 1;
                    served.insert(source.as_str());
                }
                LightColor::Red
                    if last_change.get(e.subject.as_str()) == Some(&LightColor::Green) =>
                {
                    report.completions += 1;
                }
                _ => {}
            }
            last_change.insert(e.subject.as_str(), *light);
        }
    }
    report.ambulances_served = served.len() as u64;
    report
}

pub fn report(log: &[SimEvent]) -> Report {
    Report {
        compliance: compliance_report(log),
        preemption: preemption_report(log),
    }
}

/// Aligned plain-text rendering for terminals.
pub fn render_text(report: &Report) -> String {
    let c = &report.compliance;
    let p = &report.preemption;
    let mut out = String::new();
    let rows = [
        ("total_alerts", c.total_alerts),
        ("alerts_cleared_by_driver", c.alerts_cleared_by_driver),
        ("auto_brake_events", c.auto_brake_events),
        ("non_compliant_vehicles", c.non_compliant_vehicles),
        ("preemption_requests", p.preemption_requests),
        ("completions", p.completions),
        ("ambulances_served", p.ambulances_served),
    ];
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    out.push_str("compliance\n");
    for (k, v) in &rows[..4] {
        let _ = writeln!(out, "  {k:<width$}  {v:>6}");
    }
    if !c.per_vehicle.is_empty() {
        let id_width = c
            .per_vehicle
            .keys()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(7);
        let _ = writeln!(
            out,
            "  {:<id_width$}  {:>6}  {:>11}",
            "vehicle", "alerts", "auto_brakes"
        );
        for (id, v) in &c.per_vehicle {
            let _ = writeln!(
                out,
                "  {id:<id_width$}  {:>6}  {:>11}",
                v.alerts, v.auto_brakes
            );
        }
    }
    out.push_str("preemption\n");
    for (k, v) in &rows[4..] {
        let _ = writeln!(out, "  {k:<width$}  {v:>6}");
    }
    out
}
