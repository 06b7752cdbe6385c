//! Pulse-width beacon codec.
//!
//! Every beacon carries exactly one quantity: the time period of its pulses
//! in milliseconds. Sign boards announce their type with it, ambulances use
//! it to request and release a green light. The two families of windows
//! overlap numerically, so the classifier is always chosen by the frame
//! [`Direction`], never by the period alone.
//!
//! Windows are open intervals. A period sitting exactly on a boundary, or in
//! a gap between windows, is `Unknown` and causes no actuation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("pulse period must be finite and positive, got {0} ms")]
    InvalidPeriod(f64),
    #[error("sign mode `unknown` has no window")]
    UnknownMode,
    #[error("ambulance signal `unknown` has no window")]
    UnknownSignal,
    #[error("invalid window table: {0}")]
    InvalidTable(String),
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    SpeedLimit,
    Humps,
    SchoolZone,
    Freeway,
    Unknown,
}

impl SignMode {
    pub const NAMED: [SignMode; 4] = [
        SignMode::SpeedLimit,
        SignMode::Humps,
        SignMode::SchoolZone,
        SignMode::Freeway,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SignMode::SpeedLimit => "speed_limit",
            SignMode::Humps => "humps",
            SignMode::SchoolZone => "school_zone",
            SignMode::Freeway => "freeway",
            SignMode::Unknown => "unknown",
        }
    }

    pub fn is_named(self) -> bool {
        self != SignMode::Unknown
    }
}

impl fmt::Display for SignMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmbulanceSignal {
    RequestGreen,
    ClearedRed,
    Unknown,
}

impl AmbulanceSignal {
    pub const NAMED: [AmbulanceSignal; 2] =
        [AmbulanceSignal::RequestGreen, AmbulanceSignal::ClearedRed];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    SignboardToVehicle,
    VehicleToSignboard,
}

/// One beacon transmission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseFrame {
    pub period_ms: f64,
    pub direction: Direction,
    pub source_id: String,
    /// Addressee for point-to-point frames (ambulance preemption). Beacons
    /// are broadcast and leave this empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_id: Option<String>,
    pub emitted_at: f64,
}

impl PulseFrame {
    pub fn beacon(source_id: impl Into<String>, period_ms: f64, emitted_at: f64) -> Self {
        Self {
            period_ms,
            direction: Direction::SignboardToVehicle,
            source_id: source_id.into(),
            target_id: None,
            emitted_at,
        }
    }

    pub fn preemption(
        source_id: impl Into<String>,
        target_id: impl Into<String>,
        period_ms: f64,
        emitted_at: f64,
    ) -> Self {
        Self {
            period_ms,
            direction: Direction::VehicleToSignboard,
            source_id: source_id.into(),
            target_id: Some(target_id.into()),
            emitted_at,
        }
    }
}

/// Open interval `(lo, hi)` in milliseconds. Serialized as `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, period_ms: f64) -> bool {
        self.lo < period_ms && period_ms < self.hi
    }

    pub fn midpoint(&self) -> f64 {
        (self.lo + self.hi) / 2.0
    }

    pub fn half_width(&self) -> f64 {
        (self.hi - self.lo) / 2.0
    }

    fn overlaps(&self, other: &Window) -> bool {
        self.lo < other.hi && other.lo < self.hi
    }
}

impl From<[f64; 2]> for Window {
    fn from([lo, hi]: [f64; 2]) -> Self {
        Self { lo, hi }
    }
}

impl From<Window> for [f64; 2] {
    fn from(w: Window) -> Self {
        [w.lo, w.hi]
    }
}

/// Period windows and speed fractions for every named mode and signal.
///
/// Construction always validates, so a `WindowTable` in hand is complete,
/// has disjoint windows and fractions in `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWindowTable", into = "RawWindowTable")]
pub struct WindowTable {
    sign_windows: BTreeMap<SignMode, Window>,
    ambulance_windows: BTreeMap<AmbulanceSignal, Window>,
    speed_fractions: BTreeMap<SignMode, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWindowTable {
    sign_windows: BTreeMap<SignMode, Window>,
    ambulance_windows: BTreeMap<AmbulanceSignal, Window>,
    speed_fractions: BTreeMap<SignMode, f64>,
}

impl TryFrom<RawWindowTable> for WindowTable {
    type Error = ProtocolError;

    fn try_from(raw: RawWindowTable) -> Result<Self> {
        WindowTable::new(raw.sign_windows, raw.ambulance_windows, raw.speed_fractions)
    }
}

impl From<WindowTable> for RawWindowTable {
    fn from(t: WindowTable) -> Self {
        RawWindowTable {
            sign_windows: t.sign_windows,
            ambulance_windows: t.ambulance_windows,
            speed_fractions: t.speed_fractions,
        }
    }
}

impl Default for WindowTable {
    fn default() -> Self {
        let sign_windows = BTreeMap::from([
            (SignMode::SpeedLimit, Window::new(45.0, 55.0)),
            (SignMode::Humps, Window::new(65.0, 75.0)),
            (SignMode::SchoolZone, Window::new(85.0, 95.0)),
            (SignMode::Freeway, Window::new(105.0, 115.0)),
        ]);
        let ambulance_windows = BTreeMap::from([
            (AmbulanceSignal::RequestGreen, Window::new(45.0, 55.0)),
            (AmbulanceSignal::ClearedRed, Window::new(65.0, 75.0)),
        ]);
        let speed_fractions = BTreeMap::from([
            (SignMode::SpeedLimit, 0.80),
            (SignMode::Humps, 0.30),
            (SignMode::SchoolZone, 0.50),
            (SignMode::Freeway, 1.00),
        ]);
        Self {
            sign_windows,
            ambulance_windows,
            speed_fractions,
        }
    }
}

fn check_windows<K: fmt::Debug + Copy + Ord>(
    family: &str,
    expected: &[K],
    windows: &BTreeMap<K, Window>,
) -> Result<()> {
    if windows.len() != expected.len() || expected.iter().any(|k| !windows.contains_key(k)) {
        return Err(ProtocolError::InvalidTable(format!(
            "{family} windows must cover exactly {expected:?}"
        )));
    }
    for (key, w) in windows {
        if !(w.lo.is_finite() && w.hi.is_finite() && w.lo < w.hi) {
            return Err(ProtocolError::InvalidTable(format!(
                "{family} window for {key:?} must satisfy lo < hi, got ({}, {})",
                w.lo, w.hi
            )));
        }
    }
    let entries: Vec<_> = windows.iter().collect();
    for (i, (ka, wa)) in entries.iter().enumerate() {
        for (kb, wb) in &entries[i + 1..] {
            if wa.overlaps(wb) {
                return Err(ProtocolError::InvalidTable(format!(
                    "{family} windows for {ka:?} and {kb:?} overlap"
                )));
            }
        }
    }
    Ok(())
}

fn check_period(period_ms: f64) -> Result<()> {
    if period_ms.is_finite() && period_ms > 0.0 {
        Ok(())
    } else {
        Err(ProtocolError::InvalidPeriod(period_ms))
    }
}

impl WindowTable {
    pub fn new(
        sign_windows: BTreeMap<SignMode, Window>,
        ambulance_windows: BTreeMap<AmbulanceSignal, Window>,
        speed_fractions: BTreeMap<SignMode, f64>,
    ) -> Result<Self> {
        check_windows("sign", &SignMode::NAMED, &sign_windows)?;
        check_windows("ambulance", &AmbulanceSignal::NAMED, &ambulance_windows)?;
        if speed_fractions.len() != SignMode::NAMED.len()
            || SignMode::NAMED
                .iter()
                .any(|m| !speed_fractions.contains_key(m))
        {
            return Err(ProtocolError::InvalidTable(
                "speed fractions must cover exactly the four named modes".into(),
            ));
        }
        for (mode, &f) in &speed_fractions {
            if !(f > 0.0 && f <= 1.0) {
                return Err(ProtocolError::InvalidTable(format!(
                    "speed fraction for {mode} must be in (0, 1], got {f}"
                )));
            }
        }
        Ok(Self {
            sign_windows,
            ambulance_windows,
            speed_fractions,
        })
    }

    pub fn sign_window(&self, mode: SignMode) -> Result<Window> {
        self.sign_windows
            .get(&mode)
            .copied()
            .ok_or(ProtocolError::UnknownMode)
    }

    pub fn ambulance_window(&self, signal: AmbulanceSignal) -> Result<Window> {
        self.ambulance_windows
            .get(&signal)
            .copied()
            .ok_or(ProtocolError::UnknownSignal)
    }

    /// Narrowest half-width over every window. Jitter below this value can
    /// never push a midpoint-encoded period out of its window.
    pub fn min_half_width(&self) -> f64 {
        self.sign_windows
            .values()
            .chain(self.ambulance_windows.values())
            .map(Window::half_width)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn classify_sign_pulse(&self, period_ms: f64) -> Result<SignMode> {
        check_period(period_ms)?;
        Ok(self
            .sign_windows
            .iter()
            .find(|(_, w)| w.contains(period_ms))
            .map_or(SignMode::Unknown, |(&mode, _)| mode))
    }

    pub fn classify_ambulance_pulse(&self, period_ms: f64) -> Result<AmbulanceSignal> {
        check_period(period_ms)?;
        Ok(self
            .ambulance_windows
            .iter()
            .find(|(_, w)| w.contains(period_ms))
            .map_or(AmbulanceSignal::Unknown, |(&signal, _)| signal))
    }

    /// Nominal transmit period for a sign mode: the window midpoint.
    pub fn encode_sign_mode(&self, mode: SignMode) -> Result<f64> {
        self.sign_window(mode).map(|w| w.midpoint())
    }

    pub fn encode_ambulance(&self, signal: AmbulanceSignal) -> Result<f64> {
        self.ambulance_window(signal).map(|w| w.midpoint())
    }

    pub fn target_speed_fraction(&self, mode: SignMode) -> Result<f64> {
        self.speed_fractions
            .get(&mode)
            .copied()
            .ok_or(ProtocolError::UnknownMode)
    }
}
