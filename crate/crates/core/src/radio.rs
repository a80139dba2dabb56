//! Cellular link layer: base stations, log-distance path loss, RSSI/SNR and
//! A3-style handover with hysteresis and time-to-trigger.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geom::Vec2;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub type StationId = u32;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RadioError {
    #[error("invalid value {value} for `{name}`")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("duplicate station id {0}")]
    DuplicateStation(StationId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseStation {
    pub id: StationId,
    pub pos: Vec2,
    #[serde(default = "default_tx_power")]
    pub tx_power_dbm: f64,
    #[serde(default = "default_carrier")]
    pub carrier_hz: f64,
}

fn default_tx_power() -> f64 {
    46.0
}

fn default_carrier() -> f64 {
    1.8e9
}

impl BaseStation {
    pub fn new(id: StationId, pos: Vec2) -> Self {
        Self {
            id,
            pos,
            tx_power_dbm: default_tx_power(),
            carrier_hz: default_carrier(),
        }
    }

    pub fn validate(&self) -> Result<(), RadioError> {
        if !self.tx_power_dbm.is_finite() {
            return Err(RadioError::InvalidParameter { name: "tx_power_dbm", value: self.tx_power_dbm });
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return Err(RadioError::InvalidParameter { name: "carrier_hz", value: self.carrier_hz });
        }
        if !(self.pos.x.is_finite() && self.pos.y.is_finite()) {
            return Err(RadioError::InvalidParameter { name: "pos", value: f64::NAN });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationModel {
    pub exponent: f64,
    /// d0, m.
    pub reference_distance: f64,
    /// Standard deviation of log-normal shadowing, dB. Zero disables it.
    pub shadowing_sigma_db: f64,
}

impl Default for PropagationModel {
    fn default() -> Self {
        Self {
            exponent: 3.5,
            reference_distance: 1.0,
            shadowing_sigma_db: 0.0,
        }
    }
}

impl PropagationModel {
    pub fn validate(&self) -> Result<(), RadioError> {
        if !(self.exponent > 0.0 && self.exponent.is_finite()) {
            return Err(RadioError::InvalidParameter { name: "exponent", value: self.exponent });
        }
        if !(self.reference_distance > 0.0 && self.reference_distance.is_finite()) {
            return Err(RadioError::InvalidParameter {
                name: "reference_distance",
                value: self.reference_distance,
            });
        }
        if !(self.shadowing_sigma_db >= 0.0 && self.shadowing_sigma_db.is_finite()) {
            return Err(RadioError::InvalidParameter {
                name: "shadowing_sigma_db",
                value: self.shadowing_sigma_db,
            });
        }
        Ok(())
    }
}

/// Free-space loss at the reference distance, dB.
pub fn reference_loss(carrier_hz: f64, reference_distance: f64) -> f64 {
    20.0 * (4.0 * PI * reference_distance * carrier_hz / SPEED_OF_LIGHT).log10()
}

/// Distances below the reference distance are clamped to it.
pub fn path_loss(distance: f64, carrier_hz: f64, model: &PropagationModel) -> f64 {
    let d0 = model.reference_distance;
    let d = distance.max(d0);
    reference_loss(carrier_hz, d0) + 10.0 * model.exponent * (d / d0).log10()
}

pub fn rssi(pos: Vec2, station: &BaseStation, model: &PropagationModel) -> f64 {
    station.tx_power_dbm - path_loss(pos.distance(station.pos), station.carrier_hz, model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub propagation: PropagationModel,
    pub noise_floor_dbm: f64,
    pub hysteresis_db: f64,
    pub time_to_trigger: f64,
    /// Link measurement period, s.
    pub sample_interval: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            propagation: PropagationModel::default(),
            noise_floor_dbm: -95.0,
            hysteresis_db: 3.0,
            time_to_trigger: 1.0,
            sample_interval: 1.0,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<(), RadioError> {
        self.propagation.validate()?;
        if !self.noise_floor_dbm.is_finite() {
            return Err(RadioError::InvalidParameter { name: "noise_floor_dbm", value: self.noise_floor_dbm });
        }
        if !(self.hysteresis_db >= 0.0 && self.hysteresis_db.is_finite()) {
            return Err(RadioError::InvalidParameter { name: "hysteresis_db", value: self.hysteresis_db });
        }
        if !(self.time_to_trigger >= 0.0 && self.time_to_trigger.is_finite()) {
            return Err(RadioError::InvalidParameter { name: "time_to_trigger", value: self.time_to_trigger });
        }
        if !(self.sample_interval > 0.0 && self.sample_interval.is_finite()) {
            return Err(RadioError::InvalidParameter { name: "sample_interval", value: self.sample_interval });
        }
        Ok(())
    }
}

pub fn validate_stations(stations: &[BaseStation]) -> Result<(), RadioError> {
    let mut seen = std::collections::BTreeSet::new();
    for s in stations {
        s.validate()?;
        if !seen.insert(s.id) {
            return Err(RadioError::DuplicateStation(s.id));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSample {
    pub t: f64,
    pub vehicle: u32,
    pub station: StationId,
    pub distance: f64,
    pub rssi: f64,
    pub snr: f64,
}

/// Measures every station from `pos`. `shadowing` adds a per-station offset in dB.
pub fn measure(
    t: f64,
    vehicle: u32,
    pos: Vec2,
    stations: &[BaseStation],
    config: &RadioConfig,
    mut shadowing: impl FnMut() -> f64,
) -> Vec<LinkSample> {
    stations
        .iter()
        .map(|s| {
            let rssi = rssi(pos, s, &config.propagation) + shadowing();
            LinkSample {
                t,
                vehicle,
                station: s.id,
                distance: pos.distance(s.pos),
                rssi,
                snr: rssi - config.noise_floor_dbm,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Attachment {
    pub vehicle: u32,
    pub serving: Option<StationId>,
    pub last_handover_t: Option<f64>,
    /// Neighbors currently above the serving station by the hysteresis, with
    /// the time the condition started to hold.
    pub triggers: BTreeMap<StationId, f64>,
}

impl Attachment {
    pub fn new(vehicle: u32) -> Self {
        Self { vehicle, ..Default::default() }
    }
}

fn strongest(samples: &[LinkSample], among: impl Fn(StationId) -> bool) -> Option<&LinkSample> {
    samples
        .iter()
        .filter(|s| among(s.station))
        .min_by(|a, b| b.rssi.total_cmp(&a.rssi).then(a.station.cmp(&b.station)))
}

/// Updates the attachment with one round of samples taken at time `now`.
/// Returns true when a handover happened. The first attachment is to the
/// strongest station and does not count as a handover.
pub fn handover_check(
    attachment: &mut Attachment,
    samples: &[LinkSample],
    hysteresis_db: f64,
    time_to_trigger: f64,
    now: f64,
) -> bool {
    let Some(serving) = attachment.serving.and_then(|id| samples.iter().find(|s| s.station == id)) else {
        attachment.serving = strongest(samples, |_| true).map(|s| s.station);
        attachment.triggers.clear();
        return false;
    };
    let serving_id = serving.station;
    let threshold = serving.rssi + hysteresis_db;
    let mut triggers = BTreeMap::new();
    for s in samples.iter().filter(|s| s.station != serving_id && s.rssi > threshold) {
        let since = attachment.triggers.get(&s.station).copied().unwrap_or(now);
        triggers.insert(s.station, since);
    }
    attachment.triggers = triggers;
    let ready = |id: StationId| attachment.triggers.get(&id).is_some_and(|since| now - since >= time_to_trigger);
    let Some(target) = strongest(samples, ready).map(|s| s.station) else {
        return false;
    };
    attachment.serving = Some(target);
    attachment.last_handover_t = Some(now);
    attachment.triggers.clear();
    true
}

pub const LINK_CSV_HEADER: &str = "t,vehicle_id,station_id,distance,rssi,snr,handover_flag";
