//! Crowdsensing: a grid map of measured SNR and the transmission schedulers
//! that consult it.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geom::Vec2;
use crate::roadnet::GeoPoint;

#[derive(Debug, thiserror::Error)]
pub enum SensingError {
    #[error("invalid value {value} for `{name}`")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("map file line {line}: {message}")]
    MapFormat { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Cell = (i64, i64);

/// Grid cell containing `pos`, by floor division.
pub fn cell_of(pos: Vec2, cell_size: f64) -> Cell {
    ((pos.x / cell_size).floor() as i64, (pos.y / cell_size).floor() as i64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub mean_snr: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnrMap {
    cell_size: f64,
    origin: GeoPoint,
    cells: BTreeMap<Cell, CellStats>,
}

pub const MAP_CSV_HEADER: &str = "i,j,mean_snr,count";

impl SnrMap {
    pub fn new(cell_size: f64, origin: GeoPoint) -> Result<Self, SensingError> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(SensingError::InvalidParameter { name: "cell_size", value: cell_size });
        }
        Ok(Self { cell_size, origin, cells: BTreeMap::new() })
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    pub fn cells(&self) -> &BTreeMap<Cell, CellStats> {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Running-mean update of the cell containing `pos`.
    pub fn update(&mut self, pos: Vec2, snr: f64) {
        let stats = self
            .cells
            .entry(cell_of(pos, self.cell_size))
            .or_insert(CellStats { mean_snr: 0.0, count: 0 });
        stats.count += 1;
        stats.mean_snr += (snr - stats.mean_snr) / stats.count as f64;
    }

    pub fn insert(&mut self, cell: Cell, stats: CellStats) {
        self.cells.insert(cell, stats);
    }

    pub fn cell(&self, cell: Cell) -> Option<CellStats> {
        self.cells.get(&cell).copied()
    }

    pub fn mean_at(&self, pos: Vec2) -> Option<f64> {
        self.cell(cell_of(pos, self.cell_size)).map(|c| c.mean_snr)
    }

    /// Two header lines (`cell_size,origin_lat,origin_lon` and its values),
    /// then one `i,j,mean_snr,count` row per visited cell in index order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "cell_size,origin_lat,origin_lon")?;
        writeln!(out, "{},{},{}", self.cell_size, self.origin.lat, self.origin.lon)?;
        writeln!(out, "{MAP_CSV_HEADER}")?;
        for ((i, j), s) in &self.cells {
            writeln!(out, "{i},{j},{},{}", s.mean_snr, s.count)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), SensingError> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut file)?;
        file.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, SensingError> {
        let bad = |line: usize, message: &str| SensingError::MapFormat { line, message: message.into() };
        let mut lines = input.lines().enumerate().map(|(n, l)| (n + 1, l));
        let mut next = |what: &str| -> Result<(usize, String), SensingError> {
            match lines.next() {
                Some((n, l)) => Ok((n, l?)),
                None => Err(bad(0, &format!("missing {what}"))),
            }
        };
        let (n, header) = next("header")?;
        if header.trim() != "cell_size,origin_lat,origin_lon" {
            return Err(bad(n, "expected `cell_size,origin_lat,origin_lon`"));
        }
        let (n, values) = next("header values")?;
        let nums: Vec<f64> = values
            .trim()
            .split(',')
            .map(|v| v.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(n, &e.to_string()))?;
        let [cell_size, lat, lon] = nums[..] else {
            return Err(bad(n, "expected three values"));
        };
        let mut map = SnrMap::new(cell_size, GeoPoint::new(lat, lon))?;
        let (n, columns) = next("column header")?;
        if columns.trim() != MAP_CSV_HEADER {
            return Err(bad(n, &format!("expected `{MAP_CSV_HEADER}`")));
        }
        for (n, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != 4 {
                return Err(bad(n, "expected four columns"));
            }
            let parse_i = |s: &str| s.parse::<i64>().map_err(|e| bad(n, &e.to_string()));
            let mean_snr = f[2].parse::<f64>().map_err(|e| bad(n, &e.to_string()))?;
            let count = f[3].parse::<u64>().map_err(|e| bad(n, &e.to_string()))?;
            if count == 0 {
                return Err(bad(n, "cell count must be at least 1"));
            }
            map.insert((parse_i(f[0])?, parse_i(f[1])?), CellStats { mean_snr, count });
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self, SensingError> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub pos: Vec2,
    /// The approached node coincides with the position; no direction is known.
    pub degenerate: bool,
}

/// Straight-line extrapolation from `p` toward `n` at speed `v` for `tau`
/// seconds. May run past `n`.
pub fn predict_position(p: Vec2, n: Vec2, v: f64, tau: f64) -> Prediction {
    let d = n - p;
    let len = d.norm();
    if len == 0.0 {
        return Prediction { pos: p, degenerate: true };
    }
    Prediction { pos: p + d * (tau * v / len), degenerate: false }
}

/// The state of a vehicle that prediction needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub pos: Vec2,
    /// Position of the node being approached.
    pub approached: Vec2,
    pub speed: f64,
}

pub fn predicted_snr(map: &SnrMap, vehicle: &Kinematics, t_query: f64, now: f64) -> Option<f64> {
    let p = predict_position(vehicle.pos, vehicle.approached, vehicle.speed, t_query - now);
    map.mean_at(p.pos)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Periodic,
    Predictive,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Periodic => "periodic",
            Scheme::Predictive => "predictive",
        })
    }
}

/// Time of the next transmission after one started at `t_tx`.
///
/// Predictive scheduling scans the whole seconds in
/// `[t_tx + interval/2, t_tx + 3·interval/2]` and picks the one with the best
/// predicted SNR, earliest on ties. Cells without measurements are skipped;
/// if every candidate is unknown the periodic time is used.
pub fn next_tx_time(scheme: Scheme, interval: f64, t_tx: f64, map: &SnrMap, vehicle: &Kinematics) -> f64 {
    let periodic = t_tx + interval;
    if scheme == Scheme::Periodic {
        return periodic;
    }
    let lo = (t_tx + interval / 2.0).ceil() as i64;
    let hi = (t_tx + 1.5 * interval).floor() as i64;
    let mut best: Option<(f64, f64)> = None;
    for t in lo..=hi {
        let t = t as f64;
        if let Some(snr) = predicted_snr(map, vehicle, t, t_tx) {
            if best.is_none_or(|(b, _)| snr > b) {
                best = Some((snr, t));
            }
        }
    }
    best.map_or(periodic, |(_, t)| t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub bandwidth_hz: f64,
    pub efficiency: f64,
    pub max_rate_bps: f64,
    /// At or below this SNR a transmission attempt fails.
    pub min_snr_db: f64,
    pub retry_backoff: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            bandwidth_hz: 10e6,
            efficiency: 0.6,
            max_rate_bps: 50e6,
            min_snr_db: -5.0,
            retry_backoff: 1.0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), SensingError> {
        let positive = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("efficiency", self.efficiency),
            ("max_rate_bps", self.max_rate_bps),
            ("retry_backoff", self.retry_backoff),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(SensingError::InvalidParameter { name, value });
            }
        }
        if !self.min_snr_db.is_finite() {
            return Err(SensingError::InvalidParameter { name: "min_snr_db", value: self.min_snr_db });
        }
        Ok(())
    }

    /// Achievable rate in bit/s.
    pub fn rate(&self, snr_db: f64) -> f64 {
        let shannon = self.efficiency * self.bandwidth_hz * (1.0 + 10f64.powf(snr_db / 10.0)).log2();
        shannon.min(self.max_rate_bps)
    }

    /// Airtime for `payload_bytes`, or `None` when the link is too weak.
    pub fn airtime(&self, payload_bytes: f64, snr_db: f64) -> Option<f64> {
        (snr_db > self.min_snr_db).then(|| payload_bytes * 8.0 / self.rate(snr_db))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionRecord {
    pub t_start: f64,
    pub vehicle: u32,
    pub scheme: Scheme,
    pub payload_bytes: f64,
    /// Includes time lost to failed attempts.
    pub duration: f64,
    pub goodput_bps: f64,
    pub snr_db: f64,
}

/// A transmission that started at `t_start` and may need retries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingTransmission {
    pub t_start: f64,
    pub payload_bytes: f64,
    pub snr_at_start: f64,
    pub attempts: u32,
}

impl PendingTransmission {
    pub fn new(t_start: f64, payload_bytes: f64, snr_at_start: f64) -> Self {
        Self { t_start, payload_bytes, snr_at_start, attempts: 0 }
    }

    /// One attempt at time `now` with the current SNR. On success the record
    /// covers the whole span from the first attempt.
    pub fn attempt(&mut self, now: f64, snr_db: f64, vehicle: u32, scheme: Scheme, channel: &ChannelConfig) -> Option<TransmissionRecord> {
        self.attempts += 1;
        let airtime = channel.airtime(self.payload_bytes, snr_db)?;
        let duration = now - self.t_start + airtime;
        Some(TransmissionRecord {
            t_start: self.t_start,
            vehicle,
            scheme,
            payload_bytes: self.payload_bytes,
            duration,
            goodput_bps: self.payload_bytes * 8.0 / duration,
            snr_db: self.snr_at_start,
        })
    }
}

/// Single-shot transmission; `None` when the SNR is at or below the minimum.
pub fn transmit(payload_bytes: f64, snr_db: f64, channel: &ChannelConfig) -> Option<f64> {
    channel.airtime(payload_bytes, snr_db)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingConfig {
    pub cell_size: f64,
    /// Δt, s.
    pub interval: f64,
    pub scheme: Scheme,
    /// Sensed data per second, bytes.
    pub data_rate: f64,
    pub channel: ChannelConfig,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            cell_size: 25.0,
            interval: 30.0,
            scheme: Scheme::Periodic,
            data_rate: 20_000.0,
            channel: ChannelConfig::default(),
        }
    }
}

impl SensingConfig {
    pub fn validate(&self) -> Result<(), SensingError> {
        for (name, value) in [("cell_size", self.cell_size), ("interval", self.interval), ("data_rate", self.data_rate)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(SensingError::InvalidParameter { name, value });
            }
        }
        self.channel.validate()
    }
}

pub const TX_CSV_HEADER: &str = "t_start,vehicle_id,scheme,payload_bytes,duration_s,goodput_bps,snr_db";

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn origin() -> GeoPoint {
        GeoPoint::new(0.0, 0.0)
    }

    #[test]
    fn cell_of_uses_floor() {
        assert_eq!(cell_of(Vec2::new(37.0, 42.0), 10.0), (3, 4));
        assert_eq!(cell_of(Vec2::new(0.0, 0.0), 10.0), (0, 0));
        assert_eq!(cell_of(Vec2::new(-1.0, 0.0), 10.0), (-1, 0));
        assert_eq!(cell_of(Vec2::new(-10.0, -10.5), 10.0), (-1, -2));
    }

    #[test]
    fn running_mean() {
        let mut m = SnrMap::new(10.0, origin()).unwrap();
        m.update(Vec2::new(1.0, 1.0), 10.0);
        assert_eq!(m.cell((0, 0)), Some(CellStats { mean_snr: 10.0, count: 1 }));
        m.update(Vec2::new(2.0, 9.0), 20.0);
        assert_eq!(m.cell((0, 0)), Some(CellStats { mean_snr: 15.0, count: 2 }));
    }

    #[test]
    fn map_csv_round_trip() {
        let mut m = SnrMap::new(25.0, GeoPoint::new(51.5, 7.4)).unwrap();
        m.update(Vec2::new(-3.0, 80.0), 12.345678901234);
        m.update(Vec2::new(300.0, 1.0), -4.0);
        m.update(Vec2::new(301.0, 2.0), 1.0 / 3.0);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = SnrMap::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("cell_size,origin_lat,origin_lon\n25,51.5,7.4\ni,j,mean_snr,count\n-1,3,"));
    }

    #[test]
    fn malformed_map_names_the_line() {
        let err = SnrMap::read_csv("cell_size,origin_lat,origin_lon\n25,0,0\ni,j,mean_snr,count\n1,2,x,3\n".as_bytes());
        assert!(matches!(err, Err(SensingError::MapFormat { line: 4, .. })));
    }

    #[test]
    fn prediction_examples() {
        let p = Vec2::new(0.0, 0.0);
        let n = Vec2::new(3.0, 4.0);
        assert_eq!(predict_position(p, n, 5.0, 0.0).pos, p);
        let q = predict_position(p, n, 5.0, 2.0).pos;
        assert!((q.x - 6.0).abs() < 1e-12 && (q.y - 8.0).abs() < 1e-12);
        let d = predict_position(p, p, 5.0, 2.0);
        assert!(d.degenerate);
        assert_eq!(d.pos, p);
    }

    fn ramp_map() -> SnrMap {
        // Cells along +x with SNR equal to the cell index.
        let mut m = SnrMap::new(10.0, origin()).unwrap();
        for i in 0..100 {
            m.update(Vec2::new(i as f64 * 10.0 + 5.0, 5.0), i as f64);
        }
        m
    }

    #[test]
    fn stationary_vehicle_reads_its_own_cell() {
        let m = ramp_map();
        let k = Kinematics { pos: Vec2::new(42.0, 5.0), approached: Vec2::new(100.0, 5.0), speed: 0.0 };
        assert_eq!(predicted_snr(&m, &k, 100.0, 0.0), Some(4.0));
        let off_map = Kinematics { pos: Vec2::new(42.0, 500.0), ..k };
        assert_eq!(predicted_snr(&m, &off_map, 3.0, 0.0), None);
    }

    #[test]
    fn two_cell_crossing() {
        let mut m = SnrMap::new(10.0, origin()).unwrap();
        m.update(Vec2::new(5.0, 5.0), 3.0);
        m.update(Vec2::new(15.0, 5.0), 9.0);
        let k = Kinematics { pos: Vec2::new(1.0, 5.0), approached: Vec2::new(50.0, 5.0), speed: 2.0 };
        // Brute-force scan for the first query time landing in the second cell.
        let crossing = (0..100).map(|i| i as f64 * 0.25).find(|&t| 1.0 + 2.0 * t >= 10.0).unwrap();
        assert_eq!(predicted_snr(&m, &k, crossing, 0.0), Some(9.0));
        assert_eq!(predicted_snr(&m, &k, crossing - 0.25, 0.0), Some(3.0));
    }

    #[test]
    fn scheduling_examples() {
        let k = Kinematics { pos: Vec2::new(5.0, 5.0), approached: Vec2::new(900.0, 5.0), speed: 10.0 };
        let m = ramp_map();
        assert_eq!(next_tx_time(Scheme::Periodic, 30.0, 0.0, &m, &k), 30.0);
        assert_eq!(next_tx_time(Scheme::Predictive, 30.0, 0.0, &m, &k), 45.0);
        let mut flat = SnrMap::new(1000.0, origin()).unwrap();
        flat.update(Vec2::new(1.0, 1.0), 7.0);
        let slow = Kinematics { speed: 1.0, ..k };
        assert_eq!(next_tx_time(Scheme::Predictive, 30.0, 0.0, &flat, &slow), 15.0);
        let empty = SnrMap::new(10.0, origin()).unwrap();
        assert_eq!(next_tx_time(Scheme::Predictive, 30.0, 7.0, &empty, &k), 37.0);
    }

    #[test]
    fn rate_model() {
        let c = ChannelConfig::default();
        assert!((c.rate(0.0) - 6e6).abs() < 1e-6);
        assert!((transmit(600_000.0, 0.0, &c).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(c.rate(200.0), 50e6);
        assert!((transmit(1e6, 200.0, &c).unwrap() - 8e6 / 50e6).abs() < 1e-15);
        assert_eq!(transmit(1000.0, -5.0, &c), None);
        let one = transmit(1000.0, 3.0, &c).unwrap();
        assert!((transmit(2000.0, 3.0, &c).unwrap() - 2.0 * one).abs() < 1e-15);
    }

    #[test]
    fn retries_accumulate_duration() {
        let c = ChannelConfig::default();
        let mut p = PendingTransmission::new(10.0, 600_000.0, -8.0);
        assert!(p.attempt(10.0, -8.0, 1, Scheme::Periodic, &c).is_none());
        let r = p.attempt(11.0, 0.0, 1, Scheme::Periodic, &c).unwrap();
        assert!((r.duration - 1.8).abs() < 1e-12);
        assert_eq!(r.snr_db, -8.0);
        assert!((r.goodput_bps - 600_000.0 * 8.0 / 1.8).abs() < 1e-6);
        assert_eq!(p.attempts, 2);
    }

    proptest! {
        #[test]
        fn map_mean_matches_batch_mean(samples in prop::collection::vec(-30.0f64..40.0, 1..300)) {
            let mut m = SnrMap::new(25.0, origin()).unwrap();
            for s in &samples {
                m.update(Vec2::new(3.0, 4.0), *s);
            }
            let batch = samples.iter().sum::<f64>() / samples.len() as f64;
            let cell = m.cell((0, 0)).unwrap();
            prop_assert!((cell.mean_snr - batch).abs() < 1e-9);
            prop_assert_eq!(cell.count, samples.len() as u64);
        }

        #[test]
        fn prediction_travels_v_tau(px in -1e4f64..1e4, py in -1e4f64..1e4, nx in -1e4f64..1e4, ny in -1e4f64..1e4,
                                    v in 0.0f64..60.0, tau in 0.0f64..100.0) {
            let p = Vec2::new(px, py);
            let n = Vec2::new(nx, ny);
            prop_assume!(p != n);
            let q = predict_position(p, n, v, tau).pos;
            prop_assert!(((q - p).norm() - v * tau).abs() < 1e-9);
        }

        #[test]
        fn predictive_time_stays_in_window(t_tx in 0.0f64..500.0, interval in 1.0f64..60.0, speed in 0.0f64..30.0) {
            let k = Kinematics { pos: Vec2::new(5.0, 5.0), approached: Vec2::new(900.0, 300.0), speed };
            let t = next_tx_time(Scheme::Predictive, interval, t_tx, &ramp_map(), &k);
            prop_assert!(t >= t_tx + interval / 2.0 && t <= t_tx + 1.5 * interval);
        }
    }
}
