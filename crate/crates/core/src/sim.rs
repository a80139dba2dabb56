//! One integrated simulation run: traffic, radio measurements and
//! crowdsensing transmissions driven by a single event queue.
//!
//! Mobility advances in periodic `MobilityStep` events; a step at time `t`
//! moves the world to `t + dt`. Observers (trajectory trace, link sampling,
//! transmission triggers) that fall on the same instant fire first, so they
//! see the state at exactly `t`. All event times are whole multiples of one
//! microsecond, computed from integer counters, so periodic streams line up
//! without floating-point drift.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::mobility::{DriverProfile, MobilityError, Traffic, TrafficConfig, TrafficStats, VehicleId};
use crate::radio::{self, Attachment, BaseStation, LinkSample, RadioConfig, RadioError, LINK_CSV_HEADER};
use crate::rng::{self, SeedStreams};
use crate::roadnet::RoadNetwork;
use crate::sensing::{
    next_tx_time, Kinematics, PendingTransmission, Scheme, SensingConfig, SensingError, SnrMap, TransmissionRecord,
    TX_CSV_HEADER,
};
use crate::simkernel::{ClockMode, Event, EventKind, EventQueue, HandlerId, KernelError, ManagedModel};

pub const TRAJECTORY_CSV_HEADER: &str = "t,vehicle_id,x,y,v,a,way_id,lane";

const TICKS_PER_SECOND: f64 = 1e6;
const WORLD: HandlerId = HandlerId(u32::MAX);

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid `{field}`: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Mobility(#[from] MobilityError),
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("event {kind:?} at t = {time} s failed: {source}")]
    Handler {
        time: f64,
        kind: EventKind,
        #[source]
        source: Box<SimError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SimError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        SimError::Config { field: field.into(), message: message.into() }
    }
}

/// Everything a run needs besides the road network.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Simulated time, s.
    pub duration: f64,
    pub dt: f64,
    pub vehicles: usize,
    /// How many vehicles act as sensors.
    pub sensors: usize,
    pub seed: u64,
    /// Trajectory trace period, s.
    pub trace_interval: f64,
    pub traffic: TrafficConfig,
    /// Template for every driver; the velocity factor is drawn per vehicle.
    pub driver: DriverProfile,
    pub radio: RadioConfig,
    pub stations: Vec<BaseStation>,
    pub sensing: SensingConfig,
    /// Build an SNR map from the link samples of every vehicle.
    pub record_map: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            duration: 300.0,
            dt: 0.1,
            vehicles: 100,
            sensors: 20,
            seed: 1,
            trace_interval: 1.0,
            traffic: TrafficConfig::default(),
            driver: DriverProfile::default(),
            radio: RadioConfig::default(),
            stations: Vec::new(),
            sensing: SensingConfig::default(),
            record_map: false,
        }
    }
}

fn ticks(field: &str, seconds: f64) -> Result<u64, SimError> {
    let t = (seconds * TICKS_PER_SECOND).round();
    if !(seconds > 0.0 && seconds.is_finite()) || t < 1.0 {
        return Err(SimError::config(field, format!("{seconds} must be a positive number of seconds")));
    }
    if ((t / TICKS_PER_SECOND) - seconds).abs() > 1e-9 * seconds.max(1.0) {
        return Err(SimError::config(field, format!("{seconds} is not a whole number of microseconds")));
    }
    Ok(t as u64)
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        ticks("simulation.duration", self.duration)?;
        ticks("simulation.dt", self.dt)?;
        ticks("simulation.trace_interval", self.trace_interval)?;
        if self.sensors > self.vehicles {
            return Err(SimError::config(
                "sensing.sensors",
                format!("{} sensors but only {} vehicles", self.sensors, self.vehicles),
            ));
        }
        let mobility = |prefix: &str, e: MobilityError| match e {
            MobilityError::InvalidParameter { name, value } => {
                SimError::config(format!("{prefix}.{name}"), format!("{value} is out of range"))
            }
            other => SimError::Mobility(other),
        };
        self.traffic.validate().map_err(|e| mobility("simulation.traffic", e))?;
        self.driver.idm.validate().map_err(|e| mobility("simulation.idm", e))?;
        self.driver.mobil.validate().map_err(|e| mobility("simulation.mobil", e))?;
        self.radio.validate().map_err(|e| match e {
            RadioError::InvalidParameter { name, value } => {
                SimError::config(format!("radio.{name}"), format!("{value} is out of range"))
            }
            other => SimError::Radio(other),
        })?;
        ticks("radio.sample_interval", self.radio.sample_interval)?;
        radio::validate_stations(&self.stations).map_err(|e| SimError::config("stations", e.to_string()))?;
        self.sensing.validate().map_err(|e| match e {
            SensingError::InvalidParameter { name, value } => {
                SimError::config(format!("sensing.{name}"), format!("{value} is out of range"))
            }
            other => SimError::Sensing(other),
        })?;
        Ok(())
    }
}

#[derive(Debug)]
struct Sensor {
    /// Start of the transmission that carried the most recent data.
    last_cut: f64,
    pending: Option<PendingTransmission>,
}

/// Wall-clock time spent per subsystem.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SubsystemTimers {
    pub mobility: Duration,
    pub radio: Duration,
    pub sensing: Duration,
    pub trace: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub simulated: f64,
    pub wall_clock: Duration,
    pub setup: Duration,
    pub timers: SubsystemTimers,
    pub events: BTreeMap<&'static str, u64>,
    pub traffic: TrafficStats,
    pub handovers: u64,
    pub transmissions: usize,
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "simulated {:.1} s in {:.3} s wall clock (setup {:.3} s)", self.simulated, self.wall_clock.as_secs_f64(), self.setup.as_secs_f64())?;
        let total: u64 = self.events.values().sum();
        write!(f, "events: {total}")?;
        for (kind, n) in &self.events {
            write!(f, ", {kind} {n}")?;
        }
        writeln!(f)?;
        let t = &self.timers;
        writeln!(
            f,
            "timers: mobility {:.3} s, radio {:.3} s, sensing {:.3} s, trace {:.3} s",
            t.mobility.as_secs_f64(),
            t.radio.as_secs_f64(),
            t.sensing.as_secs_f64(),
            t.trace.as_secs_f64()
        )?;
        write!(
            f,
            "traffic: {} trips, {} lane changes, {} collisions; {} handovers, {} transmissions",
            self.traffic.trips_completed, self.traffic.lane_changes, self.traffic.collisions, self.handovers, self.transmissions
        )
    }
}

fn kind_name(kind: EventKind) -> &'static str {
    match kind {
        EventKind::MobilityStep => "mobility_step",
        EventKind::SignalStep => "signal_step",
        EventKind::TxTrigger => "tx_trigger",
        EventKind::SampleSnr => "sample_snr",
        EventKind::StatFlush => "stat_flush",
        EventKind::Custom(_) => "custom",
    }
}

/// Finished run: CSV traces held in memory plus the summary.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trajectory_csv: String,
    pub link_csv: String,
    pub transmissions: Vec<TransmissionRecord>,
    pub snr_map: Option<SnrMap>,
    pub report: RunReport,
}

pub fn transmissions_csv(records: &[TransmissionRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(TX_CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{:.3},{},{},{:.0},{:.6},{:.3},{:.3}",
            r.t_start, r.vehicle, r.scheme, r.payload_bytes, r.duration, r.goodput_bps, r.snr_db
        );
    }
    out
}

impl SimOutput {
    pub fn transmissions_csv(&self) -> String {
        transmissions_csv(&self.transmissions)
    }

    /// Writes `trajectory.csv`, `link.csv`, `transmissions.csv` and, when a
    /// map was recorded, `snr_map.csv`.
    pub fn write_to(&self, dir: &Path) -> Result<(), SimError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("trajectory.csv"), &self.trajectory_csv)?;
        fs::write(dir.join("link.csv"), &self.link_csv)?;
        fs::write(dir.join("transmissions.csv"), self.transmissions_csv())?;
        if let Some(map) = &self.snr_map {
            map.save(&dir.join("snr_map.csv"))?;
        }
        Ok(())
    }
}

pub struct Simulation {
    config: SimConfig,
    queue: EventQueue,
    traffic: Traffic,
    attachments: BTreeMap<VehicleId, Attachment>,
    sensors: BTreeMap<VehicleId, Sensor>,
    map: Option<Arc<SnrMap>>,
    recorded: Option<SnrMap>,
    shadowing: Option<(ChaCha8Rng, Normal<f64>)>,
    trajectory: String,
    link: String,
    transmissions: Vec<TransmissionRecord>,
    timers: SubsystemTimers,
    events: BTreeMap<&'static str, u64>,
    handovers: u64,
    step_ticks: u64,
    trace_ticks: u64,
    sample_ticks: u64,
    end_ticks: u64,
    steps_done: u64,
    traces_done: u64,
    samples_done: u64,
    setup: Duration,
    started: Option<Instant>,
}

fn at(k: u64, period_ticks: u64) -> f64 {
    (k * period_ticks) as f64 / TICKS_PER_SECOND
}

impl Simulation {
    /// Populates the network and schedules the initial events. `map` is the
    /// frozen SNR map consulted by predictive scheduling.
    pub fn new(
        network: Arc<RoadNetwork>,
        config: SimConfig,
        map: Option<Arc<SnrMap>>,
        mode: ClockMode,
    ) -> Result<Self, SimError> {
        let setup_start = Instant::now();
        config.validate()?;
        if config.sensing.scheme == Scheme::Predictive && map.is_none() && config.sensors > 0 && !config.stations.is_empty() {
            return Err(SimError::config("sensing.map", "predictive scheduling needs a trained SNR map"));
        }
        let streams = SeedStreams::new(config.seed);
        let mut traffic = Traffic::new(network, config.traffic.clone(), config.driver, streams.stream(rng::TRIPS))?;
        let ids = traffic.populate(config.vehicles, &mut streams.stream(rng::SPAWN), &mut streams.stream(rng::DRIVERS))?;

        let mut queue = EventQueue::new(mode);
        let step_ticks = ticks("simulation.dt", config.dt)?;
        let trace_ticks = ticks("simulation.trace_interval", config.trace_interval)?;
        let sample_ticks = ticks("radio.sample_interval", config.radio.sample_interval)?;
        let end_ticks = ticks("simulation.duration", config.duration)?;

        queue.schedule(0.0, WORLD, EventKind::StatFlush)?;
        if !config.stations.is_empty() {
            queue.schedule(0.0, WORLD, EventKind::SampleSnr)?;
        }
        queue.schedule(0.0, WORLD, EventKind::MobilityStep)?;

        let mut sensors = BTreeMap::new();
        if !config.stations.is_empty() && config.sensors > 0 {
            let mut rng = streams.stream(rng::SENSING);
            let mut chosen: Vec<VehicleId> = rand::seq::index::sample(&mut rng, ids.len(), config.sensors)
                .into_iter()
                .map(|i| ids[i])
                .collect();
            chosen.sort_unstable();
            let last_slot = (config.sensing.interval.floor() as u64).max(1);
            for id in chosen {
                let first = rng.random_range(1..=last_slot) as f64;
                if first < config.duration {
                    queue.schedule(first, HandlerId(id), EventKind::TxTrigger)?;
                }
                sensors.insert(id, Sensor { last_cut: 0.0, pending: None });
            }
        }
        let sigma = config.radio.propagation.shadowing_sigma_db;
        let shadowing = (sigma > 0.0).then(|| {
            (streams.stream(rng::SHADOWING), Normal::new(0.0, sigma).expect("sigma validated"))
        });
        let attachments = ids.iter().map(|&id| (id, Attachment::new(id))).collect();
        let recorded = if config.record_map {
            Some(SnrMap::new(config.sensing.cell_size, traffic.network().origin())?)
        } else {
            None
        };
        let mut trajectory = String::with_capacity(
            48 * (1 + config.vehicles * (end_ticks / trace_ticks + 1) as usize),
        );
        trajectory.push_str(TRAJECTORY_CSV_HEADER);
        trajectory.push('\n');
        let mut link = String::new();
        link.push_str(LINK_CSV_HEADER);
        link.push('\n');
        Ok(Self {
            config,
            queue,
            traffic,
            attachments,
            sensors,
            map,
            recorded,
            shadowing,
            trajectory,
            link,
            transmissions: Vec::new(),
            timers: SubsystemTimers::default(),
            events: BTreeMap::new(),
            handovers: 0,
            step_ticks,
            trace_ticks,
            sample_ticks,
            end_ticks,
            steps_done: 0,
            traces_done: 0,
            samples_done: 0,
            setup: setup_start.elapsed(),
            started: None,
        })
    }

    pub fn traffic(&self) -> &Traffic {
        &self.traffic
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn now(&self) -> f64 {
        self.queue.now()
    }

    pub fn sensor_ids(&self) -> impl Iterator<Item = VehicleId> + '_ {
        self.sensors.keys().copied()
    }

    /// Runs every remaining event in standalone mode.
    pub fn run(&mut self) -> Result<(), SimError> {
        while let Some(event) = self.queue.pop() {
            self.dispatch(event)?;
        }
        Ok(())
    }

    /// Standalone convenience: build, run and collect.
    pub fn execute(
        network: Arc<RoadNetwork>,
        config: SimConfig,
        map: Option<Arc<SnrMap>>,
    ) -> Result<SimOutput, SimError> {
        let mut sim = Simulation::new(network, config, map, ClockMode::Standalone)?;
        sim.run()?;
        Ok(sim.finish())
    }

    pub fn finish(self) -> SimOutput {
        let wall_clock = self.started.map_or(Duration::ZERO, |s| s.elapsed());
        SimOutput {
            report: RunReport {
                simulated: self.config.duration,
                wall_clock,
                setup: self.setup,
                timers: self.timers,
                events: self.events,
                traffic: self.traffic.stats(),
                handovers: self.handovers,
                transmissions: self.transmissions.len(),
            },
            trajectory_csv: self.trajectory,
            link_csv: self.link,
            transmissions: self.transmissions,
            snr_map: self.recorded,
        }
    }

    fn dispatch(&mut self, event: Event) -> Result<(), SimError> {
        self.started.get_or_insert_with(Instant::now);
        *self.events.entry(kind_name(event.kind)).or_default() += 1;
        let result = match event.kind {
            EventKind::MobilityStep => self.on_mobility_step(),
            EventKind::StatFlush => self.on_trace(event.fire_time),
            EventKind::SampleSnr => self.on_sample(event.fire_time),
            EventKind::TxTrigger => self.on_tx_trigger(event.target.0, event.fire_time),
            EventKind::SignalStep | EventKind::Custom(_) => Ok(()),
        };
        result.map_err(|e| SimError::Handler { time: event.fire_time, kind: event.kind, source: Box::new(e) })
    }

    fn on_mobility_step(&mut self) -> Result<(), SimError> {
        let start = Instant::now();
        self.traffic.step(self.config.dt)?;
        for e in self.traffic.take_events() {
            if let crate::mobility::TrafficEvent::Parked { vehicle, node, .. } = e {
                log::warn!("vehicle {vehicle} parked at node {node}: no reachable destination");
            }
        }
        self.steps_done += 1;
        if (self.steps_done + 1) * self.step_ticks <= self.end_ticks {
            self.queue.schedule(at(self.steps_done, self.step_ticks), WORLD, EventKind::MobilityStep)?;
        }
        self.timers.mobility += start.elapsed();
        Ok(())
    }

    fn on_trace(&mut self, t: f64) -> Result<(), SimError> {
        let start = Instant::now();
        let network = Arc::clone(self.traffic.network());
        for v in self.traffic.vehicles() {
            let p = v.position(&network);
            let _ = writeln!(
                self.trajectory,
                "{t:.3},{},{:.3},{:.3},{:.3},{:.3},{},{}",
                v.id,
                p.x,
                p.y,
                v.velocity,
                v.acceleration,
                v.edge().way,
                v.lane
            );
        }
        self.traces_done += 1;
        if self.traces_done * self.trace_ticks <= self.end_ticks {
            self.queue.schedule(at(self.traces_done, self.trace_ticks), WORLD, EventKind::StatFlush)?;
        }
        self.timers.trace += start.elapsed();
        Ok(())
    }

    fn measure(&mut self, t: f64, vehicle: VehicleId) -> Vec<LinkSample> {
        let v = self.traffic.vehicle(vehicle).expect("known vehicle");
        let pos = v.position(self.traffic.network());
        let shadowing = &mut self.shadowing;
        radio::measure(t, vehicle, pos, &self.config.stations, &self.config.radio, || match shadowing {
            Some((rng, normal)) => normal.sample(rng),
            None => 0.0,
        })
    }

    fn on_sample(&mut self, t: f64) -> Result<(), SimError> {
        let start = Instant::now();
        let ids: Vec<VehicleId> = self.traffic.vehicles().map(|v| v.id).collect();
        for id in ids {
            let samples = self.measure(t, id);
            let attachment = self.attachments.get_mut(&id).expect("attachment per vehicle");
            let handed_over = radio::handover_check(
                attachment,
                &samples,
                self.config.radio.hysteresis_db,
                self.config.radio.time_to_trigger,
                t,
            );
            self.handovers += u64::from(handed_over);
            let serving = attachment.serving;
            let Some(s) = samples.iter().find(|s| Some(s.station) == serving) else { continue };
            let _ = writeln!(
                self.link,
                "{t:.3},{id},{},{:.3},{:.3},{:.3},{}",
                s.station,
                s.distance,
                s.rssi,
                s.snr,
                u8::from(handed_over)
            );
            if let Some(map) = &mut self.recorded {
                let pos = self.traffic.vehicle(id).expect("known vehicle").position(self.traffic.network());
                map.update(pos, s.snr);
            }
        }
        self.samples_done += 1;
        if self.samples_done * self.sample_ticks <= self.end_ticks {
            self.queue.schedule(at(self.samples_done, self.sample_ticks), WORLD, EventKind::SampleSnr)?;
        }
        self.timers.radio += start.elapsed();
        Ok(())
    }

    fn on_tx_trigger(&mut self, id: VehicleId, now: f64) -> Result<(), SimError> {
        let start = Instant::now();
        let samples = self.measure(now, id);
        let serving = self.attachments.get(&id).and_then(|a| a.serving);
        let sample = samples
            .iter()
            .find(|s| Some(s.station) == serving)
            .or_else(|| samples.iter().min_by(|a, b| b.rssi.total_cmp(&a.rssi).then(a.station.cmp(&b.station))));
        let Some(snr) = sample.map(|s| s.snr) else { return Ok(()) };
        let sensing = self.config.sensing;
        let sensor = self.sensors.get_mut(&id).expect("trigger for a sensor");
        let pending = sensor.pending.get_or_insert_with(|| {
            let payload = sensing.data_rate * (now - sensor.last_cut);
            sensor.last_cut = now;
            PendingTransmission::new(now, payload, snr)
        });
        let next = match pending.attempt(now, snr, id, sensing.scheme, &sensing.channel) {
            Some(record) => {
                self.transmissions.push(record);
                sensor.pending = None;
                let v = self.traffic.vehicle(id).expect("known vehicle");
                let network = self.traffic.network();
                let kinematics = Kinematics {
                    pos: v.position(network),
                    approached: network.nodes()[&v.approached_node()].pos,
                    speed: v.velocity,
                };
                match &self.map {
                    Some(map) => next_tx_time(sensing.scheme, sensing.interval, now, map, &kinematics),
                    None => now + sensing.interval,
                }
            }
            None => now + sensing.channel.retry_backoff,
        };
        if next < self.config.duration {
            self.queue.schedule(next, HandlerId(id), EventKind::TxTrigger)?;
        }
        self.timers.sensing += start.elapsed();
        Ok(())
    }
}

impl ManagedModel for Simulation {
    type Error = SimError;

    fn next_event_time(&mut self) -> Option<f64> {
        self.queue.next_event_time()
    }

    fn dispatch_next(&mut self, host_now: f64) -> Result<Option<Event>, SimError> {
        let Some(event) = self.queue.pop_at(host_now)? else { return Ok(None) };
        self.dispatch(event)?;
        Ok(Some(event))
    }
}
