//! Scenario files (TOML). Every section is optional except `[map]`, and
//! unknown keys are rejected.
//!
//! ```toml
//! [map]
//! source = "reference.osm"        # .osm (cached on first load) or .netcache
//! # or a generated grid instead of `source`:
//! # [map.grid]
//! # rows = 9
//! # cols = 9
//!
//! [simulation]
//! duration = 300.0                # s
//! dt = 0.1                        # s
//! vehicles = 100
//! seed = 1
//! trace_interval = 1.0            # trajectory sampling period, s
//!
//! [simulation.traffic]            # see `TrafficConfig`
//! perception_horizon = 150.0
//! velocity_factor_min = 0.8
//! velocity_factor_max = 1.2
//!
//! [simulation.idm]                # see `IdmParams`
//! [simulation.mobil]              # see `MobilParams`
//!
//! [radio]
//! noise_floor_dbm = -95.0
//! hysteresis_db = 3.0
//! time_to_trigger = 1.0
//! sample_interval = 1.0
//! [radio.propagation]
//! exponent = 3.5
//!
//! [[stations]]
//! id = 0
//! pos = { x = 0.0, y = 0.0 }      # projected meters
//! tx_power_dbm = 46.0
//! carrier_hz = 1.8e9
//!
//! [sensing]
//! sensors = 20
//! cell_size = 25.0
//! interval = 30.0
//! scheme = "periodic"             # or "predictive" (requires `map`)
//! data_rate = 20000.0             # bytes per second
//! map = "snr_map.csv"
//! [sensing.channel]               # see `ChannelConfig`
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Relative paths are resolved against the scenario file's directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::mobility::{DriverProfile, IdmParams, MobilParams, TrafficConfig};
use crate::radio::{BaseStation, RadioConfig};
use crate::roadnet::synthetic::{grid_osm, GridSpec};
use crate::roadnet::{load_map, parse_osm, RoadNetwork, RoadnetError};
use crate::sensing::{ChannelConfig, Scheme, SensingConfig, SensingError, SnrMap};
use crate::sim::{SimConfig, SimError};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario syntax: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("map: {0}")]
    Map(#[from] RoadnetError),
    #[error("sensing map: {0}")]
    SnrMap(#[from] SensingError),
}

impl From<SimError> for ScenarioError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config { field, message } => ScenarioError::Invalid { field, message },
            other => ScenarioError::Invalid { field: "scenario".into(), message: other.to_string() },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSection {
    pub source: Option<PathBuf>,
    pub grid: Option<GridSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub duration: f64,
    pub dt: f64,
    pub vehicles: usize,
    pub seed: u64,
    pub trace_interval: f64,
    pub traffic: TrafficConfig,
    pub idm: IdmParams,
    pub mobil: MobilParams,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            duration: d.duration,
            dt: d.dt,
            vehicles: d.vehicles,
            seed: d.seed,
            trace_interval: d.trace_interval,
            traffic: d.traffic,
            idm: d.driver.idm,
            mobil: d.driver.mobil,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingSection {
    pub sensors: usize,
    pub cell_size: f64,
    pub interval: f64,
    pub scheme: Scheme,
    pub data_rate: f64,
    /// Trained SNR map for predictive scheduling.
    pub map: Option<PathBuf>,
    pub channel: ChannelConfig,
}

impl Default for SensingSection {
    fn default() -> Self {
        let d = SensingConfig::default();
        Self {
            sensors: SimConfig::default().sensors,
            cell_size: d.cell_size,
            interval: d.interval,
            scheme: d.scheme,
            data_rate: d.data_rate,
            map: None,
            channel: d.channel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub map: MapSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub radio: RadioConfig,
    #[serde(default)]
    pub stations: Vec<BaseStation>,
    #[serde(default)]
    pub sensing: SensingSection,
    #[serde(default)]
    pub output: OutputSection,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Scenario {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ScenarioError> {
        let mut scenario: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        scenario.base_dir = base_dir.to_path_buf();
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        match (&self.map.source, &self.map.grid) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => {
                return Err(ScenarioError::Invalid {
                    field: "map".into(),
                    message: "set exactly one of `source` and `grid`".into(),
                })
            }
        }
        self.sim_config().validate()?;
        Ok(())
    }

    pub fn sim_config(&self) -> SimConfig {
        let s = &self.simulation;
        SimConfig {
            duration: s.duration,
            dt: s.dt,
            vehicles: s.vehicles,
            sensors: self.sensing.sensors,
            seed: s.seed,
            trace_interval: s.trace_interval,
            traffic: s.traffic.clone(),
            driver: DriverProfile { velocity_factor: 1.0, idm: s.idm, mobil: s.mobil },
            radio: self.radio,
            stations: self.stations.clone(),
            sensing: SensingConfig {
                cell_size: self.sensing.cell_size,
                interval: self.sensing.interval,
                scheme: self.sensing.scheme,
                data_rate: self.sensing.data_rate,
                channel: self.sensing.channel,
            },
            record_map: false,
        }
    }

    pub fn network(&self) -> Result<Arc<RoadNetwork>, ScenarioError> {
        let network = match (&self.map.source, &self.map.grid) {
            (Some(source), _) => load_map(&self.resolve(source))?.0,
            (None, Some(grid)) => parse_osm(&grid_osm(grid))?,
            (None, None) => unreachable!("validated"),
        };
        Ok(Arc::new(network))
    }

    pub fn snr_map(&self) -> Result<Option<Arc<SnrMap>>, ScenarioError> {
        match &self.sensing.map {
            Some(path) => Ok(Some(Arc::new(SnrMap::load(&self.resolve(path))?))),
            None => Ok(None),
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }
}
