//! Vehicular mobility and cellular crowdsensing simulation in one process.
//!
//! * [`roadnet`]: OSM import, routing graph, cache and SVG export.
//! * [`mobility`]: IDM car following, MOBIL lane changes, signals, trips.
//! * [`simkernel`]: deterministic event queue, standalone or host-driven.
//! * [`radio`]: path loss, RSSI/SNR and handover.
//! * [`sensing`]: SNR maps and periodic/predictive transmission scheduling.
//! * [`sim`] and [`experiment`]: integrated runs and the scheme comparison.

pub mod cli;
pub mod experiment;
pub mod geom;
pub mod mobility;
pub mod radio;
pub mod rng;
pub mod roadnet;
pub mod scenario;
pub mod sensing;
pub mod sim;
pub mod simkernel;
pub mod spacetime;
