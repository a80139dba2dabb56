//! Microscopic traffic: car following, lane changes, signals and trips.

mod idm;
mod mobil;
mod signal;
mod traffic;
mod vehicle;

pub use idm::{idm_acceleration, IdmParams, EMERGENCY_DECELERATION};
pub use mobil::{mobil_decide, mobil_incentive, Follower, LaneDecision, LaneNeighbors, Leader, MobilParams, Subject};
pub use signal::{PhaseDurations, SignalPhase, TrafficSignal};
pub use traffic::{
    approach_group, plan_trip, Obstacle, ObstacleKind, Perception, SpawnRequest, Traffic, TrafficConfig, TrafficEvent,
    TrafficStats,
};
pub use vehicle::{Advance, DriverProfile, LanePosition, Vehicle, VehicleId, VehicleStatus, DEFAULT_VEHICLE_LENGTH};

use crate::roadnet::{NodeId, RoadnetError};

#[derive(Debug, thiserror::Error)]
pub enum MobilityError {
    #[error("invalid value {value} for `{name}`")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("bumper-to-bumper gap {gap} m is not positive")]
    Collision { gap: f64 },
    #[error("invalid route: {0}")]
    InvalidRoute(String),
    #[error("invalid placement: {0}")]
    InvalidPlacement(String),
    #[error("no vehicle with id {0}")]
    UnknownVehicle(VehicleId),
    #[error("no reachable destination from node {from}")]
    NoDestination { from: NodeId },
    #[error(transparent)]
    Roadnet(#[from] RoadnetError),
}
