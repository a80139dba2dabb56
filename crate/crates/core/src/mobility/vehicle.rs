use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::idm::IdmParams;
use super::mobil::MobilParams;
use super::MobilityError;
use crate::geom::Vec2;
use crate::roadnet::{Edge, NodeId, RoadNetwork, WayId};

pub type VehicleId = u32;

pub const DEFAULT_VEHICLE_LENGTH: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverProfile {
    /// Multiplier on the posted limit.
    pub velocity_factor: f64,
    pub idm: IdmParams,
    pub mobil: MobilParams,
}

impl Default for DriverProfile {
    fn default() -> Self {
        Self {
            velocity_factor: 1.0,
            idm: IdmParams::default(),
            mobil: MobilParams::default(),
        }
    }
}

impl DriverProfile {
    pub fn with_velocity_factor(self, velocity_factor: f64) -> Self {
        Self { velocity_factor, ..self }
    }

    pub fn validate(&self) -> Result<(), MobilityError> {
        if !(self.velocity_factor > 0.0 && self.velocity_factor.is_finite()) {
            return Err(MobilityError::InvalidParameter {
                name: "velocity_factor",
                value: self.velocity_factor,
            });
        }
        self.idm.validate()?;
        self.mobil.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanePosition {
    pub way: WayId,
    pub segment: usize,
    pub lane: u32,
    /// Distance of the front bumper from the segment start, in travel direction.
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VehicleStatus {
    Driving,
    /// No reachable destination; the vehicle no longer takes part in traffic.
    Parked,
}

/// A car on the road graph. Its reference point is the front bumper.
#[derive(Debug, Clone)]
pub struct Vehicle {
    pub id: VehicleId,
    pub length: f64,
    pub profile: DriverProfile,
    pub lane: u32,
    pub offset: f64,
    pub velocity: f64,
    pub acceleration: f64,
    /// `velocity_factor` times the limit of the current way.
    pub desired_speed: f64,
    pub destination: Option<NodeId>,
    /// Total distance driven.
    pub odometer: f64,
    pub status: VehicleStatus,
    pub(crate) edge: Edge,
    /// Remaining trajectory; the front is always `edge.to`.
    pub(crate) route: VecDeque<NodeId>,
    pub(crate) lane_change_cooldown: f64,
    /// Edge and lane driven before the current one, as (from, to, lane).
    pub(crate) previous_edge: Option<(NodeId, NodeId, u32)>,
    /// The trip that follows the current one, starting at `destination`.
    pub(crate) next_trip: Option<Vec<NodeId>>,
}

/// Result of moving a vehicle along its trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Advance {
    Moved,
    /// The final trajectory node was reached with `leftover` meters still to drive.
    TripComplete { node: NodeId, leftover: f64 },
}

impl Vehicle {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        id: VehicleId,
        network: &RoadNetwork,
        route: &[NodeId],
        lane: u32,
        offset: f64,
        velocity: f64,
        length: f64,
        profile: DriverProfile,
    ) -> Result<Self, MobilityError> {
        if route.len() < 2 {
            return Err(MobilityError::InvalidRoute("a route needs at least two nodes".into()));
        }
        let edge = network
            .edge(route[0], route[1])
            .ok_or_else(|| MobilityError::InvalidRoute(format!("no road from {} to {}", route[0], route[1])))?
            .clone();
        if !(0.0..=edge.length).contains(&offset) {
            return Err(MobilityError::InvalidRoute(format!(
                "offset {offset} outside segment of length {}",
                edge.length
            )));
        }
        if lane >= edge.lanes {
            return Err(MobilityError::InvalidRoute(format!("lane {lane} does not exist")));
        }
        if !(velocity >= 0.0 && length > 0.0) {
            return Err(MobilityError::InvalidRoute("negative speed or non-positive length".into()));
        }
        profile.validate()?;
        let vehicle = Self {
            id,
            length,
            profile,
            lane,
            offset,
            velocity,
            acceleration: 0.0,
            desired_speed: profile.velocity_factor * edge.speed_limit,
            destination: route.last().copied(),
            odometer: 0.0,
            status: VehicleStatus::Driving,
            edge,
            route: route[1..].iter().copied().collect(),
            lane_change_cooldown: 0.0,
            previous_edge: None,
            next_trip: None,
        };
        vehicle.check_route(network)?;
        Ok(vehicle)
    }

    fn check_route(&self, network: &RoadNetwork) -> Result<(), MobilityError> {
        for pair in self.route.iter().collect::<Vec<_>>().windows(2) {
            if network.edge(*pair[0], *pair[1]).is_none() {
                return Err(MobilityError::InvalidRoute(format!("no road from {} to {}", pair[0], pair[1])));
            }
        }
        Ok(())
    }

    pub fn edge(&self) -> &Edge {
        &self.edge
    }

    /// The node currently being approached.
    pub fn approached_node(&self) -> NodeId {
        self.edge.to
    }

    pub fn previous_node(&self) -> NodeId {
        self.edge.from
    }

    /// Remaining planned trajectory, starting with the approached node.
    pub fn trajectory(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.route.iter().copied()
    }

    /// Node `i` steps ahead on the trajectory, continuing into the next trip.
    pub(crate) fn upcoming(&self, i: usize) -> Option<NodeId> {
        match self.route.get(i) {
            Some(&n) => Some(n),
            None => self.next_trip.as_ref()?.get(i + 1 - self.route.len()).copied(),
        }
    }

    pub fn distance_to_node(&self) -> f64 {
        self.edge.length - self.offset
    }

    pub fn lane_position(&self) -> LanePosition {
        LanePosition {
            way: self.edge.way,
            segment: self.edge.segment,
            lane: self.lane,
            offset: self.offset,
        }
    }

    pub fn position(&self, network: &RoadNetwork) -> Vec2 {
        let a = network.nodes()[&self.edge.from].pos;
        let b = network.nodes()[&self.edge.to].pos;
        a.lerp(b, self.offset / self.edge.length)
    }

    /// Replaces the trajectory from the node the vehicle is standing on.
    pub(crate) fn assign_route(&mut self, network: &RoadNetwork, route: &[NodeId]) -> Result<(), MobilityError> {
        if route.len() < 2 || route[0] != self.edge.to {
            return Err(MobilityError::InvalidRoute(format!(
                "new route must start at {} and contain a second node",
                self.edge.to
            )));
        }
        self.destination = route.last().copied();
        self.route = route.iter().copied().collect();
        self.check_route(network)?;
        Ok(())
    }

    /// Semi-implicit Euler: the new speed (never negative) moves the vehicle.
    pub(crate) fn integrate(&mut self, network: &RoadNetwork, acceleration: f64, dt: f64) -> Result<Advance, MobilityError> {
        self.acceleration = acceleration;
        self.velocity = (self.velocity + acceleration * dt).max(0.0);
        self.advance(network, self.velocity * dt)
    }

    /// Drives `distance` meters along the trajectory, crossing nodes as needed.
    pub(crate) fn advance(&mut self, network: &RoadNetwork, distance: f64) -> Result<Advance, MobilityError> {
        self.offset += distance;
        self.odometer += distance;
        while self.offset >= self.edge.length {
            let node = self.edge.to;
            if self.route.len() < 2 {
                let leftover = self.offset - self.edge.length;
                self.offset = self.edge.length;
                return Ok(Advance::TripComplete { node, leftover });
            }
            self.route.pop_front();
            let next = self.route[0];
            let edge = network
                .edge(node, next)
                .ok_or_else(|| MobilityError::InvalidRoute(format!("no road from {node} to {next}")))?
                .clone();
            self.offset -= self.edge.length;
            self.previous_edge = Some((self.edge.from, self.edge.to, self.lane));
            self.lane = self.lane.min(edge.lanes - 1);
            self.desired_speed = self.profile.velocity_factor * edge.speed_limit;
            self.edge = edge;
        }
        Ok(Advance::Moved)
    }
}
