//! The traffic world: every vehicle, signal and intersection claim on one
//! road network, advanced in fixed time steps.
//!
//! A step runs in this order: intersection claims and yellow-light
//! decisions, sequential lane changes, car-following accelerations computed
//! from one snapshot, integration, trip re-planning and finally the signal
//! clocks. Unsignalized intersections are arbitrated first come, first served:
//! the vehicle nearest to a free intersection claims it for its approach and
//! everyone from other approaches waits at the node until the claim clears.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::idm::{idm_acceleration, EMERGENCY_DECELERATION};
use super::mobil::{mobil_incentive, Follower, LaneNeighbors, Leader, Subject};
use super::signal::{PhaseDurations, SignalPhase, TrafficSignal};
use super::vehicle::{Advance, DriverProfile, Vehicle, VehicleId, VehicleStatus, DEFAULT_VEHICLE_LENGTH};
use super::MobilityError;
use crate::roadnet::{Edge, NodeId, RoadNetwork};

/// Extra distance past the node a claim holder's rear must cover before release.
const CLAIM_CLEARANCE: f64 = 1.0;
/// How far back lane-change followers are searched.
const FOLLOWER_HORIZON: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    pub perception_horizon: f64,
    pub vehicle_length: f64,
    pub signal_durations: PhaseDurations,
    pub lane_changes: bool,
    /// Minimum time between two lane changes of one vehicle, s.
    pub lane_change_cooldown: f64,
    pub intersection_control: bool,
    /// Lower bound of the distance at which a vehicle claims the next intersection.
    pub claim_distance: f64,
    /// Destination draws before a vehicle gives up and parks.
    pub trip_attempts: u32,
    pub velocity_factor_min: f64,
    pub velocity_factor_max: f64,
    /// Minimum distance between randomly placed vehicles, m.
    pub min_spawn_spacing: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            perception_horizon: 150.0,
            vehicle_length: DEFAULT_VEHICLE_LENGTH,
            signal_durations: PhaseDurations::default(),
            lane_changes: true,
            lane_change_cooldown: 3.0,
            intersection_control: true,
            claim_distance: 20.0,
            trip_attempts: 64,
            velocity_factor_min: 0.8,
            velocity_factor_max: 1.2,
            min_spawn_spacing: 15.0,
        }
    }
}

impl TrafficConfig {
    pub fn validate(&self) -> Result<(), MobilityError> {
        let positive = [
            ("perception_horizon", self.perception_horizon),
            ("vehicle_length", self.vehicle_length),
            ("velocity_factor_min", self.velocity_factor_min),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(MobilityError::InvalidParameter { name, value });
            }
        }
        let non_negative = [
            ("lane_change_cooldown", self.lane_change_cooldown),
            ("claim_distance", self.claim_distance),
            ("min_spawn_spacing", self.min_spawn_spacing),
        ];
        for (name, value) in non_negative {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(MobilityError::InvalidParameter { name, value });
            }
        }
        if !(self.velocity_factor_max >= self.velocity_factor_min && self.velocity_factor_max.is_finite()) {
            return Err(MobilityError::InvalidParameter {
                name: "velocity_factor_max",
                value: self.velocity_factor_max,
            });
        }
        if self.trip_attempts == 0 {
            return Err(MobilityError::InvalidParameter {
                name: "trip_attempts",
                value: 0.0,
            });
        }
        TrafficSignal::new(0, self.signal_durations, SignalPhase::Green, 0.0)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObstacleKind {
    Vehicle(VehicleId),
    /// Stop line of a red (or stoppable yellow) signal.
    Signal(NodeId),
    /// Intersection claimed by another approach.
    Junction(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    /// Bumper-to-bumper distance, or distance to the stop line.
    pub gap: f64,
    pub speed: f64,
    pub kind: ObstacleKind,
}

/// What a driver sees ahead in its lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perception {
    /// Infinite when nothing is within the perception horizon.
    pub gap: f64,
    pub approach_rate: f64,
    pub obstacle: Option<Obstacle>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrafficEvent {
    TripCompleted { vehicle: VehicleId, node: NodeId, time: f64 },
    Parked { vehicle: VehicleId, node: NodeId, time: f64 },
    LaneChanged { vehicle: VehicleId, from: u32, to: u32, time: f64 },
    Collision { vehicle: VehicleId, other: VehicleId, gap: f64, time: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TrafficStats {
    pub steps: u64,
    /// Vehicle-steps in which a vehicle overlapped the one ahead.
    pub collisions: u64,
    pub trips_completed: u64,
    pub lane_changes: u64,
}

/// An explicit placement. The first route edge is the one the vehicle starts on.
#[derive(Debug, Clone, PartialEq)]
pub struct SpawnRequest {
    pub route: Vec<NodeId>,
    pub lane: u32,
    /// Front bumper position along the first edge.
    pub offset: f64,
    pub speed: f64,
    pub velocity_factor: f64,
    pub length: Option<f64>,
}

impl SpawnRequest {
    pub fn new(route: Vec<NodeId>) -> Self {
        Self {
            route,
            lane: 0,
            offset: 0.0,
            speed: 0.0,
            velocity_factor: 1.0,
            length: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Hold {
    /// Odometer reading at which the front reaches the node.
    enter: f64,
    release: f64,
}

#[derive(Debug, Clone)]
struct Claim {
    approach: NodeId,
    holders: BTreeMap<VehicleId, Hold>,
    /// Another approach is waiting; no new holders are admitted.
    contested: bool,
}

type LaneKey = (NodeId, NodeId, u32);

/// Signal group of an approach: 0 for mostly east-west travel, 1 otherwise.
pub fn approach_group(network: &RoadNetwork, from: NodeId, node: NodeId) -> u8 {
    let d = network.nodes()[&node].pos - network.nodes()[&from].pos;
    if d.x.abs() >= d.y.abs() {
        0
    } else {
        1
    }
}

/// Draws uniform destinations among `candidates` until one is reachable from
/// `from`. Routes never turn straight back at a node unless it is a dead end;
/// `came_from` is the node the vehicle arrived from, if any.
pub fn plan_trip<R: Rng + ?Sized>(
    network: &RoadNetwork,
    from: NodeId,
    came_from: Option<NodeId>,
    candidates: &[NodeId],
    rng: &mut R,
    attempts: u32,
) -> Result<Vec<NodeId>, MobilityError> {
    for _ in 0..attempts {
        let Some(&dest) = candidates.choose(rng) else { break };
        if dest == from {
            continue;
        }
        if let Some(route) = route_without_u_turns(network, from, came_from, dest) {
            return Ok(route);
        }
    }
    Err(MobilityError::NoDestination { from })
}

#[derive(PartialEq)]
struct Frontier {
    cost: f64,
    state: (NodeId, Option<NodeId>),
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.state.cmp(&self.state))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest path over (node, arrived-from) states, so that reversing
/// direction is only possible where the road ends.
fn route_without_u_turns(network: &RoadNetwork, from: NodeId, came_from: Option<NodeId>, dest: NodeId) -> Option<Vec<NodeId>> {
    type State = (NodeId, Option<NodeId>);
    let start: State = (from, came_from);
    let mut best: HashMap<State, (f64, Option<State>)> = HashMap::from([(start, (0.0, None))]);
    let mut heap = BinaryHeap::from([Frontier { cost: 0.0, state: start }]);
    while let Some(Frontier { cost, state }) = heap.pop() {
        if cost > best[&state].0 {
            continue;
        }
        let (node, prev) = state;
        if node == dest {
            let mut path = vec![node];
            let mut cursor = best[&state].1;
            while let Some(s) = cursor {
                path.push(s.0);
                cursor = best[&s].1;
            }
            path.reverse();
            return Some(path);
        }
        let exits = network.edges_from(node);
        let dead_end = exits.iter().all(|e| Some(e.to) == prev);
        for e in exits {
            if Some(e.to) == prev && !dead_end {
                continue;
            }
            let next: State = (e.to, Some(node));
            let c = cost + e.length;
            if best.get(&next).is_none_or(|(old, _)| c < *old) {
                best.insert(next, (c, Some(state)));
                heap.push(Frontier { cost: c, state: next });
            }
        }
    }
    None
}

pub struct Traffic {
    network: Arc<RoadNetwork>,
    config: TrafficConfig,
    driver: DriverProfile,
    vehicles: BTreeMap<VehicleId, Vehicle>,
    signals: BTreeMap<NodeId, TrafficSignal>,
    lanes: HashMap<LaneKey, Vec<VehicleId>>,
    claims: BTreeMap<NodeId, Claim>,
    /// Yellow-light decisions, sticky until the phase changes: true means stop.
    yellow: BTreeMap<(VehicleId, NodeId), bool>,
    destinations: Vec<NodeId>,
    /// Edges arriving at each node.
    incoming: HashMap<NodeId, Vec<Edge>>,
    max_length: f64,
    next_id: VehicleId,
    time: f64,
    trips: ChaCha8Rng,
    events: Vec<TrafficEvent>,
    stats: TrafficStats,
}

impl Traffic {
    /// Every signal node of the network gets a fixed-time signal with the
    /// configured durations, starting green.
    pub fn new(
        network: Arc<RoadNetwork>,
        config: TrafficConfig,
        driver: DriverProfile,
        trips: ChaCha8Rng,
    ) -> Result<Self, MobilityError> {
        config.validate()?;
        driver.validate()?;
        let mut signals = BTreeMap::new();
        for node in network.signal_nodes().map(|n| n.id) {
            if network.is_road_node(node) {
                signals.insert(node, TrafficSignal::new(node, config.signal_durations, SignalPhase::Green, 0.0)?);
            }
        }
        let destinations = network
            .road_nodes()
            .into_iter()
            .filter(|n| !network.edges_from(*n).is_empty())
            .collect();
        let mut incoming: HashMap<NodeId, Vec<Edge>> = HashMap::new();
        for e in network.edges() {
            incoming.entry(e.to).or_default().push(e.clone());
        }
        Ok(Self {
            max_length: config.vehicle_length,
            incoming,
            network,
            config,
            driver,
            vehicles: BTreeMap::new(),
            signals,
            lanes: HashMap::new(),
            claims: BTreeMap::new(),
            yellow: BTreeMap::new(),
            destinations,
            next_id: 0,
            time: 0.0,
            trips,
            events: Vec::new(),
            stats: TrafficStats::default(),
        })
    }

    pub fn network(&self) -> &Arc<RoadNetwork> {
        &self.network
    }

    pub fn config(&self) -> &TrafficConfig {
        &self.config
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn stats(&self) -> TrafficStats {
        self.stats
    }

    pub fn vehicles(&self) -> impl Iterator<Item = &Vehicle> {
        self.vehicles.values()
    }

    pub fn vehicle(&self, id: VehicleId) -> Option<&Vehicle> {
        self.vehicles.get(&id)
    }

    pub fn vehicle_count(&self) -> usize {
        self.vehicles.len()
    }

    pub fn signals(&self) -> impl Iterator<Item = &TrafficSignal> {
        self.signals.values()
    }

    pub fn signal(&self, node: NodeId) -> Option<&TrafficSignal> {
        self.signals.get(&node)
    }

    /// Installs or replaces the signal at `signal.node`.
    pub fn set_signal(&mut self, signal: TrafficSignal) -> Result<(), MobilityError> {
        if !self.network.nodes().contains_key(&signal.node) {
            return Err(MobilityError::InvalidPlacement(format!("unknown signal node {}", signal.node)));
        }
        self.signals.insert(signal.node, signal);
        Ok(())
    }

    pub fn take_events(&mut self) -> Vec<TrafficEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn spawn(&mut self, request: SpawnRequest) -> Result<VehicleId, MobilityError> {
        let length = request.length.unwrap_or(self.config.vehicle_length);
        let profile = self.driver.with_velocity_factor(request.velocity_factor);
        let id = self.next_id;
        let vehicle = Vehicle::new(
            id,
            &self.network,
            &request.route,
            request.lane,
            request.offset,
            request.speed,
            length,
            profile,
        )?;
        let key = (vehicle.edge.from, vehicle.edge.to, vehicle.lane);
        if let Some(list) = self.lanes.get(&key) {
            for other in list.iter().map(|o| &self.vehicles[o]) {
                if vehicle.offset > other.offset - other.length && other.offset > vehicle.offset - vehicle.length {
                    return Err(MobilityError::InvalidPlacement(format!("overlaps vehicle {}", other.id)));
                }
            }
        }
        self.max_length = self.max_length.max(length);
        self.next_id += 1;
        self.vehicles.insert(id, vehicle);
        self.plan_next_trip(id);
        self.rebuild_lanes();
        Ok(id)
    }

    /// Plans the trip after the current one so perception can look past the
    /// destination. Without a reachable destination it stays unplanned.
    fn plan_next_trip(&mut self, id: VehicleId) {
        let v = self.vehicles.get_mut(&id).expect("vehicle exists");
        let n = v.route.len();
        let dest = v.route[n - 1];
        let came_from = if n >= 2 { v.route[n - 2] } else { v.edge.from };
        v.next_trip =
            plan_trip(&self.network, dest, Some(came_from), &self.destinations, &mut self.trips, self.config.trip_attempts).ok();
    }

    /// Places `count` vehicles at random road positions, standing still, each
    /// with a random trip. Velocity factors come from `drivers`.
    pub fn populate<R: Rng + ?Sized, D: Rng + ?Sized>(
        &mut self,
        count: usize,
        spawn: &mut R,
        drivers: &mut D,
    ) -> Result<Vec<VehicleId>, MobilityError> {
        let network = Arc::clone(&self.network);
        let starts: Vec<NodeId> = self.destinations.clone();
        let mut placed = Vec::with_capacity(count);
        let mut tries = 0usize;
        while placed.len() < count {
            tries += 1;
            if tries > 200 * count.max(1) {
                return Err(MobilityError::InvalidPlacement(format!(
                    "could only place {} of {count} vehicles",
                    placed.len()
                )));
            }
            let Some(&from) = starts.choose(spawn) else {
                return Err(MobilityError::InvalidPlacement("network has no roads".into()));
            };
            let Some(edge) = network.edges_from(from).choose(spawn) else { continue };
            let lane = spawn.random_range(0..edge.lanes);
            let offset = spawn.random_range(0.0..edge.length);
            let pos = network.nodes()[&edge.from].pos.lerp(network.nodes()[&edge.to].pos, offset / edge.length);
            let crowded = self
                .vehicles
                .values()
                .any(|v| v.position(&network).distance(pos) < self.config.min_spawn_spacing);
            if crowded {
                continue;
            }
            let Ok(trip) = plan_trip(&network, edge.to, Some(edge.from), &self.destinations, spawn, self.config.trip_attempts)
            else {
                continue;
            };
            let mut route = vec![edge.from];
            route.extend(trip);
            let factor = drivers.random_range(self.config.velocity_factor_min..=self.config.velocity_factor_max);
            let request = SpawnRequest {
                route,
                lane,
                offset,
                speed: 0.0,
                velocity_factor: factor,
                length: None,
            };
            placed.push(self.spawn(request)?);
        }
        Ok(placed)
    }

    /// Leader perception of one vehicle in its current lane.
    pub fn perceive(&self, id: VehicleId) -> Result<Perception, MobilityError> {
        let v = self.vehicles.get(&id).ok_or(MobilityError::UnknownVehicle(id))?;
        Ok(self.perceive_vehicle(v))
    }

    fn perceive_vehicle(&self, v: &Vehicle) -> Perception {
        match self.lane_ahead(v, v.lane) {
            Some(o) => Perception {
                gap: o.gap,
                approach_rate: v.velocity - o.speed,
                obstacle: Some(o),
            },
            None => Perception {
                gap: f64::INFINITY,
                approach_rate: 0.0,
                obstacle: None,
            },
        }
    }

    /// Distance within which a vehicle claims intersections on its route.
    fn claim_zone(&self, v: &Vehicle) -> f64 {
        let idm = &v.profile.idm;
        let braking = v.velocity * v.velocity / (2.0 * idm.comfortable_deceleration);
        self.config.claim_distance.max(braking + idm.jam_distance + v.velocity * idm.time_gap)
    }

    /// Whether the signal at `node` holds `v` back, seen from `prev`.
    fn signal_stops(&self, v: &Vehicle, prev: NodeId, node: NodeId, dist: f64) -> bool {
        let Some(signal) = self.signals.get(&node) else { return false };
        match signal.phase_for_group(approach_group(&self.network, prev, node)) {
            SignalPhase::Green => false,
            SignalPhase::Red => true,
            SignalPhase::Yellow => match self.yellow.get(&(v.id, node)) {
                Some(&stop) => stop,
                None => v.velocity * v.velocity / (2.0 * dist) <= v.profile.idm.comfortable_deceleration,
            },
        }
    }

    fn node_stop(&self, v: &Vehicle, prev: NodeId, node: NodeId, dist: f64) -> Option<ObstacleKind> {
        if self.signal_stops(v, prev, node, dist) {
            return Some(ObstacleKind::Signal(node));
        }
        if self.config.intersection_control {
            if let Some(claim) = self.claims.get(&node) {
                if !claim.holders.contains_key(&v.id) {
                    return Some(ObstacleKind::Junction(node));
                }
            }
        }
        None
    }

    /// Nearest obstacle ahead of `v` if it drove in `lane`.
    fn lane_ahead(&self, v: &Vehicle, lane: u32) -> Option<Obstacle> {
        let network = &*self.network;
        let mut best: Option<Obstacle> = None;
        let consider = |best: &mut Option<Obstacle>, o: Obstacle| {
            if best.is_none_or(|b| o.gap < b.gap) {
                *best = Some(o);
            }
        };
        let edge = &v.edge;
        let next = v.upcoming(1);
        let next_lanes = next.and_then(|n| network.edge(edge.to, n)).map(|e| e.lanes);
        let merge_lane = |l: u32| next_lanes.map_or(l, |n| l.min(n - 1));
        let merging = next_lanes.is_some_and(|n| n < edge.lanes);
        for l in 0..edge.lanes {
            let same = l == lane;
            if !same && !(merging && merge_lane(l) == merge_lane(lane)) {
                continue;
            }
            let Some(list) = self.lanes.get(&(edge.from, edge.to, l)) else { continue };
            for other in list.iter().filter(|&&o| o != v.id).map(|o| &self.vehicles[o]) {
                if same {
                    if other.offset > v.offset || (other.offset == v.offset && other.id > v.id) {
                        consider(&mut best, Obstacle {
                            gap: other.offset - other.length - v.offset,
                            speed: other.velocity,
                            kind: ObstacleKind::Vehicle(other.id),
                        });
                        break;
                    }
                    continue;
                }
                // A vehicle in a lane that merges into ours at the next node.
                if other.upcoming(1) != next {
                    continue;
                }
                if other.offset > v.offset || (other.offset == v.offset && other.id < v.id) {
                    let gap = other.offset - other.length - v.offset;
                    let o = if gap > 0.0 {
                        Obstacle { gap, speed: other.velocity, kind: ObstacleKind::Vehicle(other.id) }
                    } else {
                        // Alongside: let it go first and wait at the node.
                        Obstacle { gap: v.distance_to_node(), speed: 0.0, kind: ObstacleKind::Vehicle(other.id) }
                    };
                    consider(&mut best, o);
                    break;
                }
            }
        }

        let mut dist = v.distance_to_node();
        let mut prev = edge.from;
        let mut node = edge.to;
        let mut lane_here = lane;
        let mut idx = 0;
        while dist <= self.config.perception_horizon {
            if best.is_some_and(|b| b.gap + self.max_length <= dist) {
                break;
            }
            if let Some(kind) = self.node_stop(v, prev, node, dist) {
                consider(&mut best, Obstacle { gap: dist, speed: 0.0, kind });
            }
            let first_on = |to: NodeId, lane_before: u32, lanes: u32| {
                let &first = self.lanes.get(&(node, to, lane_before.min(lanes - 1)))?.first()?;
                let other = &self.vehicles[&first];
                // A vehicle that turned in from another approach or merged
                // from another lane has its rear there, not in our lane.
                let rear = other.offset - other.length;
                let rear = if other.previous_edge == Some((prev, node, lane_before)) { rear } else { rear.max(0.0) };
                Some(Obstacle { gap: dist + rear, speed: other.velocity, kind: ObstacleKind::Vehicle(other.id) })
            };
            let Some(next) = v.upcoming(idx + 1) else {
                // The trip ends here and the next one is not planned yet:
                // anything just past the node could be ahead.
                for e in network.edges_from(node).iter().filter(|e| e.to != prev) {
                    if let Some(o) = first_on(e.to, lane_here, e.lanes) {
                        consider(&mut best, o);
                    }
                }
                break;
            };
            let Some(e) = network.edge(node, next) else { break };
            if let Some(o) = first_on(next, lane_here, e.lanes) {
                consider(&mut best, o);
            }
            lane_here = lane_here.min(e.lanes - 1);
            dist += e.length;
            prev = node;
            node = next;
            idx += 1;
        }
        best
    }

    /// Nearest vehicle behind `v` in `lane`, following the same way upstream.
    fn lane_behind(&self, v: &Vehicle, lane: u32) -> Option<Follower> {
        let as_follower = |other: &Vehicle, gap: f64| Follower {
            gap,
            speed: other.velocity,
            desired_speed: other.desired_speed,
            idm: other.profile.idm,
        };
        let edge = &v.edge;
        if let Some(list) = self.lanes.get(&(edge.from, edge.to, lane)) {
            let behind = list
                .iter()
                .rev()
                .filter(|&&o| o != v.id)
                .map(|o| &self.vehicles[o])
                .find(|o| o.offset < v.offset || (o.offset == v.offset && o.id < v.id));
            if let Some(other) = behind {
                return Some(as_follower(other, v.offset - v.length - other.offset));
            }
        }
        // Walk every road leading into ours and keep the nearest vehicle
        // whose route actually continues onto this edge.
        let mut best: Option<Follower> = None;
        let mut stack = vec![(edge.from, vec![edge.to], v.offset - v.length)];
        while let Some((node, path, back)) = stack.pop() {
            for up in self.incoming.get(&node).into_iter().flatten().filter(|e| e.from != path[0]) {
                let heading_here = |o: &Vehicle| path.iter().enumerate().all(|(k, &n)| o.upcoming(k + 1) == Some(n));
                let found = self
                    .lanes
                    .get(&(up.from, up.to, lane.min(up.lanes - 1)))
                    .and_then(|list| list.iter().rev().map(|o| &self.vehicles[o]).find(|o| heading_here(o)));
                if let Some(other) = found {
                    let gap = back + up.length - other.offset;
                    if best.is_none_or(|b| gap < b.gap) {
                        best = Some(as_follower(other, gap));
                    }
                } else if back + up.length < FOLLOWER_HORIZON {
                    let mut longer = vec![node];
                    longer.extend(&path);
                    stack.push((up.from, longer, back + up.length));
                }
            }
        }
        best
    }

    fn rebuild_lanes(&mut self) {
        for list in self.lanes.values_mut() {
            list.clear();
        }
        for v in self.vehicles.values().filter(|v| v.status == VehicleStatus::Driving) {
            self.lanes.entry((v.edge.from, v.edge.to, v.lane)).or_default().push(v.id);
        }
        let vehicles = &self.vehicles;
        for list in self.lanes.values_mut().filter(|l| l.len() > 1) {
            list.sort_by(|a, b| {
                let (va, vb) = (&vehicles[a], &vehicles[b]);
                va.offset.total_cmp(&vb.offset).then(a.cmp(b))
            });
        }
    }

    fn update_yellow_decisions(&mut self) {
        let mut decisions = BTreeMap::new();
        for v in self.vehicles.values().filter(|v| v.status == VehicleStatus::Driving) {
            let mut dist = v.distance_to_node();
            let mut prev = v.edge.from;
            let mut node = v.edge.to;
            let mut idx = 0;
            while dist <= self.config.perception_horizon {
                if let Some(signal) = self.signals.get(&node) {
                    if signal.phase_for_group(approach_group(&self.network, prev, node)) == SignalPhase::Yellow {
                        let stop = match self.yellow.get(&(v.id, node)) {
                            Some(&stop) => stop,
                            None => v.velocity * v.velocity / (2.0 * dist) <= v.profile.idm.comfortable_deceleration,
                        };
                        decisions.insert((v.id, node), stop);
                    }
                }
                let Some(next) = v.upcoming(idx + 1) else { break };
                let Some(e) = self.network.edge(node, next) else { break };
                dist += e.length;
                prev = node;
                node = next;
                idx += 1;
            }
        }
        self.yellow = decisions;
    }

    fn update_claims(&mut self) {
        if !self.config.intersection_control {
            return;
        }
        let mut claims = std::mem::take(&mut self.claims);
        for (&node, claim) in claims.iter_mut() {
            let approach = claim.approach;
            claim.holders.retain(|id, hold| match self.vehicles.get(id) {
                Some(v) if v.status == VehicleStatus::Driving => {
                    let before = v.odometer < hold.enter;
                    v.odometer < hold.release
                        && !(before && self.signal_stops(v, approach, node, hold.enter - v.odometer))
                }
                _ => false,
            });
        }
        claims.retain(|_, c| !c.holders.is_empty());

        let network = &*self.network;
        let mut requests = Vec::new();
        for v in self.vehicles.values().filter(|v| v.status == VehicleStatus::Driving) {
            let zone = self.claim_zone(v);
            let mut dist = v.distance_to_node();
            let mut prev = v.edge.from;
            let mut node = v.edge.to;
            let mut idx = 0;
            while dist <= zone {
                if network.intersections().contains(&node) {
                    if self.signal_stops(v, prev, node, dist) {
                        break;
                    }
                    let held = claims.get(&node).is_some_and(|c| c.holders.contains_key(&v.id));
                    if !held {
                        requests.push((dist, v.id, node, prev, v.odometer + dist, v.length));
                    }
                }
                let Some(next) = v.upcoming(idx + 1) else { break };
                let Some(e) = network.edge(node, next) else { break };
                dist += e.length;
                prev = node;
                node = next;
                idx += 1;
            }
        }
        requests.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (_, id, node, approach, enter, length) in requests {
            let hold = Hold {
                enter,
                release: enter + length + CLAIM_CLEARANCE,
            };
            match claims.get_mut(&node) {
                None => {
                    claims.insert(node, Claim {
                        approach,
                        holders: BTreeMap::from([(id, hold)]),
                        contested: false,
                    });
                }
                Some(c) if c.approach == approach && !c.contested => {
                    c.holders.insert(id, hold);
                }
                Some(c) if c.approach != approach => c.contested = true,
                Some(_) => {}
            }
        }
        self.claims = claims;
    }

    fn change_lanes(&mut self) {
        let ids: Vec<VehicleId> = self
            .vehicles
            .values()
            .filter(|v| v.status == VehicleStatus::Driving && v.edge.lanes > 1 && v.lane_change_cooldown <= 0.0)
            .map(|v| v.id)
            .collect();
        for id in ids {
            let v = &self.vehicles[&id];
            let subject = Subject {
                speed: v.velocity,
                desired_speed: v.desired_speed,
                length: v.length,
                idm: v.profile.idm,
            };
            let neighbors = |lane: u32| LaneNeighbors {
                leader: self.lane_ahead(v, lane).map(|o| Leader { gap: o.gap, speed: o.speed }),
                follower: self.lane_behind(v, lane),
            };
            let current = neighbors(v.lane);
            let mut best: Option<(f64, u32)> = None;
            let candidates = [v.lane.checked_sub(1), Some(v.lane + 1).filter(|&l| l < v.edge.lanes)];
            for target in candidates.into_iter().flatten() {
                let Some(incentive) = mobil_incentive(&subject, &current, &neighbors(target), &v.profile.mobil) else {
                    continue;
                };
                if incentive > v.profile.mobil.threshold && best.is_none_or(|(b, _)| incentive > b) {
                    best = Some((incentive, target));
                }
            }
            let Some((_, target)) = best else { continue };
            let from = v.lane;
            let key = (v.edge.from, v.edge.to, from);
            let new_key = (v.edge.from, v.edge.to, target);
            let offset = v.offset;
            if let Some(list) = self.lanes.get_mut(&key) {
                list.retain(|&o| o != id);
            }
            let vehicles = &self.vehicles;
            let list = self.lanes.entry(new_key).or_default();
            let at = list.partition_point(|o| {
                let other = &vehicles[o];
                other.offset < offset || (other.offset == offset && *o < id)
            });
            list.insert(at, id);
            let v = self.vehicles.get_mut(&id).expect("vehicle exists");
            v.lane = target;
            v.lane_change_cooldown = self.config.lane_change_cooldown;
            self.stats.lane_changes += 1;
            self.events.push(TrafficEvent::LaneChanged { vehicle: id, from, to: target, time: self.time });
        }
    }

    /// Advances the world from `time` to `time + dt`.
    pub fn step(&mut self, dt: f64) -> Result<(), MobilityError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(MobilityError::InvalidParameter { name: "dt", value: dt });
        }
        self.update_yellow_decisions();
        self.update_claims();
        if self.config.lane_changes {
            self.change_lanes();
        }

        let mut accelerations = Vec::with_capacity(self.vehicles.len());
        for v in self.vehicles.values().filter(|v| v.status == VehicleStatus::Driving) {
            let p = self.perceive_vehicle(v);
            let a = match idm_acceleration(v.velocity, v.desired_speed, p.gap, p.approach_rate, &v.profile.idm) {
                Ok(a) => a,
                Err(MobilityError::Collision { gap }) => {
                    if let Some(Obstacle { kind: ObstacleKind::Vehicle(other), .. }) = p.obstacle {
                        self.stats.collisions += 1;
                        self.events.push(TrafficEvent::Collision { vehicle: v.id, other, gap, time: self.time });
                    }
                    -EMERGENCY_DECELERATION
                }
                Err(e) => return Err(e),
            };
            accelerations.push((v.id, a));
        }

        let network = Arc::clone(&self.network);
        let mut completed = Vec::new();
        for (id, a) in accelerations {
            let v = self.vehicles.get_mut(&id).expect("vehicle exists");
            v.lane_change_cooldown = (v.lane_change_cooldown - dt).max(0.0);
            if let Advance::TripComplete { node, leftover } = v.integrate(&network, a, dt)? {
                completed.push((id, node, leftover));
            }
        }
        let end = self.time + dt;
        for (id, mut node, mut leftover) in completed {
            loop {
                self.stats.trips_completed += 1;
                self.events.push(TrafficEvent::TripCompleted { vehicle: id, node, time: end });
                let v = self.vehicles.get_mut(&id).expect("vehicle exists");
                let trip = match v.next_trip.take() {
                    Some(route) => Ok(route),
                    None => {
                        let came_from = Some(v.edge.from);
                        plan_trip(&network, node, came_from, &self.destinations, &mut self.trips, self.config.trip_attempts)
                    }
                };
                match trip {
                    Ok(route) => {
                        v.assign_route(&network, &route)?;
                        self.plan_next_trip(id);
                        let v = self.vehicles.get_mut(&id).expect("vehicle exists");
                        match v.advance(&network, leftover)? {
                            Advance::Moved => break,
                            Advance::TripComplete { node: n, leftover: l } => (node, leftover) = (n, l),
                        }
                    }
                    Err(MobilityError::NoDestination { .. }) => {
                        v.status = VehicleStatus::Parked;
                        v.velocity = 0.0;
                        v.acceleration = 0.0;
                        self.events.push(TrafficEvent::Parked { vehicle: id, node, time: end });
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
        }

        for signal in self.signals.values_mut() {
            signal.step(dt);
        }
        self.time = end;
        self.stats.steps += 1;
        self.rebuild_lanes();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roadnet::NetworkBuilder;
    use crate::roadnet::{GeoPoint, NodeKind};
    use rand::SeedableRng;

    fn straight(length: f64, lanes: u32, kmh: f64) -> Arc<RoadNetwork> {
        let n = (length / 100.0) as i64;
        let mut b = NetworkBuilder::new(GeoPoint::new(0.0, 0.0));
        let ids: Vec<i64> = (0..=n).map(|i| i + 1).collect();
        for &i in &ids {
            b = b.node(i, (i - 1) as f64 * 100.0, 0.0, NodeKind::Plain);
        }
        Arc::new(b.road(1, &ids, lanes, kmh).build().unwrap())
    }

    fn traffic(network: Arc<RoadNetwork>, config: TrafficConfig) -> Traffic {
        Traffic::new(network, config, DriverProfile::default(), ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    fn route(n: i64) -> Vec<NodeId> {
        (1..=n).collect()
    }

    #[test]
    fn gap_to_leader_is_bumper_to_bumper() {
        let mut t = traffic(straight(1000.0, 1, 50.0), TrafficConfig::default());
        let follower = t.spawn(SpawnRequest { offset: 10.0, ..SpawnRequest::new(route(11)) }).unwrap();
        let leader = t.spawn(SpawnRequest { offset: 35.0, ..SpawnRequest::new(route(11)) }).unwrap();
        let p = t.perceive(follower).unwrap();
        assert!((p.gap - 20.0).abs() < 1e-12);
        assert_eq!(p.obstacle.unwrap().kind, ObstacleKind::Vehicle(leader));
        assert!(t.perceive(leader).unwrap().gap.is_infinite());
    }

    #[test]
    fn leader_on_next_edge_is_seen() {
        let mut t = traffic(straight(1000.0, 1, 50.0), TrafficConfig::default());
        let follower = t.spawn(SpawnRequest { offset: 90.0, ..SpawnRequest::new(route(11)) }).unwrap();
        t.spawn(SpawnRequest { offset: 30.0, ..SpawnRequest::new(route(11)[1..].to_vec()) }).unwrap();
        assert!((t.perceive(follower).unwrap().gap - 35.0).abs() < 1e-9);
    }

    #[test]
    fn overlapping_spawn_is_rejected() {
        let mut t = traffic(straight(1000.0, 1, 50.0), TrafficConfig::default());
        t.spawn(SpawnRequest { offset: 20.0, ..SpawnRequest::new(route(11)) }).unwrap();
        let err = t.spawn(SpawnRequest { offset: 22.0, ..SpawnRequest::new(route(11)) });
        assert!(matches!(err, Err(MobilityError::InvalidPlacement(_))));
    }

    #[test]
    fn red_signal_is_a_standing_obstacle() {
        let net = straight(1000.0, 1, 50.0);
        let mut t = traffic(Arc::clone(&net), TrafficConfig::default());
        t.set_signal(TrafficSignal::new(6, PhaseDurations::default(), SignalPhase::Red, 0.0).unwrap())
            .unwrap();
        let id = t.spawn(SpawnRequest { offset: 20.0, speed: 10.0, ..SpawnRequest::new(route(11)[4..].to_vec()) }).unwrap();
        let p = t.perceive(id).unwrap();
        assert_eq!(p.obstacle.unwrap().kind, ObstacleKind::Signal(6));
        assert!((p.gap - 80.0).abs() < 1e-9);
        for _ in 0..250 {
            t.step(0.1).unwrap();
        }
        let v = t.vehicle(id).unwrap();
        // Still red after 25 s: the vehicle waits just short of the stop line.
        assert_eq!(v.edge().to, 6);
        assert!(v.velocity < 1e-3);
        assert!(v.distance_to_node() > 1.5 && v.distance_to_node() < 2.5, "{}", v.distance_to_node());
    }

    #[test]
    fn trip_completion_replans_immediately() {
        let mut t = traffic(straight(300.0, 1, 50.0), TrafficConfig::default());
        let id = t.spawn(SpawnRequest { offset: 0.0, speed: 13.0, ..SpawnRequest::new(vec![1, 2]) }).unwrap();
        for _ in 0..100 {
            t.step(0.1).unwrap();
        }
        let events = t.take_events();
        assert!(events.iter().any(|e| matches!(e, TrafficEvent::TripCompleted { vehicle, node: 2, .. } if *vehicle == id)));
        let v = t.vehicle(id).unwrap();
        assert_eq!(v.status, VehicleStatus::Driving);
        assert_ne!(v.destination, Some(2));
    }

    #[test]
    fn vehicle_without_destination_parks() {
        let net = Arc::new(
            NetworkBuilder::new(GeoPoint::new(0.0, 0.0))
                .node(1, 0.0, 0.0, NodeKind::Plain)
                .node(2, 100.0, 0.0, NodeKind::Plain)
                .road_directed(1, &[1, 2], 1, 0, 50.0)
                .build()
                .unwrap(),
        );
        let mut t = traffic(net, TrafficConfig::default());
        let id = t.spawn(SpawnRequest { offset: 90.0, speed: 13.0, ..SpawnRequest::new(vec![1, 2]) }).unwrap();
        for _ in 0..20 {
            t.step(0.1).unwrap();
        }
        assert_eq!(t.vehicle(id).unwrap().status, VehicleStatus::Parked);
    }

    #[test]
    fn slow_leader_is_overtaken_on_two_lanes() {
        let mut t = traffic(straight(2000.0, 2, 80.0), TrafficConfig::default());
        let slow = t
            .spawn(SpawnRequest { offset: 60.0, speed: 8.0, velocity_factor: 0.35, ..SpawnRequest::new(route(21)) })
            .unwrap();
        let fast = t.spawn(SpawnRequest { offset: 20.0, speed: 15.0, ..SpawnRequest::new(route(21)) }).unwrap();
        for _ in 0..300 {
            t.step(0.1).unwrap();
        }
        assert!(t.stats().lane_changes >= 1);
        assert_eq!(t.stats().collisions, 0);
        assert!(t.vehicle(fast).unwrap().odometer > t.vehicle(slow).unwrap().odometer + 60.0);
    }

    #[test]
    fn crossing_traffic_takes_turns() {
        // Two roads crossing at node 5; both vehicles arrive at the same time.
        let net = Arc::new(
            NetworkBuilder::new(GeoPoint::new(0.0, 0.0))
                .node(1, -200.0, 0.0, NodeKind::Plain)
                .node(5, 0.0, 0.0, NodeKind::Plain)
                .node(2, 200.0, 0.0, NodeKind::Plain)
                .node(3, 0.0, -200.0, NodeKind::Plain)
                .node(4, 0.0, 200.0, NodeKind::Plain)
                .road(1, &[1, 5, 2], 1, 50.0)
                .road(2, &[3, 5, 4], 1, 50.0)
                .build()
                .unwrap(),
        );
        let mut t = traffic(Arc::clone(&net), TrafficConfig::default());
        let a = t.spawn(SpawnRequest { offset: 100.0, speed: 10.0, ..SpawnRequest::new(vec![1, 5, 2]) }).unwrap();
        let b = t.spawn(SpawnRequest { offset: 100.0, speed: 10.0, ..SpawnRequest::new(vec![3, 5, 4]) }).unwrap();
        let mut min_separation = f64::INFINITY;
        for _ in 0..400 {
            t.step(0.1).unwrap();
            let pa = t.vehicle(a).unwrap().position(&net);
            let pb = t.vehicle(b).unwrap().position(&net);
            min_separation = min_separation.min(pa.distance(pb));
        }
        assert!(min_separation > 5.0, "vehicles met at the crossing: {min_separation}");
        assert!(t.vehicle(a).unwrap().odometer > 150.0 && t.vehicle(b).unwrap().odometer > 150.0);
    }

    #[test]
    fn approach_groups_split_by_heading() {
        let net = straight(200.0, 1, 50.0);
        assert_eq!(approach_group(&net, 1, 2), 0);
        let net = Arc::new(
            NetworkBuilder::new(GeoPoint::new(0.0, 0.0))
                .node(1, 0.0, 0.0, NodeKind::Plain)
                .node(2, 10.0, 100.0, NodeKind::Plain)
                .road(1, &[1, 2], 1, 50.0)
                .build()
                .unwrap(),
        );
        assert_eq!(approach_group(&net, 1, 2), 1);
    }

    #[test]
    fn populate_respects_spacing() {
        let net = Arc::new(crate::roadnet::parse_osm(&crate::roadnet::synthetic::grid_osm(&Default::default())).unwrap());
        let mut t = traffic(Arc::clone(&net), TrafficConfig::default());
        let mut spawn = ChaCha8Rng::seed_from_u64(2);
        let mut drivers = ChaCha8Rng::seed_from_u64(3);
        let ids = t.populate(50, &mut spawn, &mut drivers).unwrap();
        assert_eq!(ids.len(), 50);
        let pos: Vec<_> = t.vehicles().map(|v| v.position(&net)).collect();
        for i in 0..pos.len() {
            for j in i + 1..pos.len() {
                assert!(pos[i].distance(pos[j]) >= 15.0);
            }
        }
        for v in t.vehicles() {
            assert!((0.8..=1.2).contains(&v.profile.velocity_factor));
        }
    }

    #[test]
    fn perception_examples() {
        let net = straight(1000.0, 1, 50.0);
        let mut t = traffic(Arc::clone(&net), TrafficConfig::default());
        let id = t.spawn(SpawnRequest { offset: 70.0, speed: 10.0, ..SpawnRequest::new(route(11)[4..].to_vec()) }).unwrap();
        let p = t.perceive(id).unwrap();
        assert!(p.gap.is_infinite() && p.approach_rate == 0.0 && p.obstacle.is_none());
        t.set_signal(TrafficSignal::new(6, PhaseDurations::default(), SignalPhase::Red, 0.0).unwrap())
            .unwrap();
        let p = t.perceive(id).unwrap();
        assert!((p.gap - 30.0).abs() < 1e-9);
        assert_eq!(p.approach_rate, 10.0);
    }

    #[test]
    fn single_edge_trip() {
        let net = straight(100.0, 1, 50.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(plan_trip(&net, 1, None, &[1, 2], &mut rng, 8).unwrap(), vec![1, 2]);
    }

    fn grid() -> Arc<RoadNetwork> {
        use crate::roadnet::{parse_osm, synthetic};
        Arc::new(parse_osm(&synthetic::grid_osm(&synthetic::GridSpec::default())).unwrap())
    }

    fn destination_sequence(t: &mut Traffic, from: NodeId, n: usize) -> Vec<NodeId> {
        let net = Arc::clone(&t.network);
        (0..n)
            .map(|_| *plan_trip(&net, from, None, &t.destinations, &mut t.trips, 64).unwrap().last().unwrap())
            .collect()
    }

    #[test]
    fn destinations_repeat_with_the_seed() {
        let net = grid();
        let mut a = traffic(Arc::clone(&net), TrafficConfig::default());
        let mut b = traffic(net, TrafficConfig::default());
        let from = a.destinations[0];
        assert_eq!(destination_sequence(&mut a, from, 50), destination_sequence(&mut b, from, 50));
    }

    #[test]
    fn destinations_are_uniform() {
        let mut t = traffic(grid(), TrafficConfig::default());
        let from = t.destinations[0];
        let rank: HashMap<NodeId, usize> = t.destinations.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let bins = 10;
        let per_bin = t.destinations.len() as f64 / bins as f64;
        let mut counts = vec![0.0; bins];
        let trips = 1000;
        for dest in destination_sequence(&mut t, from, trips) {
            counts[(rank[&dest] as f64 / per_bin) as usize] += 1.0;
        }
        // The start node is never drawn, a bias of one node in ~1300.
        let expected = trips as f64 / bins as f64;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        // 99.9 % quantile of chi-squared with 9 degrees of freedom
        assert!(chi2 < 27.88, "chi2 {chi2} counts {counts:?}");
    }

    #[test]
    fn routes_only_reverse_at_dead_ends() {
        let net = grid();
        let mut t = traffic(Arc::clone(&net), TrafficConfig::default());
        let candidates = t.destinations.clone();
        for &from in candidates.iter().step_by(37) {
            for e in net.edges_from(from) {
                let came_from = e.to;
                let route = plan_trip(&net, from, Some(came_from), &candidates, &mut t.trips, 64).unwrap();
                if net.edges_from(from).len() > 1 {
                    assert_ne!(route[1], came_from);
                }
                for w in route.windows(3) {
                    assert!(w[0] != w[2] || net.edges_from(w[1]).len() == 1, "U-turn at {} in {route:?}", w[1]);
                }
            }
        }
    }
}
