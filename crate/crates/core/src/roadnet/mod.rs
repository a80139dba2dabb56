//! Road network: OSM primitives, the derived routable graph, and its file formats.
//!
//! A [`RoadNetwork`] is immutable once built. Every constructor funnels through
//! [`RoadNetwork::from_parts`], which validates the primitives and derives the
//! intersection set and the directed adjacency.

mod cache;
mod osm;
mod projection;
mod routing;
mod svg;
pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec2;

pub use cache::{
    cache_path_for, convert, load_map, read_cache, read_cache_checked, source_hash, write_cache, CacheHeader, MapSource,
    CACHE_EXTENSION, CACHE_FORMAT_VERSION,
};
pub use osm::{parse_osm, DEFAULT_LANES, DEFAULT_SPEED_LIMIT_KMH};
pub use projection::{haversine_distance, project, unproject, EARTH_RADIUS_M};
pub use svg::{export_svg, render_svg, SvgOptions};

pub type NodeId = i64;
pub type WayId = i64;

#[derive(Debug, Error)]
pub enum RoadnetError {
    #[error("malformed OSM XML at line {line}, column {column}: {message}")]
    Xml {
        line: u32,
        column: u32,
        message: String,
    },
    #[error("missing or invalid attribute `{attribute}` on <{element}> at line {line}")]
    BadAttribute {
        element: &'static str,
        attribute: &'static str,
        line: u32,
    },
    #[error("way {way} references unknown node {node}")]
    DanglingNodeRef { way: WayId, node: NodeId },
    #[error("way {way} has fewer than two distinct nodes")]
    DegenerateWay { way: WayId },
    #[error("way {way} has a zero-length segment between nodes {from} and {to}")]
    ZeroLengthSegment { way: WayId, from: NodeId, to: NodeId },
    #[error("node {node} has coordinates out of range ({lat}, {lon})")]
    InvalidCoordinates { node: NodeId, lat: f64, lon: f64 },
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: i64 },
    #[error("node {0} is not part of the road graph")]
    NotRoutable(NodeId),
    #[error("node {to} is unreachable from node {from}")]
    Unreachable { from: NodeId, to: NodeId },
    #[error("stale cache {path}: {reason}; re-parse the source map")]
    StaleCache { path: String, reason: String },
    #[error("invalid cache document: {0}")]
    CacheFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Geographic coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Plain,
    Signal,
    Poi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoNode {
    pub id: NodeId,
    pub lat: f64,
    pub lon: f64,
    /// Projected position in the network's local frame.
    pub pos: Vec2,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Way {
    pub id: WayId,
    pub node_ids: Vec<NodeId>,
    pub lanes_forward: u32,
    pub lanes_backward: u32,
    /// Posted limit in m/s.
    pub speed_limit: f64,
    pub is_road: bool,
    pub is_building: bool,
}

impl Way {
    pub fn segment_count(&self) -> usize {
        self.node_ids.len() - 1
    }
}

/// Opaque grouping of ways and nodes; kept for round-tripping only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub id: i64,
    pub members: Vec<RelationMember>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationMember {
    pub kind: String,
    pub reference: i64,
    pub role: String,
}

/// A directed, routable road segment between two consecutive way nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub way: WayId,
    /// Index of the segment inside the way (between `node_ids[segment]` and `node_ids[segment + 1]`).
    pub segment: usize,
    /// True when travel follows the way's node order.
    pub forward: bool,
    pub length: f64,
    pub lanes: u32,
    pub speed_limit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    origin: GeoPoint,
    nodes: BTreeMap<NodeId, GeoNode>,
    ways: BTreeMap<WayId, Way>,
    relations: BTreeMap<i64, Relation>,
    intersections: BTreeSet<NodeId>,
    adjacency: BTreeMap<NodeId, Vec<Edge>>,
    incoming: BTreeMap<NodeId, Vec<(NodeId, f64)>>,
}

impl RoadNetwork {
    /// Validates primitives and derives intersections and adjacency.
    pub fn from_parts(
        origin: GeoPoint,
        nodes: impl IntoIterator<Item = GeoNode>,
        ways: impl IntoIterator<Item = Way>,
        relations: impl IntoIterator<Item = Relation>,
    ) -> Result<Self, RoadnetError> {
        let mut node_map = BTreeMap::new();
        for node in nodes {
            if !GeoPoint::new(node.lat, node.lon).is_valid() {
                return Err(RoadnetError::InvalidCoordinates {
                    node: node.id,
                    lat: node.lat,
                    lon: node.lon,
                });
            }
            let id = node.id;
            if node_map.insert(id, node).is_some() {
                return Err(RoadnetError::DuplicateId { kind: "node", id });
            }
        }

        let mut way_map = BTreeMap::new();
        for mut way in ways {
            way.node_ids.dedup();
            if let Some(&missing) = way.node_ids.iter().find(|id| !node_map.contains_key(id)) {
                return Err(RoadnetError::DanglingNodeRef {
                    way: way.id,
                    node: missing,
                });
            }
            if way.node_ids.len() < 2 {
                return Err(RoadnetError::DegenerateWay { way: way.id });
            }
            if way.is_road {
                way.is_building = false;
                way.lanes_forward = way.lanes_forward.max(1);
            }
            let id = way.id;
            if way_map.insert(id, way).is_some() {
                return Err(RoadnetError::DuplicateId { kind: "way", id });
            }
        }

        let mut relation_map = BTreeMap::new();
        for relation in relations {
            let id = relation.id;
            if relation_map.insert(id, relation).is_some() {
                return Err(RoadnetError::DuplicateId {
                    kind: "relation",
                    id,
                });
            }
        }

        let intersections = derive_intersections(&way_map);
        let mut adjacency: BTreeMap<NodeId, Vec<Edge>> = BTreeMap::new();
        for way in way_map.values().filter(|w| w.is_road) {
            for (segment, pair) in way.node_ids.windows(2).enumerate() {
                let (a, b) = (pair[0], pair[1]);
                let length = node_map[&a].pos.distance(node_map[&b].pos);
                if length <= 0.0 {
                    return Err(RoadnetError::ZeroLengthSegment {
                        way: way.id,
                        from: a,
                        to: b,
                    });
                }
                let mut push = |from: NodeId, to: NodeId, forward: bool, lanes: u32| {
                    adjacency.entry(from).or_default().push(Edge {
                        from,
                        to,
                        way: way.id,
                        segment,
                        forward,
                        length,
                        lanes,
                        speed_limit: way.speed_limit,
                    });
                };
                push(a, b, true, way.lanes_forward);
                if way.lanes_backward > 0 {
                    push(b, a, false, way.lanes_backward);
                }
            }
        }
        let mut incoming: BTreeMap<NodeId, Vec<(NodeId, f64)>> = BTreeMap::new();
        for edges in adjacency.values_mut() {
            edges.sort_by_key(|e| (e.to, e.way, e.segment));
            for e in edges.iter() {
                incoming.entry(e.to).or_default().push((e.from, e.length));
            }
        }

        Ok(Self {
            origin,
            nodes: node_map,
            ways: way_map,
            relations: relation_map,
            intersections,
            adjacency,
            incoming,
        })
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    pub fn nodes(&self) -> &BTreeMap<NodeId, GeoNode> {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Option<&GeoNode> {
        self.nodes.get(&id)
    }

    pub fn ways(&self) -> &BTreeMap<WayId, Way> {
        &self.ways
    }

    pub fn way(&self, id: WayId) -> Option<&Way> {
        self.ways.get(&id)
    }

    pub fn relations(&self) -> &BTreeMap<i64, Relation> {
        &self.relations
    }

    /// Nodes shared by at least two distinct road ways.
    pub fn intersections(&self) -> &BTreeSet<NodeId> {
        &self.intersections
    }

    /// Outgoing edges of a node, ordered by (target, way, segment).
    pub fn edges_from(&self, node: NodeId) -> &[Edge] {
        self.adjacency.get(&node).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.adjacency.values().flatten()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(Vec::len).sum()
    }

    /// Shortest directed edge from `from` to `to`, ties broken by way id.
    pub fn edge(&self, from: NodeId, to: NodeId) -> Option<&Edge> {
        self.edges_from(from)
            .iter()
            .filter(|e| e.to == to)
            .min_by(|a, b| a.length.total_cmp(&b.length).then(a.way.cmp(&b.way)))
    }

    pub(crate) fn incoming(&self, node: NodeId) -> &[(NodeId, f64)] {
        self.incoming.get(&node).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Nodes that belong to at least one road way.
    pub fn road_nodes(&self) -> BTreeSet<NodeId> {
        self.ways
            .values()
            .filter(|w| w.is_road)
            .flat_map(|w| w.node_ids.iter().copied())
            .collect()
    }

    pub fn is_road_node(&self, id: NodeId) -> bool {
        self.adjacency.contains_key(&id) || self.incoming.contains_key(&id)
    }

    pub fn signal_nodes(&self) -> impl Iterator<Item = &GeoNode> {
        self.nodes.values().filter(|n| n.kind == NodeKind::Signal)
    }

    /// Axis-aligned bounds of all projected node positions.
    pub fn bounding_box(&self) -> Option<(Vec2, Vec2)> {
        let mut it = self.nodes.values().map(|n| n.pos);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), p| {
            (
                Vec2::new(lo.x.min(p.x), lo.y.min(p.y)),
                Vec2::new(hi.x.max(p.x), hi.y.max(p.y)),
            )
        }))
    }
}

fn derive_intersections(ways: &BTreeMap<WayId, Way>) -> BTreeSet<NodeId> {
    let mut owners: BTreeMap<NodeId, BTreeSet<WayId>> = BTreeMap::new();
    for way in ways.values().filter(|w| w.is_road) {
        for &n in &way.node_ids {
            owners.entry(n).or_default().insert(way.id);
        }
    }
    owners
        .into_iter()
        .filter(|(_, w)| w.len() >= 2)
        .map(|(n, _)| n)
        .collect()
}

/// Assembles a network from local coordinates; latitude and longitude are
/// recovered through the inverse projection.
#[derive(Debug, Clone)]
pub struct NetworkBuilder {
    origin: GeoPoint,
    nodes: Vec<GeoNode>,
    ways: Vec<Way>,
}

impl NetworkBuilder {
    pub fn new(origin: GeoPoint) -> Self {
        Self {
            origin,
            nodes: Vec::new(),
            ways: Vec::new(),
        }
    }

    pub fn node(mut self, id: NodeId, x: f64, y: f64, kind: NodeKind) -> Self {
        let pos = Vec2::new(x, y);
        let geo = unproject(pos, self.origin);
        self.nodes.push(GeoNode {
            id,
            lat: geo.lat,
            lon: geo.lon,
            pos,
            kind,
        });
        self
    }

    /// Bidirectional road with the given lanes per direction and limit in km/h.
    pub fn road(self, id: WayId, node_ids: &[NodeId], lanes: u32, speed_kmh: f64) -> Self {
        self.road_directed(id, node_ids, lanes, lanes, speed_kmh)
    }

    pub fn road_directed(
        mut self,
        id: WayId,
        node_ids: &[NodeId],
        lanes_forward: u32,
        lanes_backward: u32,
        speed_kmh: f64,
    ) -> Self {
        self.ways.push(Way {
            id,
            node_ids: node_ids.to_vec(),
            lanes_forward,
            lanes_backward,
            speed_limit: speed_kmh / 3.6,
            is_road: true,
            is_building: false,
        });
        self
    }

    pub fn building(mut self, id: WayId, node_ids: &[NodeId]) -> Self {
        self.ways.push(Way {
            id,
            node_ids: node_ids.to_vec(),
            lanes_forward: 0,
            lanes_backward: 0,
            speed_limit: DEFAULT_SPEED_LIMIT_KMH / 3.6,
            is_road: false,
            is_building: true,
        });
        self
    }

    pub fn build(self) -> Result<RoadNetwork, RoadnetError> {
        RoadNetwork::from_parts(self.origin, self.nodes, self.ways, Vec::new())
    }
}
