//! OSM XML import.

use roxmltree::{Document, Node};

use super::{project, GeoNode, GeoPoint, NodeKind, Relation, RelationMember, RoadNetwork, RoadnetError, Way};

pub const DEFAULT_LANES: u32 = 1;
pub const DEFAULT_SPEED_LIMIT_KMH: f64 = 50.0;

struct RawNode {
    id: i64,
    lat: f64,
    lon: f64,
    kind: NodeKind,
}

/// Parses an OSM XML document into a validated network.
///
/// Roads are ways carrying a `highway` tag, buildings carry `building`. Every
/// other way is kept as inert geometry. Relations are retained verbatim.
pub fn parse_osm(xml: &str) -> Result<RoadNetwork, RoadnetError> {
    let doc = Document::parse(xml).map_err(|e| {
        let pos = e.pos();
        RoadnetError::Xml {
            line: pos.row,
            column: pos.col,
            message: e.to_string(),
        }
    })?;
    let line_of = |n: Node| doc.text_pos_at(n.range().start).row;

    let mut bounds_center = None;
    let mut raw_nodes = Vec::new();
    let mut ways = Vec::new();
    let mut relations = Vec::new();

    for el in doc.root_element().children().filter(Node::is_element) {
        match el.tag_name().name() {
            "bounds" => {
                let get = |a| attr_f64(el, "bounds", a, line_of(el));
                let (minlat, minlon) = (get("minlat")?, get("minlon")?);
                let (maxlat, maxlon) = (get("maxlat")?, get("maxlon")?);
                if bounds_center.is_none() {
                    bounds_center = Some(GeoPoint::new((minlat + maxlat) / 2.0, (minlon + maxlon) / 2.0));
                }
            }
            "node" => {
                let line = line_of(el);
                let id = attr_i64(el, "node", "id", line)?;
                let lat = attr_f64(el, "node", "lat", line)?;
                let lon = attr_f64(el, "node", "lon", line)?;
                let tags: Vec<(&str, &str)> = tags(el).collect();
                let kind = if tags.iter().any(|&(k, v)| k == "highway" && v == "traffic_signals") {
                    NodeKind::Signal
                } else if tags.iter().any(|&(k, _)| k != "created_by" && k != "source") {
                    NodeKind::Poi
                } else {
                    NodeKind::Plain
                };
                raw_nodes.push(RawNode { id, lat, lon, kind });
            }
            "way" => {
                let line = line_of(el);
                let id = attr_i64(el, "way", "id", line)?;
                let mut node_ids = Vec::new();
                for nd in el.children().filter(|c| c.has_tag_name("nd")) {
                    node_ids.push(attr_i64(nd, "nd", "ref", line_of(nd))?);
                }
                ways.push(way_from_tags(id, node_ids, tags(el)));
            }
            "relation" => {
                let line = line_of(el);
                let id = attr_i64(el, "relation", "id", line)?;
                let mut members = Vec::new();
                for m in el.children().filter(|c| c.has_tag_name("member")) {
                    members.push(RelationMember {
                        kind: m.attribute("type").unwrap_or_default().to_string(),
                        reference: attr_i64(m, "member", "ref", line_of(m))?,
                        role: m.attribute("role").unwrap_or_default().to_string(),
                    });
                }
                relations.push(Relation { id, members });
            }
            _ => {}
        }
    }

    let origin = bounds_center
        .or_else(|| raw_nodes.first().map(|n| GeoPoint::new(n.lat, n.lon)))
        .unwrap_or(GeoPoint::new(0.0, 0.0));
    let nodes = raw_nodes.into_iter().map(|n| GeoNode {
        id: n.id,
        lat: n.lat,
        lon: n.lon,
        pos: project(n.lat, n.lon, origin),
        kind: n.kind,
    });
    RoadNetwork::from_parts(origin, nodes, ways, relations)
}

fn tags<'a>(el: Node<'a, 'a>) -> impl Iterator<Item = (&'a str, &'a str)> {
    el.children()
        .filter(|c| c.has_tag_name("tag"))
        .filter_map(|t| Some((t.attribute("k")?, t.attribute("v")?)))
}

fn way_from_tags<'a>(id: i64, mut node_ids: Vec<i64>, tags: impl Iterator<Item = (&'a str, &'a str)>) -> Way {
    let mut is_road = false;
    let mut is_building = false;
    let mut lanes_total = None;
    let mut speed_limit = DEFAULT_SPEED_LIMIT_KMH / 3.6;
    let mut oneway = Oneway::No;
    for (k, v) in tags {
        match k {
            "highway" => is_road = true,
            "building" => is_building = v != "no",
            "lanes" => lanes_total = v.trim().parse::<u32>().ok().filter(|&n| n > 0),
            "maxspeed" => {
                if let Some(limit) = parse_maxspeed(v) {
                    speed_limit = limit;
                }
            }
            "oneway" => {
                oneway = match v {
                    "yes" | "true" | "1" => Oneway::Forward,
                    "-1" | "reverse" => Oneway::Reverse,
                    _ => Oneway::No,
                }
            }
            _ => {}
        }
    }
    let (lanes_forward, lanes_backward) = match (oneway, lanes_total) {
        (Oneway::No, None) => (DEFAULT_LANES, DEFAULT_LANES),
        (Oneway::No, Some(n)) => {
            let fwd = n.div_ceil(2);
            (fwd, (n - fwd).max(1))
        }
        (_, n) => (n.unwrap_or(DEFAULT_LANES), 0),
    };
    if oneway == Oneway::Reverse {
        node_ids.reverse();
    }
    Way {
        id,
        node_ids,
        lanes_forward: if is_road { lanes_forward } else { 0 },
        lanes_backward: if is_road { lanes_backward } else { 0 },
        speed_limit,
        is_road,
        is_building: is_building && !is_road,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Oneway {
    No,
    Forward,
    Reverse,
}

/// `maxspeed` value in m/s; plain numbers are km/h, a `mph` suffix is honored.
fn parse_maxspeed(v: &str) -> Option<f64> {
    let v = v.trim();
    let (number, factor) = match v.strip_suffix("mph") {
        Some(n) => (n.trim(), 1.609_344),
        None => (v.strip_suffix("km/h").unwrap_or(v).trim(), 1.0),
    };
    let kmh = number.parse::<f64>().ok().filter(|s| *s > 0.0 && s.is_finite())? * factor;
    Some(kmh / 3.6)
}

fn attr_i64(el: Node, element: &'static str, attribute: &'static str, line: u32) -> Result<i64, RoadnetError> {
    el.attribute(attribute)
        .and_then(|v| v.trim().parse().ok())
        .ok_or(RoadnetError::BadAttribute { element, attribute, line })
}

fn attr_f64(el: Node, element: &'static str, attribute: &'static str, line: u32) -> Result<f64, RoadnetError> {
    el.attribute(attribute)
        .and_then(|v| v.trim().parse::<f64>().ok())
        .filter(|v| v.is_finite())
        .ok_or(RoadnetError::BadAttribute { element, attribute, line })
}
