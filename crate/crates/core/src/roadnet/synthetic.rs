//! Generated Manhattan-grid maps, emitted as OSM XML so they exercise the
//! same import path as real map data.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{unproject, GeoPoint};
use crate::geom::Vec2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Number of east-west streets.
    pub rows: usize,
    /// Number of north-south streets.
    pub cols: usize,
    pub block_length: f64,
    /// Spacing of shape nodes along a block edge.
    pub node_spacing: f64,
    /// Every `arterial_every`-th street (starting at the middle) is an arterial.
    pub arterial_every: usize,
    pub arterial_lanes: u32,
    pub arterial_kmh: f64,
    pub street_kmh: f64,
    pub buildings: bool,
    pub origin: GeoPoint,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            rows: 9,
            cols: 9,
            block_length: 150.0,
            node_spacing: 15.0,
            arterial_every: 4,
            arterial_lanes: 2,
            arterial_kmh: 60.0,
            street_kmh: 50.0,
            buildings: true,
            origin: GeoPoint::new(51.5136, 7.4653),
        }
    }
}

impl GridSpec {
    fn is_arterial(&self, line: usize, count: usize) -> bool {
        let mid = count / 2;
        self.arterial_every > 0 && line.abs_diff(mid).is_multiple_of(self.arterial_every)
    }

    pub fn grid_node_id(&self, row: usize, col: usize) -> i64 {
        (1 + row * self.cols + col) as i64
    }
}

/// Renders the grid as an OSM document. Grid crossings get ids
/// `1 + row * cols + col`; crossings on an arterial with even `row + col`
/// carry traffic signals.
pub fn grid_osm(spec: &GridSpec) -> String {
    let mut nodes: Vec<(i64, Vec2, bool)> = Vec::new();
    let mut ways: Vec<String> = Vec::new();
    let mut next_id = (spec.rows * spec.cols + 1) as i64;
    let mut next_way = 1_000_000i64;

    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let signal = (spec.is_arterial(r, spec.rows) || spec.is_arterial(c, spec.cols)) && (r + c) % 2 == 0;
            let pos = Vec2::new(c as f64 * spec.block_length, r as f64 * spec.block_length);
            nodes.push((spec.grid_node_id(r, c), pos, signal));
        }
    }

    let steps = (spec.block_length / spec.node_spacing).round().max(1.0) as usize;
    let mut block_way = |a: (usize, usize), b: (usize, usize), arterial: bool, nodes: &mut Vec<(i64, Vec2, bool)>| {
        let pa = Vec2::new(a.1 as f64 * spec.block_length, a.0 as f64 * spec.block_length);
        let pb = Vec2::new(b.1 as f64 * spec.block_length, b.0 as f64 * spec.block_length);
        let mut refs = vec![spec.grid_node_id(a.0, a.1)];
        for k in 1..steps {
            nodes.push((next_id, pa.lerp(pb, k as f64 / steps as f64), false));
            refs.push(next_id);
            next_id += 1;
        }
        refs.push(spec.grid_node_id(b.0, b.1));
        let mut way = format!("  <way id=\"{next_way}\">\n");
        next_way += 1;
        for r in refs {
            let _ = writeln!(way, "    <nd ref=\"{r}\"/>");
        }
        let (kind, lanes, kmh) = if arterial {
            ("primary", spec.arterial_lanes * 2, spec.arterial_kmh)
        } else {
            ("residential", 2, spec.street_kmh)
        };
        let _ = writeln!(way, "    <tag k=\"highway\" v=\"{kind}\"/>");
        let _ = writeln!(way, "    <tag k=\"lanes\" v=\"{lanes}\"/>");
        let _ = writeln!(way, "    <tag k=\"maxspeed\" v=\"{kmh}\"/>");
        way.push_str("  </way>\n");
        way
    };

    for r in 0..spec.rows {
        for c in 0..spec.cols.saturating_sub(1) {
            ways.push(block_way((r, c), (r, c + 1), spec.is_arterial(r, spec.rows), &mut nodes));
        }
    }
    for c in 0..spec.cols {
        for r in 0..spec.rows.saturating_sub(1) {
            ways.push(block_way((r, c), (r + 1, c), spec.is_arterial(c, spec.cols), &mut nodes));
        }
    }

    if spec.buildings {
        let inset = spec.block_length * 0.15;
        for r in 0..spec.rows.saturating_sub(1) {
            for c in 0..spec.cols.saturating_sub(1) {
                let x0 = c as f64 * spec.block_length + inset;
                let y0 = r as f64 * spec.block_length + inset;
                let x1 = (c + 1) as f64 * spec.block_length - inset;
                let y1 = (r + 1) as f64 * spec.block_length - inset;
                let corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)];
                let first = next_id;
                let mut way = format!("  <way id=\"{next_way}\">\n");
                next_way += 1;
                for (x, y) in corners {
                    nodes.push((next_id, Vec2::new(x, y), false));
                    let _ = writeln!(way, "    <nd ref=\"{next_id}\"/>");
                    next_id += 1;
                }
                let _ = writeln!(way, "    <nd ref=\"{first}\"/>");
                way.push_str("    <tag k=\"building\" v=\"yes\"/>\n  </way>\n");
                ways.push(way);
            }
        }
    }

    let geo: Vec<(i64, GeoPoint, bool)> = nodes
        .iter()
        .map(|&(id, pos, signal)| (id, unproject(pos, spec.origin), signal))
        .collect();
    let (mut minlat, mut minlon, mut maxlat, mut maxlon) = (90.0f64, 180.0f64, -90.0f64, -180.0f64);
    for (_, g, _) in &geo {
        minlat = minlat.min(g.lat);
        maxlat = maxlat.max(g.lat);
        minlon = minlon.min(g.lon);
        maxlon = maxlon.max(g.lon);
    }

    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<osm version=\"0.6\" generator=\"mobisim-grid\">\n");
    let _ = writeln!(
        out,
        "  <bounds minlat=\"{minlat:.7}\" minlon=\"{minlon:.7}\" maxlat=\"{maxlat:.7}\" maxlon=\"{maxlon:.7}\"/>"
    );
    for (id, g, signal) in geo {
        if signal {
            let _ = writeln!(
                out,
                "  <node id=\"{id}\" lat=\"{:.7}\" lon=\"{:.7}\">\n    <tag k=\"highway\" v=\"traffic_signals\"/>\n  </node>",
                g.lat, g.lon
            );
        } else {
            let _ = writeln!(out, "  <node id=\"{id}\" lat=\"{:.7}\" lon=\"{:.7}\"/>", g.lat, g.lon);
        }
    }
    for w in ways {
        out.push_str(&w);
    }
    out.push_str("</osm>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::super::parse_osm;
    use super::*;

    #[test]
    fn small_grid_topology() {
        let spec = GridSpec {
            rows: 3,
            cols: 3,
            block_length: 100.0,
            node_spacing: 50.0,
            buildings: false,
            ..GridSpec::default()
        };
        let net = parse_osm(&grid_osm(&spec)).unwrap();
        // 9 crossings + 12 block edges with one shape node each
        assert_eq!(net.nodes().len(), 21);
        // every crossing is shared by at least two block ways
        assert_eq!(net.intersections().len(), 9);
        assert_eq!(net.edge_count(), 12 * 2 * 2);
    }

    #[test]
    fn reference_grid_is_city_sized() {
        let net = parse_osm(&grid_osm(&GridSpec::default())).unwrap();
        assert!(net.nodes().len() >= 1000);
        assert!(net.signal_nodes().count() > 0);
        assert!(net.ways().values().any(|w| w.is_building));
        assert!(net.ways().values().any(|w| w.lanes_forward == 2));
    }
}
