use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{NodeKind, RoadNetwork, RoadnetError};
use crate::geom::Vec2;

#[derive(Debug, Clone)]
pub struct SvgOptions {
    /// Stroke width per lane, in meters.
    pub lane_width: f64,
    pub road_color: String,
    pub building_color: String,
    pub signal_color: String,
    pub signal_radius: f64,
    pub draw_inert_ways: bool,
}

impl Default for SvgOptions {
    fn default() -> Self {
        Self {
            lane_width: 3.5,
            road_color: "#555555".into(),
            building_color: "#c8b8a8".into(),
            signal_color: "#d62728".into(),
            signal_radius: 4.0,
            draw_inert_ways: true,
        }
    }
}

pub fn export_svg(network: &RoadNetwork, path: &Path, options: &SvgOptions) -> Result<(), RoadnetError> {
    fs::write(path, render_svg(network, options))?;
    Ok(())
}

/// Renders the network as an SVG 1.1 document. North is up; the view box
/// covers the node bounding box plus a 5% margin on each side.
pub fn render_svg(network: &RoadNetwork, options: &SvgOptions) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n");
    let Some((lo, hi)) = network.bounding_box() else {
        out.push_str(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" viewBox=\"0 0 1 1\" width=\"1\" height=\"1\">\n</svg>\n",
        );
        return out;
    };
    let span = (hi - lo).x.max((hi - lo).y).max(1.0);
    let margin = |extent: f64| if extent > 0.0 { extent * 0.05 } else { span * 0.05 };
    let (mx, my) = (margin(hi.x - lo.x), margin(hi.y - lo.y));
    let (vx, vy) = (lo.x - mx, -hi.y - my);
    let (vw, vh) = (hi.x - lo.x + 2.0 * mx, hi.y - lo.y + 2.0 * my);
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" viewBox=\"{vx:.2} {vy:.2} {vw:.2} {vh:.2}\" width=\"{:.0}\" height=\"{:.0}\">",
        vw.ceil(),
        vh.ceil()
    );

    let points = |ids: &[i64]| -> String {
        ids.iter()
            .map(|id| {
                let p = network.nodes()[id].pos;
                format!("{:.2},{:.2}", p.x, -p.y)
            })
            .collect::<Vec<_>>()
            .join(" ")
    };

    let buildings: Vec<_> = network.ways().values().filter(|w| w.is_building).collect();
    if !buildings.is_empty() {
        let _ = writeln!(out, "<g id=\"buildings\" fill=\"{}\" stroke=\"none\">", options.building_color);
        for w in buildings {
            let _ = writeln!(out, "<polygon data-way=\"{}\" points=\"{}\"/>", w.id, points(&w.node_ids));
        }
        out.push_str("</g>\n");
    }

    let inert: Vec<_> = network
        .ways()
        .values()
        .filter(|w| options.draw_inert_ways && !w.is_road && !w.is_building)
        .collect();
    if !inert.is_empty() {
        out.push_str("<g id=\"inert\" fill=\"none\" stroke=\"#aaaaaa\" stroke-width=\"1\">\n");
        for w in inert {
            let _ = writeln!(out, "<polyline data-way=\"{}\" points=\"{}\"/>", w.id, points(&w.node_ids));
        }
        out.push_str("</g>\n");
    }

    let roads: Vec<_> = network.ways().values().filter(|w| w.is_road).collect();
    if !roads.is_empty() {
        let _ = writeln!(
            out,
            "<g id=\"roads\" fill=\"none\" stroke=\"{}\" stroke-linecap=\"round\" stroke-linejoin=\"round\">",
            options.road_color
        );
        for w in roads {
            let width = f64::from(w.lanes_forward + w.lanes_backward) * options.lane_width;
            let _ = writeln!(
                out,
                "<polyline data-way=\"{}\" stroke-width=\"{width:.2}\" points=\"{}\"/>",
                w.id,
                points(&w.node_ids)
            );
        }
        out.push_str("</g>\n");
    }

    let signals: Vec<Vec2> = network
        .nodes()
        .values()
        .filter(|n| n.kind == NodeKind::Signal)
        .map(|n| n.pos)
        .collect();
    if !signals.is_empty() {
        let _ = writeln!(out, "<g id=\"signals\" fill=\"{}\">", options.signal_color);
        for p in signals {
            let _ = writeln!(
                out,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.2}\"/>",
                p.x,
                -p.y,
                options.signal_radius
            );
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::super::{GeoPoint, NetworkBuilder};
    use super::*;

    fn count(doc: &str, tag: &str) -> usize {
        roxmltree::Document::parse(doc)
            .unwrap()
            .descendants()
            .filter(|n| n.has_tag_name(tag))
            .count()
    }

    #[test]
    fn empty_network_is_valid_document() {
        let net = RoadNetwork::from_parts(GeoPoint::new(0.0, 0.0), vec![], vec![], vec![]).unwrap();
        let doc = render_svg(&net, &SvgOptions::default());
        let parsed = roxmltree::Document::parse(&doc).unwrap();
        assert_eq!(parsed.root_element().tag_name().name(), "svg");
        assert_eq!(parsed.root_element().children().filter(|n| n.is_element()).count(), 0);
    }

    #[test]
    fn single_way_is_one_polyline() {
        let net = NetworkBuilder::new(GeoPoint::new(51.5, 7.4))
            .node(1, 0.0, 0.0, NodeKind::Plain)
            .node(2, 100.0, 0.0, NodeKind::Plain)
            .road(1, &[1, 2], 2, 50.0)
            .build()
            .unwrap();
        let doc = render_svg(&net, &SvgOptions::default());
        assert_eq!(count(&doc, "polyline"), 1);
        assert!(doc.contains("stroke-width=\"14.00\""));
    }

    #[test]
    fn view_box_has_five_percent_margin() {
        let net = NetworkBuilder::new(GeoPoint::new(51.5, 7.4))
            .node(1, 0.0, 0.0, NodeKind::Signal)
            .node(2, 200.0, 100.0, NodeKind::Plain)
            .node(3, 0.0, 100.0, NodeKind::Plain)
            .road(1, &[1, 2], 1, 50.0)
            .building(2, &[1, 2, 3, 1])
            .build()
            .unwrap();
        let doc = render_svg(&net, &SvgOptions::default());
        assert!(doc.contains("viewBox=\"-10.00 -105.00 220.00 110.00\""), "{doc}");
        assert_eq!(count(&doc, "polygon"), 1);
        assert_eq!(count(&doc, "circle"), 1);
    }
}
