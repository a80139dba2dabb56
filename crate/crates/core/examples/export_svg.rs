//! Renders a map as SVG with lane-scaled roads and signal markers.
//!
//! ```text
//! cargo run --example export_svg -- [MAP] [OUT.svg]
//! ```

use std::path::PathBuf;
use std::process::ExitCode;

use mobisim::roadnet::{export_svg, load_map, SvgOptions};

fn main() -> ExitCode {
    let mut args = std::env::args().skip(1);
    let map = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/reference.osm")));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("map.svg"));
    let result = load_map(&map).and_then(|(net, _)| {
        let options = SvgOptions { lane_width: 4.0, ..SvgOptions::default() };
        export_svg(&net, &out, &options).map(|()| net)
    });
    match result {
        Ok(net) => {
            println!("{} -> {} ({} ways, {} signals)", map.display(), out.display(), net.ways().len(), net.signal_nodes().count());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
