//! Writes a synthetic Manhattan grid as OSM XML.
//!
//! ```text
//! cargo run --example generate_grid -- grid.osm [rows cols]
//! ```

use std::process::ExitCode;

use mobisim::roadnet::parse_osm;
use mobisim::roadnet::synthetic::{grid_osm, GridSpec};

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(out) = args.first() else {
        eprintln!("usage: generate_grid OUT.osm [ROWS COLS]");
        return ExitCode::FAILURE;
    };
    let mut spec = GridSpec::default();
    if let [_, rows, cols] = args.as_slice() {
        match (rows.parse(), cols.parse()) {
            (Ok(r), Ok(c)) => (spec.rows, spec.cols) = (r, c),
            _ => {
                eprintln!("rows and cols must be integers");
                return ExitCode::FAILURE;
            }
        }
    }
    let xml = grid_osm(&spec);
    let net = parse_osm(&xml).expect("generated grids always parse");
    if let Err(e) = std::fs::write(out, &xml) {
        eprintln!("cannot write {out}: {e}");
        return ExitCode::FAILURE;
    }
    println!(
        "{out}: {} nodes, {} ways, {} intersections, {} signals",
        net.nodes().len(),
        net.ways().len(),
        net.intersections().len(),
        net.signal_nodes().count()
    );
    ExitCode::SUCCESS
}
