//! Loads a map through its cache and prints the shortest path between two
//! nodes.
//!
//! ```text
//! cargo run --example parse_and_route -- [MAP] [FROM TO]
//! ```
//! Without node ids the route runs between the first and last intersection.

use std::path::PathBuf;
use std::process::ExitCode;

use mobisim::roadnet::load_map;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let map = args
        .first()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/small.osm")));
    let (net, source) = match load_map(&map) {
        Ok(loaded) => loaded,
        Err(e) => {
            eprintln!("{}: {e}", map.display());
            return ExitCode::FAILURE;
        }
    };
    println!(
        "{} ({source:?}): {} nodes, {} ways, {} directed edges, {} intersections",
        map.display(),
        net.nodes().len(),
        net.ways().len(),
        net.edge_count(),
        net.intersections().len()
    );

    let (from, to) = match args.as_slice() {
        [_, a, b] => match (a.parse(), b.parse()) {
            (Ok(a), Ok(b)) => (a, b),
            _ => {
                eprintln!("node ids must be integers");
                return ExitCode::FAILURE;
            }
        },
        _ => {
            let (Some(&a), Some(&b)) = (net.intersections().first(), net.intersections().last()) else {
                eprintln!("the map has no intersections; pass FROM and TO");
                return ExitCode::FAILURE;
            };
            (a, b)
        }
    };
    match net.route(from, to) {
        Ok(path) => {
            let length = net.path_length(&path).unwrap_or(0.0);
            println!("route {from} -> {to}: {} nodes, {length:.1} m", path.len());
            println!("{path:?}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
