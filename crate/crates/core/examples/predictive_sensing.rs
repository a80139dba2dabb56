//! Trains an SNR map and compares periodic with predictive upload
//! scheduling on the reference scenario.
//!
//! ```text
//! cargo run --release --example predictive_sensing -- [SCENARIO.toml] [SEEDS]
//! ```

use std::path::PathBuf;

use mobisim::experiment::run_comparison;
use mobisim::scenario::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/reference.toml")));
    let seeds: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);

    let scenario = Scenario::load(&path)?;
    let mut config = scenario.sim_config();
    // every car carries a sensor
    config.vehicles = 20;
    config.sensors = 20;
    let seeds: Vec<u64> = (1..=seeds).collect();
    let report = run_comparison(scenario.network()?, &config, &seeds, 100)?;
    println!("{report}");
    Ok(())
}
