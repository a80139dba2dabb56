//! Times the reference scenario for a range of fleet sizes and reports how
//! the wall clock splits between subsystems.
//!
//! ```text
//! cargo run --release --example mobility_benchmark -- [VEHICLES...]
//! ```

use mobisim::scenario::Scenario;
use mobisim::sim::Simulation;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/reference.toml"));
    let scenario = Scenario::load(path)?;
    let network = scenario.network()?;
    let mut fleets: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    if fleets.is_empty() {
        fleets = vec![25, 50, 100, 200];
    }
    println!("vehicles,simulated_s,wall_s,mobility_s,radio_s,sensing_s,trace_s,real_time_factor,collisions");
    for n in fleets {
        let mut config = scenario.sim_config();
        config.vehicles = n;
        config.sensors = config.sensors.min(n);
        let out = Simulation::execute(network.clone(), config, None)?;
        let r = &out.report;
        let wall = r.wall_clock.as_secs_f64();
        println!(
            "{n},{:.0},{wall:.3},{:.3},{:.3},{:.3},{:.3},{:.0},{}",
            r.simulated,
            r.timers.mobility.as_secs_f64(),
            r.timers.radio.as_secs_f64(),
            r.timers.sensing.as_secs_f64(),
            r.timers.trace.as_secs_f64(),
            r.simulated / wall,
            r.traffic.collisions
        );
    }
    Ok(())
}
