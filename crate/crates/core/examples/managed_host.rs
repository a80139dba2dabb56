//! Embeds the simulation in a host event loop. The host owns the clock,
//! interleaves its own events and hands control to the model whenever the
//! model's next event is due. The trace matches a standalone run.
//!
//! ```text
//! cargo run --release --example managed_host
//! ```

use std::collections::BinaryHeap;
use std::cmp::Reverse;

use mobisim::scenario::Scenario;
use mobisim::sim::Simulation;
use mobisim::simkernel::{ClockMode, ManagedModel};

/// Host event times in integer microseconds.
fn host_schedule(end: f64) -> BinaryHeap<Reverse<u64>> {
    (0..).map(|k| 50_000 + 370_000 * k).take_while(|&t| (t as f64) < end * 1e6).map(Reverse).collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/reference.toml"));
    let scenario = Scenario::load(path)?;
    let mut config = scenario.sim_config();
    config.duration = 60.0;
    let network = scenario.network()?;

    let mut model = Simulation::new(network.clone(), config.clone(), None, ClockMode::Managed)?;
    let mut host = host_schedule(config.duration);
    let (mut host_events, mut model_events) = (0u64, 0u64);
    loop {
        let next_model = model.next_event_time();
        let next_host = host.peek().map(|Reverse(t)| *t as f64 / 1e6);
        match (next_model, next_host) {
            (None, None) => break,
            (Some(m), h) if h.is_none_or(|h| m <= h) => {
                model.dispatch_next(m)?;
                model_events += 1;
            }
            _ => {
                host.pop();
                host_events += 1;
            }
        }
    }
    let managed = model.finish();
    let standalone = Simulation::execute(network, config, None)?;
    println!("host events {host_events}, model events {model_events}");
    println!(
        "trajectory trace identical to standalone: {}",
        managed.trajectory_csv == standalone.trajectory_csv && managed.link_csv == standalone.link_csv
    );
    Ok(())
}
