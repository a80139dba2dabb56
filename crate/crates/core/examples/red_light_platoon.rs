//! Ten cars queue at a red light on a single-lane road, then drive off
//! behind a slow driver. Prints a space-time CSV (t, vehicle, position).
//!
//! ```text
//! cargo run --example red_light_platoon > platoon.csv
//! ```

use std::sync::Arc;

use mobisim::mobility::{DriverProfile, PhaseDurations, SignalPhase, SpawnRequest, Traffic, TrafficConfig, TrafficSignal};
use mobisim::roadnet::{GeoPoint, NetworkBuilder, NodeKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIGNAL: i64 = 11;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut b = NetworkBuilder::new(GeoPoint::new(51.5, 7.4));
    let ids: Vec<i64> = (1..=41).collect();
    for &id in &ids {
        let kind = if id == SIGNAL { NodeKind::Signal } else { NodeKind::Plain };
        b = b.node(id, (id - 1) as f64 * 100.0, 0.0, kind);
    }
    let network = Arc::new(b.road(1, &ids, 1, 50.0).build()?);

    let config = TrafficConfig { lane_changes: false, ..TrafficConfig::default() };
    let mut traffic = Traffic::new(network, config, DriverProfile::default(), ChaCha8Rng::seed_from_u64(1))?;
    let durations = PhaseDurations { green: 1000.0, yellow: 3.0, red: 60.0 };
    traffic.set_signal(TrafficSignal::new(SIGNAL, durations, SignalPhase::Yellow, 0.0)?)?;

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut cars = Vec::new();
    for k in 0..10 {
        // the fourth car is the slow one
        let factor = if k == 3 { 0.8 } else { rng.random_range(0.8..=1.2) };
        let front = 700.0 - 30.0 * k as f64;
        let first = (front / 100.0).floor() as i64 + 1;
        let request = SpawnRequest {
            offset: front - (first - 1) as f64 * 100.0,
            velocity_factor: factor,
            ..SpawnRequest::new((first..=41).collect())
        };
        cars.push(traffic.spawn(request)?);
        eprintln!("car {k}: velocity factor {factor:.3}");
    }

    println!("t,vehicle_id,position");
    for step in 0..=2000 {
        if step % 5 == 0 {
            for &id in &cars {
                let v = traffic.vehicle(id).expect("spawned");
                let position = (v.edge().from - 1) as f64 * 100.0 + v.offset;
                println!("{:.1},{id},{position:.3}", step as f64 * 0.1);
            }
        }
        traffic.step(0.1)?;
    }
    eprintln!("collisions: {}", traffic.stats().collisions);
    Ok(())
}
