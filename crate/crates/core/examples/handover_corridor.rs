//! A car drives past two base stations 1 km apart and hands over once.
//! Prints the RSSI of both stations and the serving cell every second.
//!
//! ```text
//! cargo run --example handover_corridor
//! ```

use std::sync::Arc;

use mobisim::geom::Vec2;
use mobisim::mobility::{DriverProfile, SpawnRequest, Traffic, TrafficConfig};
use mobisim::radio::{self, Attachment, BaseStation, RadioConfig};
use mobisim::roadnet::{GeoPoint, NetworkBuilder, NodeKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut b = NetworkBuilder::new(GeoPoint::new(51.5, 7.4));
    let ids: Vec<i64> = (1..=41).collect();
    for &id in &ids {
        b = b.node(id, -500.0 + (id - 1) as f64 * 50.0, 0.0, NodeKind::Plain);
    }
    let network = Arc::new(b.road(1, &ids, 1, 50.0).build()?);
    let config = TrafficConfig { lane_changes: false, ..TrafficConfig::default() };
    let mut traffic = Traffic::new(Arc::clone(&network), config, DriverProfile::default(), ChaCha8Rng::seed_from_u64(1))?;
    let car = traffic.spawn(SpawnRequest { speed: 50.0 / 3.6, ..SpawnRequest::new(ids.clone()) })?;

    let stations = [BaseStation::new(0, Vec2::new(0.0, 50.0)), BaseStation::new(1, Vec2::new(1000.0, 50.0))];
    let radio = RadioConfig { sample_interval: 0.1, ..RadioConfig::default() };
    let mut attachment = Attachment::new(car);

    println!("t,x,rssi_0,rssi_1,serving");
    for k in 0.. {
        let t = k as f64 * radio.sample_interval;
        let pos = traffic.vehicle(car).expect("spawned").position(&network);
        if pos.x > 1400.0 {
            break;
        }
        let samples = radio::measure(t, car, pos, &stations, &radio, || 0.0);
        if radio::handover_check(&mut attachment, &samples, radio.hysteresis_db, radio.time_to_trigger, t) {
            eprintln!("handover to station {} at t = {t:.1} s, x = {:.1} m", attachment.serving.unwrap_or_default(), pos.x);
        }
        if k % 10 == 0 {
            println!(
                "{t:.1},{:.1},{:.2},{:.2},{}",
                pos.x,
                samples[0].rssi,
                samples[1].rssi,
                attachment.serving.map_or(String::new(), |s| s.to_string())
            );
        }
        traffic.step(radio.sample_interval)?;
    }
    Ok(())
}
