use std::sync::Arc;

use mobisim::mobility::{
    DriverProfile, PhaseDurations, SignalPhase, SpawnRequest, Traffic, TrafficConfig, TrafficSignal, VehicleId,
};
use mobisim::roadnet::{parse_osm, synthetic, GeoPoint, NetworkBuilder, NodeKind, RoadNetwork};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grid_traffic(seed: u64, vehicles: usize) -> Traffic {
    let network = Arc::new(parse_osm(&synthetic::grid_osm(&synthetic::GridSpec::default())).unwrap());
    let config = TrafficConfig::default();
    let mut t = Traffic::new(network, config, DriverProfile::default(), ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let mut spawn = ChaCha8Rng::seed_from_u64(seed + 1000);
    let mut drivers = ChaCha8Rng::seed_from_u64(seed + 2000);
    t.populate(vehicles, &mut spawn, &mut drivers).unwrap();
    t
}

#[test]
fn grid_traffic_is_collision_free() {
    for seed in 1..=4 {
        let mut t = grid_traffic(seed, 150);
        for _ in 0..3000 {
            t.step(0.1).unwrap();
        }
        let stats = t.stats();
        assert_eq!(stats.collisions, 0, "seed {seed}");
        assert!(stats.trips_completed > 0, "seed {seed}: nobody arrived");
    }
}

#[test]
fn grid_traffic_repeats_with_the_seed() {
    let snapshot = |seed| {
        let mut t = grid_traffic(seed, 40);
        for _ in 0..500 {
            t.step(0.1).unwrap();
        }
        t.vehicles().map(|v| (v.id, v.offset.to_bits(), v.velocity.to_bits(), v.edge().from)).collect::<Vec<_>>()
    };
    assert_eq!(snapshot(9), snapshot(9));
    assert_ne!(snapshot(9), snapshot(10));
}

fn single_lane(signal: i64) -> Arc<RoadNetwork> {
    let mut b = NetworkBuilder::new(GeoPoint::new(51.5, 7.4));
    let ids: Vec<i64> = (1..=31).collect();
    for &id in &ids {
        let kind = if id == signal { NodeKind::Signal } else { NodeKind::Plain };
        b = b.node(id, (id - 1) as f64 * 100.0, 0.0, kind);
    }
    Arc::new(b.road(1, &ids, 1, 50.0).build().unwrap())
}

fn along(t: &Traffic, id: VehicleId) -> f64 {
    let v = t.vehicle(id).unwrap();
    (v.edge().from - 1) as f64 * 100.0 + v.offset
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn platoons_keep_positive_gaps(
        factors in proptest::collection::vec(0.8f64..1.2, 2..8),
        spacing in 8.0f64..40.0,
        speed in 0.0f64..15.0,
        red in 5.0f64..60.0,
        phase_offset in 0.0f64..3.0,
    ) {
        let network = single_lane(11);
        let config = TrafficConfig { lane_changes: false, ..TrafficConfig::default() };
        let mut t = Traffic::new(network, config, DriverProfile::default(), ChaCha8Rng::seed_from_u64(1)).unwrap();
        let durations = PhaseDurations { green: 20.0, yellow: 3.0, red };
        t.set_signal(TrafficSignal::new(11, durations, SignalPhase::Yellow, phase_offset).unwrap()).unwrap();
        let mut ids = Vec::new();
        for (k, &f) in factors.iter().enumerate() {
            let front = 800.0 - spacing * k as f64;
            let first = (front / 100.0).floor() as i64 + 1;
            let request = SpawnRequest {
                offset: front - (first - 1) as f64 * 100.0,
                speed,
                velocity_factor: f,
                ..SpawnRequest::new((first..=31).collect())
            };
            ids.push(t.spawn(request).unwrap());
        }
        for _ in 0..1200 {
            t.step(0.1).unwrap();
            for w in ids.windows(2) {
                let gap = along(&t, w[0]) - 5.0 - along(&t, w[1]);
                prop_assert!(gap > 0.0, "gap {gap} at t = {}", t.time());
            }
        }
        prop_assert_eq!(t.stats().collisions, 0);
    }
}
