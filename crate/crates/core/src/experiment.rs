//! Periodic versus predictive transmission scheduling.
//!
//! A training run with its own seed records the SNR map. Each evaluation
//! seed is then simulated once per scheme with that map frozen; the two runs
//! of a pair share traffic and sensor choice, so they differ only in timing.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::roadnet::RoadNetwork;
use crate::sensing::{Scheme, SnrMap, TransmissionRecord};
use crate::sim::{SimConfig, SimError, Simulation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

impl Stats {
    /// Nearest-rank 95th percentile; the median averages the middle pair.
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Some(Stats { mean: v.iter().sum::<f64>() / n as f64, median, p95: v[rank - 1] })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    pub transmissions: usize,
    pub duration: Stats,
    pub goodput: Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecords {
    pub seed: u64,
    pub scheme: Scheme,
    #[serde(skip)]
    pub records: Vec<TransmissionRecord>,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub training_seed: u64,
    pub seeds: Vec<u64>,
    pub periodic: SchemeSummary,
    pub predictive: SchemeSummary,
    pub map: SnrMap,
    /// Sorted by (scheme, seed).
    pub runs: Vec<RunRecords>,
}

impl ComparisonReport {
    /// `1 − predictive / periodic` mean transmission duration.
    pub fn duration_reduction(&self) -> f64 {
        1.0 - self.predictive.duration.mean / self.periodic.duration.mean
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "scheme,transmissions,mean_duration_s,median_duration_s,p95_duration_s,mean_goodput_bps,median_goodput_bps,p95_goodput_bps\n",
        );
        for s in [&self.periodic, &self.predictive] {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.3},{:.3},{:.3}\n",
                s.scheme, s.transmissions, s.duration.mean, s.duration.median, s.duration.p95, s.goodput.mean, s.goodput.median, s.goodput.p95
            ));
        }
        out
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "training seed {}, map cells {}, evaluation seeds {:?}", self.training_seed, self.map.len(), self.seeds)?;
        writeln!(f, "{:<11} {:>6} {:>12} {:>12} {:>12} {:>14} {:>14} {:>14}", "scheme", "tx", "mean dur s", "median dur", "p95 dur", "mean Mbit/s", "median Mbit/s", "p95 Mbit/s")?;
        for s in [&self.periodic, &self.predictive] {
            writeln!(
                f,
                "{:<11} {:>6} {:>12.4} {:>12.4} {:>12.4} {:>14.3} {:>14.3} {:>14.3}",
                s.scheme.to_string(),
                s.transmissions,
                s.duration.mean,
                s.duration.median,
                s.duration.p95,
                s.goodput.mean / 1e6,
                s.goodput.median / 1e6,
                s.goodput.p95 / 1e6
            )?;
        }
        write!(f, "mean duration reduction: {:.1} %", 100.0 * self.duration_reduction())
    }
}

/// Runs the training simulation and returns its recorded map.
pub fn train_map(network: Arc<RoadNetwork>, config: &SimConfig, training_seed: u64) -> Result<SnrMap, SimError> {
    let mut training = config.clone();
    training.seed = training_seed;
    training.record_map = true;
    training.sensing.scheme = Scheme::Periodic;
    let out = Simulation::execute(network, training, None)?;
    Ok(out.snr_map.expect("map recording was enabled"))
}

pub fn validate_seeds(seeds: &[u64], training_seed: u64) -> Result<(), SimError> {
    if seeds.is_empty() {
        return Err(SimError::config("seeds", "at least one evaluation seed is required"));
    }
    if seeds.contains(&training_seed) {
        return Err(SimError::config("seeds", format!("evaluation seeds must not include the training seed {training_seed}")));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(SimError::config("seeds", "evaluation seeds must be distinct"));
    }
    Ok(())
}

fn summarize(scheme: Scheme, runs: &[RunRecords]) -> Result<SchemeSummary, SimError> {
    let records: Vec<&TransmissionRecord> = runs.iter().filter(|r| r.scheme == scheme).flat_map(|r| &r.records).collect();
    let durations: Vec<f64> = records.iter().map(|r| r.duration).collect();
    let goodputs: Vec<f64> = records.iter().map(|r| r.goodput_bps).collect();
    let (Some(duration), Some(goodput)) = (Stats::of(&durations), Stats::of(&goodputs)) else {
        return Err(SimError::config("sensing", format!("the {scheme} runs produced no transmissions")));
    };
    Ok(SchemeSummary { scheme, transmissions: records.len(), duration, goodput })
}

/// Evaluates both schemes on every seed, in parallel across runs.
pub fn run_comparison(
    network: Arc<RoadNetwork>,
    config: &SimConfig,
    seeds: &[u64],
    training_seed: u64,
) -> Result<ComparisonReport, SimError> {
    validate_seeds(seeds, training_seed)?;
    config.validate()?;
    if config.stations.is_empty() || config.sensors == 0 {
        return Err(SimError::config("sensing.sensors", "the comparison needs sensors and at least one station"));
    }
    let map = Arc::new(train_map(Arc::clone(&network), config, training_seed)?);
    let jobs: Vec<(Scheme, u64)> = [Scheme::Periodic, Scheme::Predictive]
        .into_iter()
        .flat_map(|s| seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let mut runs = jobs
        .into_par_iter()
        .map(|(scheme, seed)| {
            let mut run = config.clone();
            run.seed = seed;
            run.record_map = false;
            run.sensing.scheme = scheme;
            let out = Simulation::execute(Arc::clone(&network), run, Some(Arc::clone(&map)))?;
            Ok(RunRecords { seed, scheme, records: out.transmissions })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    runs.sort_by_key(|r| (r.scheme, r.seed));
    let mut sorted_seeds = seeds.to_vec();
    sorted_seeds.sort_unstable();
    Ok(ComparisonReport {
        training_seed,
        seeds: sorted_seeds,
        periodic: summarize(Scheme::Periodic, &runs)?,
        predictive: summarize(Scheme::Predictive, &runs)?,
        map: Arc::try_unwrap(map).unwrap_or_else(|m| (*m).clone()),
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::radio::BaseStation;
    use crate::roadnet::{parse_osm, synthetic};

    #[test]
    fn stats_basics() {
        let s = Stats::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.mean, s.median, s.p95), (2.5, 2.5, 4.0));
        let many: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(Stats::of(&many).unwrap().p95, 95.0);
        assert!(Stats::of(&[]).is_none());
    }

    #[test]
    fn training_seed_must_be_disjoint() {
        assert!(matches!(validate_seeds(&[1, 2, 3], 2), Err(SimError::Config { .. })));
        assert!(validate_seeds(&[], 9).is_err());
        assert!(validate_seeds(&[1, 1], 9).is_err());
        assert!(validate_seeds(&[1, 2], 9).is_ok());
    }

    #[test]
    fn flat_world_makes_schemes_equal() {
        // One far station: every cell has essentially the same SNR, well
        // above the rate cap, so airtime is constant per byte.
        let spec = synthetic::GridSpec { rows: 3, cols: 3, ..Default::default() };
        let network = Arc::new(parse_osm(&synthetic::grid_osm(&spec)).unwrap());
        let mut config = SimConfig { duration: 120.0, vehicles: 6, sensors: 4, ..Default::default() };
        config.stations = vec![BaseStation { tx_power_dbm: 200.0, ..BaseStation::new(0, Vec2::new(150.0, 150.0)) }];
        let report = run_comparison(network, &config, &[3, 4], 7).unwrap();
        assert!(report.map.len() > 1);
        let per_byte = |s: &SchemeSummary| s.goodput.mean;
        assert!((per_byte(&report.periodic) - per_byte(&report.predictive)).abs() < 1e-6);
        assert_eq!(report.runs.len(), 4);
        assert_eq!(report.runs[0].scheme, Scheme::Periodic);
    }
}
