//! Space-time projection of trajectory traces: each vehicle's position as
//! the distance driven along its own path.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::sim::TRAJECTORY_CSV_HEADER;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TraceError {
    #[error("trace header is `{0}`, expected `{TRAJECTORY_CSV_HEADER}`")]
    Header(String),
    #[error("trace line {line}: {message}")]
    Row { line: usize, message: String },
}

pub const SPACETIME_CSV_HEADER: &str = "t,vehicle_id,position";

/// Position is the cumulative straight-line distance between consecutive
/// trace samples, so it is exact on straight roads and a chord
/// approximation around corners.
pub fn spacetime(trace_csv: &str, vehicles: &[u32]) -> Result<String, TraceError> {
    let mut lines = trace_csv.lines().enumerate();
    let header = lines.next().map(|(_, l)| l.trim()).unwrap_or_default();
    if header != TRAJECTORY_CSV_HEADER {
        return Err(TraceError::Header(header.to_string()));
    }
    let mut tracks: BTreeMap<u32, Vec<(f64, f64, f64)>> = vehicles.iter().map(|&v| (v, Vec::new())).collect();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| TraceError::Row { line: n + 1, message };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad(format!("expected 8 columns, found {}", f.len())));
        }
        let id: u32 = f[1].parse().map_err(|e| bad(format!("vehicle_id: {e}")))?;
        let Some(track) = tracks.get_mut(&id) else { continue };
        let num = |i: usize| f[i].parse::<f64>().map_err(|e| bad(format!("column {}: {e}", i + 1)));
        track.push((num(0)?, num(2)?, num(3)?));
    }
    let mut out = String::from(SPACETIME_CSV_HEADER);
    out.push('\n');
    let mut rows = Vec::new();
    for (id, mut track) in tracks {
        track.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut s = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        for (t, x, y) in track {
            if let Some((px, py)) = prev {
                s += ((x - px).powi(2) + (y - py).powi(2)).sqrt();
            }
            prev = Some((x, y));
            rows.push((t, id, s));
        }
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (t, id, s) in rows {
        let _ = writeln!(out, "{t:.3},{id},{s:.3}");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(rows: &[(f64, u32, f64, f64)]) -> String {
        let mut s = format!("{TRAJECTORY_CSV_HEADER}\n");
        for (t, id, x, y) in rows {
            s.push_str(&format!("{t},{id},{x},{y},0,0,1,0\n"));
        }
        s
    }

    #[test]
    fn stationary_vehicle_has_constant_position() {
        let csv = trace(&[(0.0, 3, 5.0, 5.0), (1.0, 3, 5.0, 5.0), (2.0, 3, 5.0, 5.0)]);
        let out = spacetime(&csv, &[3]).unwrap();
        assert_eq!(out, "t,vehicle_id,position\n0.000,3,0.000\n1.000,3,0.000\n2.000,3,0.000\n");
    }

    #[test]
    fn constant_speed_gives_linear_position() {
        let rows: Vec<_> = (0..5).map(|k| (k as f64, 1, 0.0, 7.0 * k as f64)).chain([(0.0, 2, 0.0, 0.0)]).collect();
        let out = spacetime(&trace(&rows), &[1]).unwrap();
        let positions: Vec<f64> = out.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
        assert_eq!(positions, [0.0, 7.0, 14.0, 21.0, 28.0]);
    }

    #[test]
    fn bad_header_is_reported() {
        assert!(matches!(spacetime("a,b\n", &[1]), Err(TraceError::Header(_))));
        let csv = format!("{TRAJECTORY_CSV_HEADER}\n0,1,x,0,0,0,1,0\n");
        assert_eq!(spacetime(&csv, &[1]).unwrap_err(), TraceError::Row { line: 2, message: "column 3: invalid float literal".into() });
    }
}
