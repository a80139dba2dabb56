//! Equirectangular projection around a fixed origin.

use super::GeoPoint;
use crate::geom::Vec2;

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Projects `(lat, lon)` to meters east (`x`) and north (`y`) of `origin`.
pub fn project(lat: f64, lon: f64, origin: GeoPoint) -> Vec2 {
    let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
    Vec2::new(
        k * (lon - origin.lon) * origin.lat.to_radians().cos(),
        k * (lat - origin.lat),
    )
}

pub fn unproject(pos: Vec2, origin: GeoPoint) -> GeoPoint {
    let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
    GeoPoint::new(
        origin.lat + pos.y / k,
        origin.lon + pos.x / (k * origin.lat.to_radians().cos()),
    )
}

/// Great-circle distance in meters.
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().asin()
}
