use std::f64::consts::PI;

use thiserror::Error;

/// Latitude limit of the square Web-Mercator world.
pub const MAX_MERCATOR_LAT: f64 = 85.051_128_779_806_59;
pub const TILE_SIZE: f64 = 256.0;
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("latitude {0} is outside the Web-Mercator range")]
pub struct LatOutOfRange(pub f64);

/// Web-Mercator unit square coordinates, `x` east and `y` south, both in
/// `[0, 1]`. Latitudes past the Mercator limit are clamped.
pub fn to_unit(lat: f64, lon: f64) -> (f64, f64) {
    let lat = lat.clamp(-MAX_MERCATOR_LAT, MAX_MERCATOR_LAT);
    let x = (lon + 180.0) / 360.0;
    let phi = lat.to_radians();
    let y = 0.5 - (PI / 4.0 + phi / 2.0).tan().ln() / (2.0 * PI);
    (x.clamp(0.0, 1.0), y.clamp(0.0, 1.0))
}

/// Latitude of a unit-square `y`.
pub fn unit_y_to_lat(y: f64) -> f64 {
    let n = PI * (1.0 - 2.0 * y);
    n.sinh().atan().to_degrees()
}

/// World pixel coordinates at `zoom`, with `256 * 2^zoom` pixels per side.
pub fn project(lat: f64, lon: f64, zoom: f64) -> Result<(f64, f64), LatOutOfRange> {
    if lat.is_nan() || lat.abs() > 85.05113 {
        return Err(LatOutOfRange(lat));
    }
    let (x, y) = to_unit(lat, lon);
    let world = TILE_SIZE * zoom.exp2();
    Ok((x * world, y * world))
}

/// Like [`project`] but clamps latitude instead of failing.
pub fn project_clamped(lat: f64, lon: f64, zoom: f64) -> (f64, f64) {
    let (x, y) = to_unit(lat, lon);
    let world = TILE_SIZE * zoom.exp2();
    (x * world, y * world)
}

/// Great-circle distance in kilometres (haversine).
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}
