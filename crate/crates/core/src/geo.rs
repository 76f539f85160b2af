//! Great-circle distances between neighborhood centroids and stores.

use crate::domain::{GeoPoint, Scenario};
use crate::par;

/// IUGG mean Earth radius in km.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Great-circle distance in km on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let s_lat = (dlat * 0.5).sin();
    let s_lon = (dlon * 0.5).sin();
    let h = s_lat * s_lat + lat1.cos() * lat2.cos() * s_lon * s_lon;
    let h = h.clamp(0.0, 1.0);
    2.0 * EARTH_RADIUS_KM * h.sqrt().atan2((1.0 - h).sqrt())
}

/// Point reached by travelling `distance_km` from `origin` along the initial
/// bearing `bearing_deg` (clockwise from north).
pub fn destination_point(origin: GeoPoint, bearing_deg: f64, distance_km: f64) -> GeoPoint {
    let delta = distance_km / EARTH_RADIUS_KM;
    let theta = bearing_deg.to_radians();
    let lat1 = origin.lat.to_radians();
    let lon1 = origin.lon.to_radians();
    let lat2 = (lat1.sin() * delta.cos() + lat1.cos() * delta.sin() * theta.cos()).asin();
    let lon2 = lon1
        + (theta.sin() * delta.sin() * lat1.cos()).atan2(delta.cos() - lat1.sin() * lat2.sin());
    let mut lon = lon2.to_degrees();
    lon = (lon + 540.0).rem_euclid(360.0) - 180.0;
    GeoPoint::new(lat2.to_degrees(), lon)
}

/// Dense neighborhood-by-store distance matrix in km, clamped below by
/// `floor_km`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    floor_km: f64,
}

impl DistanceMatrix {
    /// Wraps precomputed row-major values, applying the floor.
    pub fn from_values(rows: usize, cols: usize, mut values: Vec<f64>, floor_km: f64) -> Self {
        assert_eq!(values.len(), rows * cols, "distance matrix shape");
        for v in &mut values {
            if *v < floor_km {
                *v = floor_km;
            }
        }
        Self {
            rows,
            cols,
            values,
            floor_km,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn floor_km(&self) -> f64 {
        self.floor_km
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Returns a copy with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|v| v * factor).collect(),
            floor_km: self.floor_km * factor,
        }
    }
}

pub fn build_distance_matrix(s: &Scenario) -> DistanceMatrix {
    let rows = s.neighborhoods.len();
    let cols = s.stores.len();
    let floor = s.distance_floor_km;
    let mut values = vec![0.0; rows * cols];
    par::fill_chunks(&mut values, cols, |i, row| {
        let c = s.neighborhoods[i].centroid;
        for (v, st) in row.iter_mut().zip(&s.stores) {
            *v = haversine_km(c, st.location).max(floor);
        }
    });
    DistanceMatrix {
        rows,
        cols,
        values,
        floor_km: floor,
    }
}
