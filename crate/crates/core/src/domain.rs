//! Core data types shared by every other module.
//!
//! Hour indices run over one week: index 0 is Monday 00:00-00:59 and index
//! 167 is Sunday 23:00-23:59.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

/// Number of hourly windows in one week.
pub const HOURS_PER_WEEK: usize = 168;

/// Default clamp applied to centroid-to-store distances, in km.
pub const DEFAULT_DISTANCE_FLOOR_KM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }
}

/// A point of interest competing for visits.
#[derive(Debug, Clone, PartialEq)]
pub struct Store {
    pub id: String,
    pub brand: String,
    pub location: GeoPoint,
    /// Pull factor; total observed visits unless supplied explicitly.
    pub attractiveness: f64,
    /// Visits per hour of the week, `HOURS_PER_WEEK` entries.
    pub hourly_visits: Vec<f64>,
}

impl Store {
    /// Builds a store whose attractiveness is the total of its hourly visits.
    pub fn from_hourly(
        id: impl Into<String>,
        brand: impl Into<String>,
        location: GeoPoint,
        hourly_visits: Vec<f64>,
    ) -> Self {
        let attractiveness = hourly_visits.iter().sum();
        Self {
            id: id.into(),
            brand: brand.into(),
            location,
            attractiveness,
            hourly_visits,
        }
    }

    pub fn total_hourly_visits(&self) -> f64 {
        self.hourly_visits.iter().sum()
    }
}

/// An origin zone (census block group centroid) with optional covariates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Neighborhood {
    pub id: String,
    pub centroid: GeoPoint,
    pub population: f64,
    pub median_age: Option<f64>,
    pub median_income: Option<f64>,
    pub race_counts: Option<BTreeMap<String, f64>>,
    /// Free-form grouping label used for per-group regressions.
    pub city: Option<String>,
}

impl Neighborhood {
    pub fn new(id: impl Into<String>, centroid: GeoPoint, population: f64) -> Self {
        Self {
            id: id.into(),
            centroid,
            population,
            ..Default::default()
        }
    }
}

/// Observed visit counts keyed by `(neighborhood_id, store_id)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VisitMatrix {
    entries: BTreeMap<(String, String), f64>,
}

impl VisitMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `count` to the pair, accumulating repeated keys.
    pub fn add(&mut self, neighborhood: impl Into<String>, store: impl Into<String>, count: f64) {
        *self
            .entries
            .entry((neighborhood.into(), store.into()))
            .or_insert(0.0) += count;
    }

    pub fn get(&self, neighborhood: &str, store: &str) -> f64 {
        self.entries
            .get(&(neighborhood.to_owned(), store.to_owned()))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Entries in `(neighborhood_id, store_id)` order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.entries
            .iter()
            .map(|((n, s), v)| (n.as_str(), s.as_str(), *v))
    }
}

impl FromIterator<(String, String, f64)> for VisitMatrix {
    fn from_iter<I: IntoIterator<Item = (String, String, f64)>>(iter: I) -> Self {
        let mut m = VisitMatrix::new();
        for (n, s, v) in iter {
            m.add(n, s, v);
        }
        m
    }
}

/// Exponent pair of a Huff-family model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
}

impl ModelParams {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    pub fn is_valid(&self) -> bool {
        self.alpha.is_finite() && self.beta.is_finite() && self.alpha >= 0.0 && self.beta >= 0.0
    }
}

/// One brand-city dataset: competing stores, origin zones and observed flows.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub stores: Vec<Store>,
    pub neighborhoods: Vec<Neighborhood>,
    pub visits: VisitMatrix,
    pub distance_floor_km: f64,
}

impl Scenario {
    pub fn new(stores: Vec<Store>, neighborhoods: Vec<Neighborhood>, visits: VisitMatrix) -> Self {
        Self {
            stores,
            neighborhoods,
            visits,
            distance_floor_km: DEFAULT_DISTANCE_FLOOR_KM,
        }
    }

    pub fn with_distance_floor(mut self, floor_km: f64) -> Self {
        self.distance_floor_km = floor_km;
        self
    }

    pub fn n_stores(&self) -> usize {
        self.stores.len()
    }

    pub fn n_neighborhoods(&self) -> usize {
        self.neighborhoods.len()
    }

    pub fn store_ids(&self) -> Vec<String> {
        self.stores.iter().map(|s| s.id.clone()).collect()
    }

    pub fn neighborhood_ids(&self) -> Vec<String> {
        self.neighborhoods.iter().map(|n| n.id.clone()).collect()
    }

    /// Dense row-major `|neighborhoods| x |stores|` visit matrix in scenario
    /// order. Keys that do not resolve are ignored.
    pub fn dense_visits(&self) -> Vec<f64> {
        let n_s = self.stores.len();
        let store_idx: HashMap<&str, usize> = self
            .stores
            .iter()
            .enumerate()
            .map(|(j, s)| (s.id.as_str(), j))
            .collect();
        let nb_idx: HashMap<&str, usize> = self
            .neighborhoods
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.as_str(), i))
            .collect();
        let mut out = vec![0.0; self.neighborhoods.len() * n_s];
        for (n, s, v) in self.visits.iter() {
            if let (Some(&i), Some(&j)) = (nb_idx.get(n), store_idx.get(s)) {
                out[i * n_s + j] += v;
            }
        }
        out
    }
}

/// Lists every structural invariant violation; an empty list means valid.
pub fn validate_scenario(s: &Scenario) -> Vec<String> {
    let mut out = Vec::new();
    if s.stores.is_empty() {
        out.push("no stores".to_owned());
    }
    if s.neighborhoods.is_empty() {
        out.push("no neighborhoods".to_owned());
    }
    if !(s.distance_floor_km.is_finite() && s.distance_floor_km > 0.0) {
        out.push(format!(
            "distance_floor_km {} is not a positive real",
            s.distance_floor_km
        ));
    }

    let mut seen = HashSet::new();
    for st in &s.stores {
        if !seen.insert(st.id.as_str()) {
            out.push(format!("store {}: duplicate id", st.id));
        }
        if !st.location.is_valid() {
            out.push(format!(
                "store {}: invalid location ({}, {})",
                st.id, st.location.lat, st.location.lon
            ));
        }
        if !(st.attractiveness.is_finite() && st.attractiveness >= 0.0) {
            out.push(format!(
                "store {}: attractiveness {} is not a non-negative real",
                st.id, st.attractiveness
            ));
        }
        if st.hourly_visits.len() != HOURS_PER_WEEK {
            out.push(format!(
                "store {}: hourly_visits length {} ≠ {}",
                st.id,
                st.hourly_visits.len(),
                HOURS_PER_WEEK
            ));
        }
        if let Some(t) = st
            .hourly_visits
            .iter()
            .position(|v| !(v.is_finite() && *v >= 0.0))
        {
            out.push(format!(
                "store {}: hourly_visits[{t}] = {} is not a non-negative real",
                st.id, st.hourly_visits[t]
            ));
        }
    }

    let mut seen = HashSet::new();
    for nb in &s.neighborhoods {
        if !seen.insert(nb.id.as_str()) {
            out.push(format!("neighborhood {}: duplicate id", nb.id));
        }
        if !nb.centroid.is_valid() {
            out.push(format!(
                "neighborhood {}: invalid centroid ({}, {})",
                nb.id, nb.centroid.lat, nb.centroid.lon
            ));
        }
        if !(nb.population.is_finite() && nb.population >= 0.0) {
            out.push(format!(
                "neighborhood {}: population {} is not a non-negative real",
                nb.id, nb.population
            ));
        }
        for (name, v) in [("median_age", nb.median_age), ("median_income", nb.median_income)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    out.push(format!("neighborhood {}: {name} {v} is not a non-negative real", nb.id));
                }
            }
        }
        if let Some(rc) = &nb.race_counts {
            if rc.values().any(|c| !(c.is_finite() && *c >= 0.0)) {
                out.push(format!("neighborhood {}: negative race count", nb.id));
            } else if !rc.values().any(|c| *c > 0.0) {
                out.push(format!("neighborhood {}: race counts have no positive entry", nb.id));
            }
        }
    }

    let store_ids: HashSet<&str> = s.stores.iter().map(|x| x.id.as_str()).collect();
    let nb_ids: HashSet<&str> = s.neighborhoods.iter().map(|x| x.id.as_str()).collect();
    for (n, st, v) in s.visits.iter() {
        if !(v.is_finite() && v >= 0.0) {
            out.push(format!("visit ({n}, {st}): count {v} is not a non-negative real"));
        }
        if !nb_ids.contains(n) {
            out.push(format!("visit ({n}, {st}): unknown neighborhood {n}"));
        }
        if !store_ids.contains(st) {
            out.push(format!("visit ({n}, {st}): unknown store {st}"));
        }
    }
    out
}
