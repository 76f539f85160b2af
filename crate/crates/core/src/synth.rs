//! Synthetic scenarios generated from known Huff parameters.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::domain::{validate_scenario, GeoPoint, ModelParams, Neighborhood, Scenario, Store, VisitMatrix, HOURS_PER_WEEK};
use crate::error::{Error, Result};
use crate::geo::build_distance_matrix;
use crate::ingest::{write_scenario, IngestError, ScenarioPaths};
use crate::models::predict_huff;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BBox {
    pub fn is_valid(&self) -> bool {
        GeoPoint::new(self.lat_min, self.lon_min).is_valid()
            && GeoPoint::new(self.lat_max, self.lon_max).is_valid()
            && self.lat_min < self.lat_max
            && self.lon_min < self.lon_max
    }
}

impl Default for BBox {
    /// Roughly the Los Angeles basin.
    fn default() -> Self {
        Self {
            lat_min: 33.7,
            lat_max: 34.3,
            lon_min: -118.7,
            lon_max: -117.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "shape")]
pub enum ProfileShape {
    Uniform,
    /// Lunch and evening peaks on weekdays, a flatter weekend; the peak hours
    /// are jittered per store.
    BimodalWeekday,
    /// Every store is visited in a single, distinct hour.
    PointMass,
    /// Independent symmetric Dirichlet draw per store.
    Dirichlet { kappa: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_stores: usize,
    pub n_neighborhoods: usize,
    pub true_params: ModelParams,
    pub bbox: BBox,
    pub attractiveness_range: (f64, f64),
    pub profile_shape: ProfileShape,
    /// Expected visits leaving each neighborhood.
    pub visits_per_neighborhood: f64,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_stores: 5,
            n_neighborhoods: 200,
            true_params: ModelParams::new(0.8, 1.2),
            bbox: BBox::default(),
            attractiveness_range: (1_000.0, 20_000.0),
            profile_shape: ProfileShape::Dirichlet { kappa: 0.5 },
            visits_per_neighborhood: 1_000.0,
            noise: NoiseModel::None,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.n_stores == 0 || self.n_neighborhoods == 0 {
            bad.push("store and neighborhood counts must be positive".to_owned());
        }
        if !self.true_params.is_valid() {
            bad.push("true parameters must be finite and non-negative".to_owned());
        }
        if !self.bbox.is_valid() {
            bad.push("bounding box is invalid".to_owned());
        }
        let (lo, hi) = self.attractiveness_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            bad.push(format!("attractiveness range ({lo}, {hi}) must be positive and ordered"));
        }
        if !(self.visits_per_neighborhood.is_finite() && self.visits_per_neighborhood > 0.0) {
            bad.push("visits_per_neighborhood must be positive".to_owned());
        }
        match self.profile_shape {
            ProfileShape::Dirichlet { kappa } if !(kappa.is_finite() && kappa > 0.0) => {
                bad.push(format!("Dirichlet concentration {kappa} must be positive"))
            }
            ProfileShape::PointMass if self.n_stores > HOURS_PER_WEEK => {
                bad.push(format!("point-mass profiles support at most {HOURS_PER_WEEK} stores"))
            }
            _ => {}
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(bad.join("; ")))
        }
    }
}

/// What the generator knows that the generated files do not say directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub true_params: ModelParams,
    pub spec: SynthSpec,
    /// Hourly visit shares per store id.
    pub profiles: BTreeMap<String, Vec<f64>>,
}

fn profile(shape: ProfileShape, hour: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match shape {
        ProfileShape::Uniform => vec![1.0 / HOURS_PER_WEEK as f64; HOURS_PER_WEEK],
        ProfileShape::PointMass => {
            let mut p = vec![0.0; HOURS_PER_WEEK];
            p[hour.expect("point-mass hour")] = 1.0;
            p
        }
        ProfileShape::BimodalWeekday => {
            let lunch = 12.0 + rng.random_range(-1.5..1.5);
            let evening = 18.0 + rng.random_range(-1.5..1.5);
            let raw: Vec<f64> = (0..HOURS_PER_WEEK)
                .map(|t| {
                    let h = (t % 24) as f64;
                    let bump = |c: f64, w: f64| (-0.5 * ((h - c) / w).powi(2)).exp();
                    let weekday = t / 24 < 5;
                    let level = if weekday {
                        bump(lunch, 1.5) + 1.2 * bump(evening, 2.0)
                    } else {
                        0.6 * bump(14.0, 4.0)
                    };
                    0.02 + level
                })
                .collect();
            normalize(raw)
        }
        ProfileShape::Dirichlet { kappa } => {
            let g = Gamma::new(kappa, 1.0).expect("positive concentration");
            loop {
                let raw: Vec<f64> = (0..HOURS_PER_WEEK).map(|_| g.sample(rng)).collect();
                if raw.iter().sum::<f64>() > 0.0 {
                    return normalize(raw);
                }
            }
        }
    }
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

fn point(bbox: &BBox, rng: &mut ChaCha8Rng) -> GeoPoint {
    GeoPoint::new(
        rng.random_range(bbox.lat_min..bbox.lat_max),
        rng.random_range(bbox.lon_min..bbox.lon_max),
    )
}

/// Builds a scenario whose visits follow the Huff model at
/// `spec.true_params`. Hourly counts are each store's profile times its
/// total generated visits; attractiveness is the drawn `S_j`, not the total.
pub fn generate(spec: &SynthSpec) -> Result<(Scenario, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let hours: Option<Vec<usize>> = matches!(spec.profile_shape, ProfileShape::PointMass)
        .then(|| sample(&mut rng, HOURS_PER_WEEK, spec.n_stores).into_vec());

    let (a_lo, a_hi) = spec.attractiveness_range;
    let mut stores = Vec::with_capacity(spec.n_stores);
    let mut profiles = Vec::with_capacity(spec.n_stores);
    for j in 0..spec.n_stores {
        let location = point(&spec.bbox, &mut rng);
        let attractiveness = if a_lo < a_hi { rng.random_range(a_lo..a_hi) } else { a_lo };
        profiles.push(profile(spec.profile_shape, hours.as_ref().map(|h| h[j]), &mut rng));
        stores.push(Store {
            id: format!("store_{j:03}"),
            brand: "synth".to_owned(),
            location,
            attractiveness,
            hourly_visits: vec![0.0; HOURS_PER_WEEK],
        });
    }

    let races = ["race_asian", "race_black", "race_hispanic", "race_white"];
    let share = Gamma::new(1.0, 1.0).expect("valid gamma");
    let neighborhoods: Vec<Neighborhood> = (0..spec.n_neighborhoods)
        .map(|i| {
            let centroid = point(&spec.bbox, &mut rng);
            let population = rng.random_range(500.0..3000.0f64).round();
            let median_age = rng.random_range(25.0..55.0f64);
            let median_income = rng.random_range(30_000.0..150_000.0f64).round();
            let mix = normalize(races.iter().map(|_| share.sample(&mut rng)).collect());
            let race_counts = races
                .iter()
                .zip(mix)
                .map(|(r, m)| ((*r).to_owned(), (m * population).round()))
                .collect();
            Neighborhood {
                id: format!("cbg_{i:05}"),
                centroid,
                population,
                median_age: Some(median_age),
                median_income: Some(median_income),
                race_counts: Some(race_counts),
                city: None,
            }
        })
        .collect();

    let mut scenario = Scenario::new(stores, neighborhoods, VisitMatrix::new());
    let d = build_distance_matrix(&scenario);
    let pred = predict_huff(&scenario, &d, spec.true_params)?;
    let n_s = spec.n_stores;
    let mut totals = vec![0.0; n_s];
    let mut visits = VisitMatrix::new();
    for i in 0..spec.n_neighborhoods {
        for (j, total) in totals.iter_mut().enumerate() {
            let mean = spec.visits_per_neighborhood * pred.tensor.get(i, j, 0);
            let v = match spec.noise {
                NoiseModel::None => mean,
                NoiseModel::Poisson if mean > 0.0 => Poisson::new(mean).expect("positive mean").sample(&mut rng),
                NoiseModel::Poisson => 0.0,
            };
            if v > 0.0 {
                visits.add(scenario.neighborhoods[i].id.clone(), scenario.stores[j].id.clone(), v);
                *total += v;
            }
        }
    }
    for ((st, p), total) in scenario.stores.iter_mut().zip(&profiles).zip(&totals) {
        st.hourly_visits = p.iter().map(|x| x * total).collect();
    }
    scenario.visits = visits;

    let violations = validate_scenario(&scenario);
    if !violations.is_empty() {
        return Err(Error::InvalidScenario(violations));
    }
    let truth = GroundTruth {
        true_params: spec.true_params,
        spec: spec.clone(),
        profiles: scenario.store_ids().into_iter().zip(profiles).collect(),
    };
    Ok((scenario, truth))
}

/// Writes the four input CSVs and `truth.json` into `dir`.
pub fn write_dataset(dir: &Path, s: &Scenario, truth: &GroundTruth) -> Result<(), IngestError> {
    write_scenario(&ScenarioPaths::in_dir(dir), s)?;
    let path = dir.join("truth.json");
    let body = serde_json::to_string_pretty(truth).expect("ground truth serializes");
    fs::write(&path, body + "\n").map_err(|source| IngestError::Io { path, source })
}
