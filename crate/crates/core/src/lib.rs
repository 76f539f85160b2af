//! Huff-family retail market-share models (static, time-aware, adjusted and
//! time-averaged) with particle-swarm calibration and the supporting
//! statistics: distance decay, multiple regression, entropy and map classing.

pub mod calibrate;
pub mod cli;
pub mod domain;
pub mod error;
pub mod geo;
pub mod ingest;
pub mod models;
mod par;
pub mod stats;
pub mod synth;

pub use calibrate::{grid_evaluate, objective, pso_calibrate, CalibrationResult, Evaluator, GridResult, PsoConfig};
pub use domain::{validate_scenario, GeoPoint, ModelParams, Neighborhood, Scenario, Store, VisitMatrix, HOURS_PER_WEEK};
pub use error::{Error, Result};
pub use geo::{build_distance_matrix, haversine_km, DistanceMatrix};
pub use models::{observe, predict, ModelKind, ObservedTensor, PredictionTensor};
pub use par::with_threads;
