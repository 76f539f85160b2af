//! Predicted and observed visit probabilities for the static Huff model and
//! its hourly variants, plus market-share summaries built on them.
//!
//! All four kinds share the spatial weight `S_j^alpha / D_ij^beta`, evaluated
//! in log space and normalized after a max shift so large exponents do not
//! overflow. `0^0` is taken as 1, so `alpha = 0` removes attractiveness.
//!
//! * `Huff`  - `P_ij`, normalized across stores.
//! * `THuff` - `P_ij * P_jt`; each neighborhood sums to 1 over stores and hours.
//! * `MHuff` - `P_ij / 168`, the hour-agnostic baseline.
//! * `AHuff` - `S_j^a D_ij^-b P_jt`, normalized across stores within each hour.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{ModelParams, Scenario, HOURS_PER_WEEK};
use crate::error::{Error, Result};
use crate::geo::DistanceMatrix;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Huff,
    MHuff,
    THuff,
    AHuff,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Huff, ModelKind::MHuff, ModelKind::THuff, ModelKind::AHuff];

    /// Number of hour slices carried by tensors of this kind.
    pub fn hours(self) -> usize {
        match self {
            ModelKind::Huff => 1,
            _ => HOURS_PER_WEEK,
        }
    }

    pub fn is_dynamic(self) -> bool {
        self != ModelKind::Huff
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Huff => "huff",
            ModelKind::MHuff => "mhuff",
            ModelKind::THuff => "thuff",
            ModelKind::AHuff => "ahuff",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "huff" => Ok(ModelKind::Huff),
            "mhuff" => Ok(ModelKind::MHuff),
            "thuff" => Ok(ModelKind::THuff),
            "ahuff" => Ok(ModelKind::AHuff),
            other => Err(format!("unknown model kind '{other}' (expected huff, mhuff, thuff or ahuff)")),
        }
    }
}

/// Share of one store's weekly visits falling in each hour.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalProfile {
    probs: Vec<f64>,
}

impl TemporalProfile {
    /// Normalizes hourly counts; an all-zero week becomes uniform.
    pub fn from_counts(counts: &[f64]) -> Self {
        let total: f64 = counts.iter().sum();
        let probs = if total > 0.0 {
            counts.iter().map(|v| v / total).collect()
        } else {
            vec![1.0 / counts.len() as f64; counts.len()]
        };
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn is_uniform(&self) -> bool {
        self.probs.windows(2).all(|w| w[0] == w[1])
    }
}

pub fn temporal_profiles(s: &Scenario) -> Vec<TemporalProfile> {
    s.stores
        .iter()
        .map(|st| TemporalProfile::from_counts(&st.hourly_visits))
        .collect()
}

/// Dense `neighborhood x store x hour` probabilities (hour axis of length 1
/// for the static model).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    kind: ModelKind,
    rows: usize,
    stores: usize,
    hours: usize,
    values: Vec<f64>,
    /// `(row, hour)` slices whose normalizer was zero; only the per-hour
    /// normalized kind can produce these.
    zero_slices: Vec<(usize, usize)>,
}

impl Tensor {
    fn zeros(kind: ModelKind, rows: usize, stores: usize) -> Self {
        let hours = kind.hours();
        Self {
            kind,
            rows,
            stores,
            hours,
            values: vec![0.0; rows * stores * hours],
            zero_slices: Vec::new(),
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn stores(&self) -> usize {
        self.stores
    }

    pub fn hours(&self) -> usize {
        self.hours
    }

    pub fn get(&self, i: usize, j: usize, t: usize) -> f64 {
        self.values[(i * self.stores + j) * self.hours + t]
    }

    /// Values of neighborhood `i`, laid out store-major then hour.
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.stores * self.hours;
        &self.values[i * w..(i + 1) * w]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn zero_slices(&self) -> &[(usize, usize)] {
        &self.zero_slices
    }

    /// `sum_t P_ijt` for every `(i, j)`, row-major.
    pub fn hour_marginal(&self) -> Vec<f64> {
        self.values
            .chunks(self.hours)
            .map(|c| c.iter().sum())
            .collect()
    }

    /// The `(i, j)` matrix at one hour.
    pub fn hour_slice(&self, t: usize) -> Vec<f64> {
        self.values
            .chunks(self.hours)
            .map(|c| c[t])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTensor {
    pub params: ModelParams,
    pub neighborhood_ids: Vec<String>,
    pub store_ids: Vec<String>,
    pub tensor: Tensor,
}

impl PredictionTensor {
    pub fn kind(&self) -> ModelKind {
        self.tensor.kind
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservedTensor {
    pub neighborhood_ids: Vec<String>,
    pub store_ids: Vec<String>,
    pub tensor: Tensor,
    /// Rows with at least one observed visit.
    pub support: Vec<bool>,
}

impl ObservedTensor {
    pub fn kind(&self) -> ModelKind {
        self.tensor.kind
    }

    pub fn support_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.support
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.then_some(i))
    }
}

/// Log-space inputs shared by every prediction; reused across calibration
/// evaluations.
#[derive(Debug, Clone)]
pub(crate) struct Kernel {
    pub rows: usize,
    pub stores: usize,
    ln_attr: Vec<f64>,
    ln_dist: Vec<f64>,
    pub profiles: Vec<f64>,
    ln_profiles: Vec<f64>,
}

impl Kernel {
    pub fn new(s: &Scenario, d: &DistanceMatrix) -> Result<Self> {
        let (rows, stores) = (s.n_neighborhoods(), s.n_stores());
        if d.rows() != rows || d.cols() != stores {
            return Err(Error::ShapeMismatch(format!(
                "distance matrix is {}x{}, scenario is {rows}x{stores}",
                d.rows(),
                d.cols()
            )));
        }
        let ln_attr = s.stores.iter().map(|st| st.attractiveness.ln()).collect();
        let ln_dist = d.values().iter().map(|v| v.ln()).collect();
        let mut profiles = Vec::with_capacity(stores * HOURS_PER_WEEK);
        for p in temporal_profiles(s) {
            profiles.extend_from_slice(p.probs());
        }
        let ln_profiles = profiles.iter().map(|p: &f64| p.ln()).collect();
        Ok(Self {
            rows,
            stores,
            ln_attr,
            ln_dist,
            profiles,
            ln_profiles,
        })
    }

    pub fn profile(&self, j: usize) -> &[f64] {
        &self.profiles[j * HOURS_PER_WEEK..(j + 1) * HOURS_PER_WEEK]
    }

    /// `alpha ln S_j - beta ln D_ij` with the `0^0 = 1` convention.
    #[inline]
    fn log_weight(&self, i: usize, j: usize, p: ModelParams) -> f64 {
        let a = if p.alpha == 0.0 { 0.0 } else { p.alpha * self.ln_attr[j] };
        let b = if p.beta == 0.0 {
            0.0
        } else {
            p.beta * self.ln_dist[i * self.stores + j]
        };
        a - b
    }

    /// Writes the static Huff row `P_i.` into `out`. Returns false when every
    /// weight is zero.
    pub fn huff_row(&self, i: usize, p: ModelParams, out: &mut [f64]) -> bool {
        let mut max = f64::NEG_INFINITY;
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.log_weight(i, j, p);
            max = max.max(*o);
        }
        if max == f64::NEG_INFINITY {
            out.iter_mut().for_each(|o| *o = 0.0);
            return false;
        }
        let mut sum = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            sum += *o;
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
        true
    }

    /// Fills one row of an hourly tensor. `scratch` holds `stores` entries.
    /// Returns `None` when the spatial weights all vanish, otherwise the hours
    /// whose per-hour normalizer was zero.
    pub fn dynamic_row(
        &self,
        kind: ModelKind,
        i: usize,
        p: ModelParams,
        out: &mut [f64],
        scratch: &mut [f64],
    ) -> Option<Vec<usize>> {
        let h = HOURS_PER_WEEK;
        if !self.huff_row(i, p, scratch) {
            return None;
        }
        let mut zero_hours = Vec::new();
        match kind {
            ModelKind::Huff => out.copy_from_slice(scratch),
            ModelKind::THuff => {
                for j in 0..self.stores {
                    let pij = scratch[j];
                    for (o, pt) in out[j * h..(j + 1) * h].iter_mut().zip(self.profile(j)) {
                        *o = pij * pt;
                    }
                }
            }
            ModelKind::MHuff => {
                for j in 0..self.stores {
                    let v = scratch[j] / h as f64;
                    out[j * h..(j + 1) * h].iter_mut().for_each(|o| *o = v);
                }
            }
            ModelKind::AHuff => {
                for j in 0..self.stores {
                    scratch[j] = self.log_weight(i, j, p);
                }
                for t in 0..h {
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..self.stores {
                        let w = scratch[j] + self.ln_profiles[j * h + t];
                        out[j * h + t] = w;
                        max = max.max(w);
                    }
                    if max == f64::NEG_INFINITY {
                        for j in 0..self.stores {
                            out[j * h + t] = 0.0;
                        }
                        zero_hours.push(t);
                        continue;
                    }
                    let mut sum = 0.0;
                    for j in 0..self.stores {
                        let e = (out[j * h + t] - max).exp();
                        out[j * h + t] = e;
                        sum += e;
                    }
                    for j in 0..self.stores {
                        out[j * h + t] /= sum;
                    }
                }
            }
        }
        Some(zero_hours)
    }
}

fn check_params(p: ModelParams) -> Result<()> {
    if p.is_valid() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "model exponents must be finite and non-negative, got alpha={} beta={}",
            p.alpha, p.beta
        )))
    }
}

/// Evaluates any model kind at `p`.
pub fn predict(s: &Scenario, d: &DistanceMatrix, kind: ModelKind, p: ModelParams) -> Result<PredictionTensor> {
    check_params(p)?;
    let kernel = Kernel::new(s, d)?;
    let mut tensor = Tensor::zeros(kind, kernel.rows, kernel.stores);
    let width = kernel.stores * tensor.hours;
    let rows: Vec<(Vec<f64>, Option<Vec<usize>>)> = par::map_range(kernel.rows, |i| {
        let mut out = vec![0.0; width];
        let mut scratch = vec![0.0; kernel.stores];
        let r = kernel.dynamic_row(kind, i, p, &mut out, &mut scratch);
        (out, r)
    });
    let mut row_results = Vec::with_capacity(rows.len());
    for (i, (out, r)) in rows.into_iter().enumerate() {
        tensor.values[i * width..(i + 1) * width].copy_from_slice(&out);
        row_results.push(r);
    }
    for (i, r) in row_results.into_iter().enumerate() {
        match r {
            None => {
                return Err(Error::AllZeroWeights {
                    neighborhood: s.neighborhoods[i].id.clone(),
                })
            }
            Some(hours) => tensor.zero_slices.extend(hours.into_iter().map(|t| (i, t))),
        }
    }
    Ok(PredictionTensor {
        params: p,
        neighborhood_ids: s.neighborhood_ids(),
        store_ids: s.store_ids(),
        tensor,
    })
}

pub fn predict_huff(s: &Scenario, d: &DistanceMatrix, p: ModelParams) -> Result<PredictionTensor> {
    predict(s, d, ModelKind::Huff, p)
}

pub fn predict_thuff(s: &Scenario, d: &DistanceMatrix, p: ModelParams) -> Result<PredictionTensor> {
    predict(s, d, ModelKind::THuff, p)
}

pub fn predict_ahuff(s: &Scenario, d: &DistanceMatrix, p: ModelParams) -> Result<PredictionTensor> {
    predict(s, d, ModelKind::AHuff, p)
}

pub fn predict_mhuff(s: &Scenario, d: &DistanceMatrix, p: ModelParams) -> Result<PredictionTensor> {
    predict(s, d, ModelKind::MHuff, p)
}

/// Observed counterpart of a model kind, built from `V_ij` and the store
/// temporal profiles. Rows without visits are left at zero and excluded
/// from `support`.
pub fn observe(s: &Scenario, kind: ModelKind) -> Result<ObservedTensor> {
    let (rows, stores) = (s.n_neighborhoods(), s.n_stores());
    let visits = s.dense_visits();
    let profiles: Vec<TemporalProfile> = temporal_profiles(s);
    let mut tensor = Tensor::zeros(kind, rows, stores);
    let hours = tensor.hours;
    let mut support = vec![false; rows];

    for i in 0..rows {
        let v = &visits[i * stores..(i + 1) * stores];
        let total: f64 = v.iter().sum();
        if total <= 0.0 {
            continue;
        }
        support[i] = true;
        let out = &mut tensor.values[i * stores * hours..(i + 1) * stores * hours];
        match kind {
            ModelKind::Huff => {
                for (o, vij) in out.iter_mut().zip(v) {
                    *o = vij / total;
                }
            }
            // The even-spread baseline is scored against the same hourly
            // observations as the time-aware model.
            ModelKind::THuff | ModelKind::MHuff => {
                for j in 0..stores {
                    let share = v[j] / total;
                    for (o, pt) in out[j * hours..(j + 1) * hours].iter_mut().zip(profiles[j].probs()) {
                        *o = share * pt;
                    }
                }
            }
            ModelKind::AHuff => {
                for t in 0..hours {
                    let mut sum = 0.0;
                    for j in 0..stores {
                        sum += v[j] * profiles[j].probs()[t];
                    }
                    if sum <= 0.0 {
                        tensor.zero_slices.push((i, t));
                        continue;
                    }
                    for j in 0..stores {
                        out[j * hours + t] = v[j] * profiles[j].probs()[t] / sum;
                    }
                }
            }
        }
    }
    if !support.iter().any(|x| *x) {
        return Err(Error::NoObservations);
    }
    Ok(ObservedTensor {
        neighborhood_ids: s.neighborhood_ids(),
        store_ids: s.store_ids(),
        tensor,
        support,
    })
}

/// How neighborhoods are weighted when averaging probabilities into shares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Population,
    Visits,
}

impl FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "population" => Ok(Weighting::Population),
            "visits" => Ok(Weighting::Visits),
            other => Err(format!("unknown weighting '{other}' (expected population or visits)")),
        }
    }
}

pub fn neighborhood_weights(s: &Scenario, w: Weighting) -> Vec<f64> {
    match w {
        Weighting::Population => s.neighborhoods.iter().map(|n| n.population).collect(),
        Weighting::Visits => s
            .dense_visits()
            .chunks(s.n_stores().max(1))
            .map(|r| r.iter().sum())
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Winner {
    pub neighborhood: String,
    pub store: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketShare {
    pub store_ids: Vec<String>,
    pub hours: usize,
    /// Weight-averaged probability per `(store, hour)`, store-major.
    pub store_hour_share: Vec<f64>,
    /// Hour-summed weighted share per store.
    pub store_share: Vec<f64>,
    pub winners: Vec<Winner>,
}

/// Weighted market shares plus each neighborhood's most likely store.
pub fn market_share(pred: &PredictionTensor, weights: &[f64]) -> Result<MarketShare> {
    let t = &pred.tensor;
    if weights.len() != t.rows {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} neighborhoods",
            weights.len(),
            t.rows
        )));
    }
    let total_w: f64 = weights.iter().sum();
    let mut store_hour_share = vec![0.0; t.stores * t.hours];
    if total_w > 0.0 {
        for (i, w) in weights.iter().enumerate() {
            for (acc, v) in store_hour_share.iter_mut().zip(t.row(i)) {
                *acc += w * v;
            }
        }
        store_hour_share.iter_mut().for_each(|x| *x /= total_w);
    }
    let store_share = store_hour_share
        .chunks(t.hours)
        .map(|c| c.iter().sum())
        .collect();

    let marginal = t.hour_marginal();
    let winners = (0..t.rows)
        .map(|i| {
            let row = &marginal[i * t.stores..(i + 1) * t.stores];
            let best = (0..t.stores)
                .max_by(|&a, &b| {
                    row[a]
                        .partial_cmp(&row[b])
                        .unwrap_or(Ordering::Equal)
                        .then_with(|| pred.store_ids[b].cmp(&pred.store_ids[a]))
                })
                .expect("at least one store");
            Winner {
                neighborhood: pred.neighborhood_ids[i].clone(),
                store: pred.store_ids[best].clone(),
                probability: row[best],
            }
        })
        .collect();

    Ok(MarketShare {
        store_ids: pred.store_ids.clone(),
        hours: t.hours,
        store_hour_share,
        store_share,
        winners,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffEntry {
    pub neighborhood: String,
    pub store: String,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShareDifference {
    pub hour: Option<usize>,
    pub entries: Vec<DiffEntry>,
    pub min: f64,
    pub max: f64,
    pub mean_abs: f64,
}

/// `pred - obs` over the observed support, either at one hour or summed over
/// all hours (`hour = None`).
pub fn share_difference(pred: &PredictionTensor, obs: &ObservedTensor, hour: Option<usize>) -> Result<ShareDifference> {
    if pred.kind() != obs.kind() {
        return Err(Error::KindMismatch {
            left: pred.kind(),
            right: obs.kind(),
        });
    }
    let (p, o) = (&pred.tensor, &obs.tensor);
    if p.rows != o.rows || p.stores != o.stores {
        return Err(Error::ShapeMismatch(format!(
            "prediction is {}x{}, observation is {}x{}",
            p.rows, p.stores, o.rows, o.stores
        )));
    }
    let (pm, om) = match hour {
        None => (p.hour_marginal(), o.hour_marginal()),
        Some(t) if p.kind.is_dynamic() && t < p.hours => (p.hour_slice(t), o.hour_slice(t)),
        Some(t) => {
            return Err(Error::ShapeMismatch(format!(
                "hour {t} is not available for the {} model",
                p.kind
            )))
        }
    };
    let mut entries = Vec::new();
    for i in obs.support_rows() {
        for j in 0..p.stores {
            let k = i * p.stores + j;
            entries.push(DiffEntry {
                neighborhood: pred.neighborhood_ids[i].clone(),
                store: pred.store_ids[j].clone(),
                difference: pm[k] - om[k],
            });
        }
    }
    let (mut min, mut max, mut abs) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for e in &entries {
        min = min.min(e.difference);
        max = max.max(e.difference);
        abs += e.difference.abs();
    }
    let mean_abs = if entries.is_empty() { 0.0 } else { abs / entries.len() as f64 };
    if entries.is_empty() {
        min = 0.0;
        max = 0.0;
    }
    Ok(ShareDifference {
        hour,
        entries,
        min,
        max,
        mean_abs,
    })
}
