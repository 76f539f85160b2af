//! Calibration of the exponent pair `(alpha, beta)` by maximizing the Pearson
//! correlation between predicted and observed visit probabilities, either on
//! a fixed grid or with a global-best particle swarm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{ModelParams, Scenario, HOURS_PER_WEEK};
use crate::error::{Error, Result};
use crate::geo::DistanceMatrix;
use crate::models::{observe, predict, Kernel, ModelKind, ObservedTensor};
use crate::par;
use crate::stats::pearson;

/// Exponent values probed by the coarse calibration grid.
pub const DEFAULT_GRID: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 5.0];

/// Score returned for parameter pairs whose correlation is undefined.
pub const ZERO_VARIANCE_SENTINEL: f64 = -1.0;

/// Relative variance below which a flattened tensor counts as constant.
const RELATIVE_VARIANCE_FLOOR: f64 = 1e-12;

/// One objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    /// Pearson r, or [`ZERO_VARIANCE_SENTINEL`].
    pub value: f64,
    pub zero_variance: bool,
}

impl Score {
    fn degenerate() -> Self {
        Self {
            value: ZERO_VARIANCE_SENTINEL,
            zero_variance: true,
        }
    }
}

/// Pearson r between the flattened predicted and observed tensors over the
/// observed support, computed from fully materialized tensors.
pub fn objective(s: &Scenario, d: &DistanceMatrix, kind: ModelKind, p: ModelParams) -> Result<Score> {
    let obs = observe(s, kind)?;
    let pred = predict(s, d, kind, p)?;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for i in obs.support_rows() {
        x.extend_from_slice(pred.tensor.row(i));
        y.extend_from_slice(obs.tensor.row(i));
    }
    match pearson(&x, &y) {
        Ok(r) => Ok(Score {
            value: r,
            zero_variance: false,
        }),
        Err(Error::ZeroVariance) => Ok(Score::degenerate()),
        Err(e) => Err(e),
    }
}

/// Precomputed objective for repeated evaluation at different exponents.
///
/// The hourly kinds factor as `P_ij * f(P_jt)`, so their correlation sums
/// collapse onto per-store hourly moments and never need the full tensor.
/// Per-hour normalization does not factor and is evaluated row by row.
#[derive(Debug, Clone)]
pub struct Evaluator {
    kind: ModelKind,
    kernel: Kernel,
    support: Vec<usize>,
    /// Observed `V_ij / sum_j V_ij` on support rows, row-major.
    observed_share: Vec<f64>,
    /// Observed tensor rows for the per-hour normalized kind.
    observed_rows: Vec<f64>,
    /// `sum_t P_jt` per store.
    profile_sum: Vec<f64>,
    /// `sum_t P_jt^2` per store.
    profile_sq_sum: Vec<f64>,
}

impl Evaluator {
    pub fn new(s: &Scenario, d: &DistanceMatrix, kind: ModelKind) -> Result<Self> {
        let kernel = Kernel::new(s, d)?;
        let obs: ObservedTensor = observe(s, kind)?;
        let support: Vec<usize> = obs.support_rows().collect();
        let n_s = kernel.stores;
        let visits = s.dense_visits();
        let mut observed_share = Vec::with_capacity(support.len() * n_s);
        for &i in &support {
            let row = &visits[i * n_s..(i + 1) * n_s];
            let total: f64 = row.iter().sum();
            observed_share.extend(row.iter().map(|v| v / total));
        }
        let observed_rows = if kind == ModelKind::AHuff {
            support.iter().flat_map(|&i| obs.tensor.row(i).to_vec()).collect()
        } else {
            Vec::new()
        };
        let profile_sum = (0..n_s).map(|j| kernel.profile(j).iter().sum()).collect();
        let profile_sq_sum = (0..n_s)
            .map(|j| kernel.profile(j).iter().map(|p| p * p).sum())
            .collect();
        Ok(Self {
            kind,
            kernel,
            support,
            observed_share,
            observed_rows,
            profile_sum,
            profile_sq_sum,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// Number of neighborhoods in the observed support.
    pub fn support_len(&self) -> usize {
        self.support.len()
    }

    pub fn evaluate(&self, p: ModelParams) -> Score {
        if !p.is_valid() {
            return Score::degenerate();
        }
        match self.kind {
            ModelKind::AHuff => self.evaluate_materialized(p),
            _ => self.evaluate_moments(p),
        }
    }

    fn evaluate_moments(&self, p: ModelParams) -> Score {
        let n_s = self.kernel.stores;
        let h = HOURS_PER_WEEK as f64;
        let mut pij = vec![0.0; n_s];
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (k, &i) in self.support.iter().enumerate() {
            if !self.kernel.huff_row(i, p, &mut pij) {
                return Score::degenerate();
            }
            let obs = &self.observed_share[k * n_s..(k + 1) * n_s];
            for j in 0..n_s {
                let (x, y) = (pij[j], obs[j]);
                let (c, q) = (self.profile_sum[j], self.profile_sq_sum[j]);
                match self.kind {
                    ModelKind::Huff => {
                        sx += x;
                        sy += y;
                        sxx += x * x;
                        syy += y * y;
                        sxy += x * y;
                    }
                    ModelKind::THuff => {
                        sx += x * c;
                        sy += y * c;
                        sxx += x * x * q;
                        syy += y * y * q;
                        sxy += x * y * q;
                    }
                    ModelKind::MHuff => {
                        sx += x;
                        sy += y * c;
                        sxx += x * x / h;
                        syy += y * y * q;
                        sxy += x / h * y * c;
                    }
                    ModelKind::AHuff => unreachable!("per-hour normalization is materialized"),
                }
            }
        }
        let n = (self.support.len() * n_s * self.kind.hours()) as f64;
        let vx = sxx - sx * sx / n;
        let vy = syy - sy * sy / n;
        if !(vx > RELATIVE_VARIANCE_FLOOR * sxx) || !(vy > RELATIVE_VARIANCE_FLOOR * syy) {
            return Score::degenerate();
        }
        Score {
            value: ((sxy - sx * sy / n) / (vx.sqrt() * vy.sqrt())).clamp(-1.0, 1.0),
            zero_variance: false,
        }
    }

    fn evaluate_materialized(&self, p: ModelParams) -> Score {
        let n_s = self.kernel.stores;
        let width = n_s * self.kind.hours();
        let mut x = vec![0.0; self.support.len() * width];
        let mut scratch = vec![0.0; n_s];
        for (k, &i) in self.support.iter().enumerate() {
            let out = &mut x[k * width..(k + 1) * width];
            if self.kernel.dynamic_row(self.kind, i, p, out, &mut scratch).is_none() {
                return Score::degenerate();
            }
        }
        match pearson(&x, &self.observed_rows) {
            Ok(r) => Score {
                value: r,
                zero_variance: false,
            },
            Err(_) => Score::degenerate(),
        }
    }
}

/// Objective values over a rectangular `(alpha, beta)` grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    pub kind: ModelKind,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// Row-major: `scores[a * betas.len() + b]`.
    pub scores: Vec<Score>,
}

impl GridResult {
    pub fn get(&self, a: usize, b: usize) -> Score {
        self.scores[a * self.betas.len() + b]
    }

    /// Best cell as `(params, score)`; ties keep the first cell in row-major
    /// order.
    pub fn best(&self) -> Option<(ModelParams, f64)> {
        self.best_within(&[f64::NEG_INFINITY; 2], &[f64::INFINITY; 2])
    }

    /// Best cell whose exponents lie inside the given box.
    pub fn best_within(&self, low: &[f64; 2], high: &[f64; 2]) -> Option<(ModelParams, f64)> {
        let mut best: Option<(ModelParams, f64)> = None;
        for (a, &alpha) in self.alphas.iter().enumerate() {
            for (b, &beta) in self.betas.iter().enumerate() {
                if alpha < low[0] || alpha > high[0] || beta < low[1] || beta > high[1] {
                    continue;
                }
                let v = self.get(a, b).value;
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((ModelParams::new(alpha, beta), v));
                }
            }
        }
        best
    }
}

pub fn grid_evaluate(
    s: &Scenario,
    d: &DistanceMatrix,
    kind: ModelKind,
    alphas: &[f64],
    betas: &[f64],
) -> Result<GridResult> {
    let eval = Evaluator::new(s, d, kind)?;
    grid_with(&eval, alphas, betas)
}

pub fn grid_with(eval: &Evaluator, alphas: &[f64], betas: &[f64]) -> Result<GridResult> {
    if alphas.is_empty() || betas.is_empty() {
        return Err(Error::InvalidConfig("grid axes must be non-empty".into()));
    }
    let nb = betas.len();
    let scores = par::map_range(alphas.len() * nb, |k| {
        eval.evaluate(ModelParams::new(alphas[k / nb], betas[k % nb]))
    });
    Ok(GridResult {
        kind: eval.kind(),
        alphas: alphas.to_vec(),
        betas: betas.to_vec(),
        scores,
    })
}

/// Swarm settings. Defaults are the constriction-equivalent coefficients with
/// 10 particles, 10 independent restarts and exponents bounded to `[0, 2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoConfig {
    pub particles: usize,
    pub restarts: usize,
    pub iterations: usize,
    pub bounds_low: [f64; 2],
    pub bounds_high: [f64; 2],
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub seed: u64,
    /// Iterations without `stagnation_tol` improvement before a restart stops.
    pub stagnation_window: usize,
    pub stagnation_tol: f64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            particles: 10,
            restarts: 10,
            iterations: 100,
            bounds_low: [0.0, 0.0],
            bounds_high: [2.0, 2.0],
            inertia: 0.7298,
            cognitive: 1.49618,
            social: 1.49618,
            seed: 0,
            stagnation_window: 20,
            stagnation_tol: 1e-7,
        }
    }
}

impl PsoConfig {
    /// Parses flat `key = value` lines over the defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PsoConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 || self.restarts == 0 || self.iterations == 0 {
            return Err(Error::InvalidConfig(
                "particles, restarts and iterations must all be at least 1".into(),
            ));
        }
        for dim in 0..2 {
            let (lo, hi) = (self.bounds_low[dim], self.bounds_high[dim]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidConfig(format!("bounds for dimension {dim} must satisfy low < high")));
            }
            if lo < 0.0 {
                return Err(Error::InvalidConfig(format!("exponent bounds must be non-negative, got {lo}")));
            }
        }
        if ![self.inertia, self.cognitive, self.social, self.stagnation_tol]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidConfig("swarm coefficients must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartOutcome {
    pub seed: u64,
    pub best_params: ModelParams,
    pub best_objective: f64,
    /// Global-best objective after initialization (index 0) and after every
    /// completed iteration.
    pub trace: Vec<f64>,
    pub evaluations: usize,
    /// Lowest and highest score seen in this restart.
    pub score_range: (f64, f64),
    initial_all_zero_variance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub kind: ModelKind,
    pub best_params: ModelParams,
    pub best_objective: f64,
    pub restarts: Vec<RestartOutcome>,
    pub evaluations: usize,
    /// Every evaluated score was identical: the objective does not depend on
    /// the exponents and the returned point is arbitrary.
    pub degenerate: bool,
}

impl CalibrationResult {
    pub fn traces(&self) -> impl Iterator<Item = &[f64]> {
        self.restarts.iter().map(|r| r.trace.as_slice())
    }
}

/// Unweighted mean of the distance exponents from per-brand fits.
pub fn mean_beta(fits: &[ModelParams]) -> Option<f64> {
    if fits.is_empty() {
        return None;
    }
    Some(fits.iter().map(|p| p.beta).sum::<f64>() / fits.len() as f64)
}

pub fn pso_calibrate(s: &Scenario, d: &DistanceMatrix, kind: ModelKind, cfg: &PsoConfig) -> Result<CalibrationResult> {
    let eval = Evaluator::new(s, d, kind)?;
    pso_with(&eval, cfg)
}

/// Runs every restart (concurrently when enabled) and keeps the best one;
/// ties go to the lower restart index.
pub fn pso_with(eval: &Evaluator, cfg: &PsoConfig) -> Result<CalibrationResult> {
    cfg.validate()?;
    let outcomes = par::map_range(cfg.restarts, |r| run_restart(eval, cfg, cfg.seed.wrapping_add(r as u64)));
    if outcomes.iter().all(|o| o.initial_all_zero_variance) {
        return Err(Error::NonCalibratable);
    }
    let mut best = 0;
    for (k, o) in outcomes.iter().enumerate() {
        if o.best_objective > outcomes[best].best_objective {
            best = k;
        }
    }
    let lo = outcomes.iter().map(|o| o.score_range.0).fold(f64::INFINITY, f64::min);
    let hi = outcomes.iter().map(|o| o.score_range.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(CalibrationResult {
        kind: eval.kind(),
        best_params: outcomes[best].best_params,
        best_objective: outcomes[best].best_objective,
        evaluations: outcomes.iter().map(|o| o.evaluations).sum(),
        degenerate: hi - lo < 1e-12,
        restarts: outcomes,
    })
}

fn run_restart(eval: &Evaluator, cfg: &PsoConfig, seed: u64) -> RestartOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.particles;
    let (low, high) = (cfg.bounds_low, cfg.bounds_high);

    let mut pos: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            let mut x = [0.0; 2];
            for d in 0..2 {
                x[d] = low[d] + (high[d] - low[d]) * rng.random::<f64>();
            }
            x
        })
        .collect();
    let mut vel = vec![[0.0f64; 2]; n];

    let score_all = |pos: &[[f64; 2]]| -> Vec<Score> {
        par::map_range(pos.len(), |k| eval.evaluate(ModelParams::new(pos[k][0], pos[k][1])))
    };

    let scores = score_all(&pos);
    let mut evaluations = n;
    let initial_all_zero_variance = scores.iter().all(|s| s.zero_variance);
    let mut range = (f64::INFINITY, f64::NEG_INFINITY);
    let track = |scores: &[Score], range: &mut (f64, f64)| {
        for s in scores {
            range.0 = range.0.min(s.value);
            range.1 = range.1.max(s.value);
        }
    };
    track(&scores, &mut range);

    let mut pbest = pos.clone();
    let mut pbest_score: Vec<f64> = scores.iter().map(|s| s.value).collect();
    let mut g = argmax(&pbest_score);
    let mut trace = vec![pbest_score[g]];

    for it in 1..=cfg.iterations {
        let gbest = pbest[g];
        for k in 0..n {
            for d in 0..2 {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let v = cfg.inertia * vel[k][d]
                    + cfg.cognitive * r1 * (pbest[k][d] - pos[k][d])
                    + cfg.social * r2 * (gbest[d] - pos[k][d]);
                let mut x = pos[k][d] + v;
                let mut v = v;
                if x < low[d] {
                    x = low[d];
                    v = 0.0;
                } else if x > high[d] {
                    x = high[d];
                    v = 0.0;
                }
                pos[k][d] = x;
                vel[k][d] = v;
            }
        }
        let scores = score_all(&pos);
        evaluations += n;
        track(&scores, &mut range);
        for k in 0..n {
            if scores[k].value > pbest_score[k] {
                pbest_score[k] = scores[k].value;
                pbest[k] = pos[k];
            }
        }
        g = argmax(&pbest_score);
        trace.push(pbest_score[g]);

        let w = cfg.stagnation_window;
        if w > 0 && it >= w && trace[it] - trace[it - w] < cfg.stagnation_tol {
            break;
        }
    }

    RestartOutcome {
        seed,
        best_params: ModelParams::new(pbest[g][0], pbest[g][1]),
        best_objective: pbest_score[g],
        trace,
        evaluations,
        score_range: range,
        initial_all_zero_variance,
    }
}

/// Index of the largest value; the first one wins ties.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{GeoPoint, Neighborhood, Store, VisitMatrix};
    use crate::geo::build_distance_matrix;
    use crate::synth::{generate, NoiseModel, ProfileShape, SynthSpec};

    #[test]
    fn mean_beta_is_unweighted() {
        assert_eq!(mean_beta(&[]), None);
        let fits = [ModelParams::new(0.1, 1.0), ModelParams::new(1.9, 2.0)];
        assert_eq!(mean_beta(&fits), Some(1.5));
    }

    fn synth(kappa_shape: ProfileShape, seed: u64) -> (Scenario, DistanceMatrix) {
        let spec = SynthSpec {
            n_stores: 4,
            n_neighborhoods: 40,
            true_params: ModelParams::new(0.8, 1.2),
            profile_shape: kappa_shape,
            noise: NoiseModel::None,
            seed,
            ..SynthSpec::default()
        };
        let (s, _) = generate(&spec).unwrap();
        let d = build_distance_matrix(&s);
        (s, d)
    }

    #[test]
    fn evaluator_matches_materialized_objective() {
        let (mut s, d) = synth(ProfileShape::Dirichlet { kappa: 0.5 }, 3);
        // perturb observations so r < 1
        let extra: Vec<(String, String)> = s
            .neighborhoods
            .iter()
            .step_by(3)
            .map(|n| (n.id.clone(), s.stores[1].id.clone()))
            .collect();
        for (n, st) in extra {
            s.visits.add(n, st, 7.0);
        }
        for kind in ModelKind::ALL {
            let eval = Evaluator::new(&s, &d, kind).unwrap();
            for p in [(0.0, 0.0), (0.3, 1.7), (0.8, 1.2), (2.0, 0.1), (5.0, 5.0)] {
                let p = ModelParams::new(p.0, p.1);
                let fast = eval.evaluate(p);
                let slow = objective(&s, &d, kind, p).unwrap();
                assert_eq!(fast.zero_variance, slow.zero_variance, "{kind} {p:?}");
                assert!((fast.value - slow.value).abs() < 1e-10, "{kind} {p:?}: {} vs {}", fast.value, slow.value);
            }
        }
    }

    #[test]
    fn self_consistent_objective_is_one() {
        let (s, d) = synth(ProfileShape::Dirichlet { kappa: 0.5 }, 5);
        for kind in [ModelKind::Huff, ModelKind::THuff] {
            let r = objective(&s, &d, kind, ModelParams::new(0.8, 1.2)).unwrap();
            assert!((r.value - 1.0).abs() < 1e-9, "{kind}: {}", r.value);
        }
    }

    /// Two neighborhoods, two stores; r checked against a hand Pearson over
    /// the four flattened entries.
    #[test]
    fn hand_pearson_on_two_by_two() {
        let stores = vec![
            Store::from_hourly("a", "x", GeoPoint::new(0.0, 0.0), vec![1.0; 168]),
            Store::from_hourly("b", "x", GeoPoint::new(0.0, 0.05), vec![3.0; 168]),
        ];
        let nbs = vec![
            Neighborhood::new("n0", GeoPoint::new(0.01, 0.0), 1.0),
            Neighborhood::new("n1", GeoPoint::new(0.0, 0.04), 1.0),
        ];
        let mut v = VisitMatrix::new();
        v.add("n0", "a", 8.0);
        v.add("n0", "b", 2.0);
        v.add("n1", "a", 1.0);
        v.add("n1", "b", 4.0);
        let s = Scenario::new(stores, nbs, v);
        let d = build_distance_matrix(&s);
        let p = ModelParams::new(1.0, 1.0);

        let (sa, sb) = (168.0, 504.0);
        let mut x = Vec::new();
        for i in 0..2 {
            let (wa, wb) = (sa / d.get(i, 0), sb / d.get(i, 1));
            x.push(wa / (wa + wb));
            x.push(wb / (wa + wb));
        }
        let y = [0.8, 0.2, 0.2, 0.8];
        let mx = x.iter().sum::<f64>() / 4.0;
        let my = y.iter().sum::<f64>() / 4.0;
        let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        let hand = cov / (vx * vy).sqrt();

        let r = objective(&s, &d, ModelKind::Huff, p).unwrap();
        assert!((r.value - hand).abs() < 1e-12);
        let fast = Evaluator::new(&s, &d, ModelKind::Huff).unwrap().evaluate(p);
        assert!((fast.value - hand).abs() < 1e-12);
    }

    #[test]
    fn single_store_huff_is_not_calibratable() {
        let stores = vec![Store::from_hourly("a", "x", GeoPoint::new(0.0, 0.0), vec![1.0; 168])];
        let nbs = vec![
            Neighborhood::new("n0", GeoPoint::new(0.01, 0.0), 1.0),
            Neighborhood::new("n1", GeoPoint::new(0.0, 0.04), 1.0),
        ];
        let mut v = VisitMatrix::new();
        v.add("n0", "a", 3.0);
        v.add("n1", "a", 4.0);
        let s = Scenario::new(stores, nbs, v);
        let d = build_distance_matrix(&s);
        let r = objective(&s, &d, ModelKind::Huff, ModelParams::new(1.0, 1.0)).unwrap();
        assert!(r.zero_variance);
        assert_eq!(r.value, ZERO_VARIANCE_SENTINEL);
        let cfg = PsoConfig {
            restarts: 2,
            iterations: 5,
            ..PsoConfig::default()
        };
        assert_eq!(
            pso_calibrate(&s, &d, ModelKind::Huff, &cfg).unwrap_err(),
            Error::NonCalibratable
        );
    }

    #[test]
    fn flat_landscape_is_flagged_degenerate() {
        // One neighborhood equidistant from two identical stores.
        let profile: Vec<f64> = (0..168).map(|t| 1.0 + (t % 24) as f64).collect();
        let stores = vec![
            Store::from_hourly("a", "x", GeoPoint::new(0.0, -0.02), profile.clone()),
            Store::from_hourly("b", "x", GeoPoint::new(0.0, 0.02), profile),
        ];
        let nbs = vec![Neighborhood::new("n0", GeoPoint::new(0.0, 0.0), 1.0)];
        let mut v = VisitMatrix::new();
        v.add("n0", "a", 5.0);
        v.add("n0", "b", 5.0);
        let s = Scenario::new(stores, nbs, v);
        let d = build_distance_matrix(&s);
        let cfg = PsoConfig {
            restarts: 2,
            iterations: 10,
            ..PsoConfig::default()
        };
        let res = pso_calibrate(&s, &d, ModelKind::THuff, &cfg).unwrap();
        assert!(res.degenerate);
        assert!(res.best_params.alpha >= 0.0 && res.best_params.alpha <= 2.0);
    }

    #[test]
    fn grid_shape_and_one_by_one() {
        let (s, d) = synth(ProfileShape::Uniform, 2);
        let g = grid_evaluate(&s, &d, ModelKind::Huff, &DEFAULT_GRID, &DEFAULT_GRID).unwrap();
        assert_eq!(g.scores.len(), 25);
        let one = grid_evaluate(&s, &d, ModelKind::Huff, &[1.0], &[1.0]).unwrap();
        let direct = objective(&s, &d, ModelKind::Huff, ModelParams::new(1.0, 1.0)).unwrap();
        assert!((one.scores[0].value - direct.value).abs() < 1e-10);
        assert!(grid_evaluate(&s, &d, ModelKind::Huff, &[], &[1.0]).is_err());
    }

    #[test]
    fn grid_peaks_at_generating_point() {
        let (s, d) = synth(ProfileShape::Dirichlet { kappa: 0.5 }, 8);
        let axis = [0.4, 0.8, 1.2, 1.6];
        let g = grid_evaluate(&s, &d, ModelKind::THuff, &axis, &axis).unwrap();
        let (p, _) = g.best().unwrap();
        assert_eq!((p.alpha, p.beta), (0.8, 1.2));
    }

    #[test]
    fn pso_traces_are_monotone_and_deterministic() {
        let (s, d) = synth(ProfileShape::Dirichlet { kappa: 0.5 }, 4);
        let cfg = PsoConfig {
            restarts: 3,
            iterations: 40,
            seed: 11,
            ..PsoConfig::default()
        };
        let a = pso_calibrate(&s, &d, ModelKind::THuff, &cfg).unwrap();
        let b = pso_calibrate(&s, &d, ModelKind::THuff, &cfg).unwrap();
        assert_eq!(a, b);
        for t in a.traces() {
            assert!(t.windows(2).all(|w| w[1] >= w[0]));
        }
        let max_trace = a.traces().flat_map(|t| t.iter().copied()).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(a.best_objective, max_trace);
        assert_eq!(a.evaluations, a.restarts.iter().map(|r| r.evaluations).sum::<usize>());
        assert!((a.best_params.alpha - 0.8).abs() < 0.05);
        assert!((a.best_params.beta - 1.2).abs() < 0.05);
    }

    #[test]
    fn config_parsing_and_validation() {
        let cfg = PsoConfig::from_toml_str("particles = 20\nseed = 7\nbounds_high = [3.0, 2.5]\n").unwrap();
        assert_eq!(cfg.particles, 20);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.restarts, 10);
        assert_eq!(cfg.bounds_high, [3.0, 2.5]);
        assert!(PsoConfig::from_toml_str("particles = 0").is_err());
        assert!(PsoConfig::from_toml_str("bounds_low = [2.0, 0.0]").is_err());
        assert!(PsoConfig::from_toml_str("warp = 9").is_err());
    }
}
