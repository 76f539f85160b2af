use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::output::{sha256_file, OutDir, RunManifest};
use super::{
    CalibrateArgs, Cli, Command, DecayArgs, Failure, GroupArg, InputArgs, NoiseArg, PredictArgs, ProfileArg,
    RegressArgs, SynthArgs,
};
use crate::calibrate::{grid_with, pso_with, Evaluator, GridResult, PsoConfig};
use crate::domain::{ModelParams, Scenario};
use crate::error::Error;
use crate::geo::build_distance_matrix;
use crate::ingest::{load_scenario, ScenarioPaths};
use crate::models::{market_share, neighborhood_weights, observe, predict, ModelKind, Winner};
use crate::stats::{
    class_index, decay_analysis, geometric_intervals, mlr_fit, regression_design, significance_stars,
    RegressionReport,
};
use crate::synth::{generate, write_dataset, NoiseModel, ProfileShape, SynthSpec};

/// Summary written to `result.json` and read back by `predict --params`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutput {
    pub model: ModelKind,
    pub method: String,
    pub alpha: f64,
    pub beta: f64,
    pub objective: f64,
    pub degenerate: bool,
    pub evaluations: usize,
    pub restarts: Vec<RestartSummary>,
    pub config: Option<PsoConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Deserialize)]
struct ParamsFile {
    alpha: f64,
    beta: f64,
}

struct Run {
    out: OutDir,
    inputs: BTreeMap<String, String>,
    started: Instant,
}

impl Run {
    fn start(cli: &Cli) -> Result<Self, Failure> {
        Ok(Self {
            out: OutDir::create(&cli.out_dir)?,
            inputs: BTreeMap::new(),
            started: Instant::now(),
        })
    }

    fn hash_input(&mut self, path: &Path) -> Result<(), Failure> {
        let h = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), h);
        Ok(())
    }

    fn load(&mut self, input: &InputArgs) -> Result<Scenario, Failure> {
        let paths = input.paths();
        let report = load_scenario(&paths, &input.options())?;
        for p in paths.all() {
            self.hash_input(p)?;
        }
        for w in &report.warnings {
            eprintln!("warning: {w}");
        }
        for (file, r) in &report.files {
            for (reason, n) in &r.rows_dropped {
                eprintln!("{file}: dropped {n} of {} rows ({reason})", r.rows_read);
            }
        }
        Ok(report.scenario)
    }

    fn finish(mut self, command: &str, args: Vec<String>, config: serde_json::Value, seed: Option<u64>) -> Result<(), Failure> {
        let manifest = RunManifest {
            command: command.to_owned(),
            args,
            inputs: self.inputs,
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_owned(),
            outputs: self.out.written(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        self.out.json("manifest.json", &manifest)
    }
}

pub(super) fn dispatch(cli: &Cli, args: Vec<String>) -> Result<(), Failure> {
    match &cli.command {
        Command::Calibrate(a) => calibrate(cli, a, args),
        Command::Predict(a) => predict_cmd(cli, a, args),
        Command::Decay(a) => decay(cli, a, args),
        Command::Regress(a) => regress(cli, a, args),
        Command::Synth(a) => synth(cli, a, args),
    }
}

/// Shortest round-trip text, in exponent form for very small or large values.
fn num(v: f64) -> String {
    if v != 0.0 && v.is_finite() && !(1e-4..1e15).contains(&v.abs()) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

fn input_echo(input: &InputArgs) -> serde_json::Value {
    let p = input.paths();
    json!({
        "stores": p.stores.display().to_string(),
        "hourly": p.hourly.display().to_string(),
        "visits": p.visits.display().to_string(),
        "neighborhoods": p.neighborhoods.display().to_string(),
        "min_visit_threshold": input.min_visit_threshold,
        "lenient": input.lenient,
    })
}

fn grid_rows(g: &GridResult) -> Vec<Vec<String>> {
    g.alphas
        .iter()
        .enumerate()
        .map(|(a, alpha)| {
            std::iter::once(num(*alpha))
                .chain((0..g.betas.len()).map(|b| num(g.get(a, b).value)))
                .collect()
        })
        .collect()
}

fn calibrate(cli: &Cli, a: &CalibrateArgs, args: Vec<String>) -> Result<(), Failure> {
    let mut run = Run::start(cli)?;
    let kind = ModelKind::from(a.model);
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::new(1, format!("{}: {e}", path.display())))?;
            run.hash_input(path)?;
            PsoConfig::from_toml_str(&text)?
        }
        None => PsoConfig::default(),
    };
    if let Some(n) = a.particles {
        cfg.particles = n;
    }
    if let Some(n) = a.restarts {
        cfg.restarts = n;
    }
    if let Some(n) = a.iterations {
        cfg.iterations = n;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;

    let s = run.load(&a.input)?;
    let d = build_distance_matrix(&s);
    let eval = Evaluator::new(&s, &d, kind)?;

    let grid = if a.grid || a.grid_only {
        let g = grid_with(&eval, &a.grid_values, &a.grid_values)?;
        let corner = "alpha\\beta".to_owned();
        let header: Vec<String> = std::iter::once(corner).chain(g.betas.iter().map(|b| num(*b))).collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        run.out.csv("grid.csv", &header, grid_rows(&g))?;
        Some(g)
    } else {
        None
    };

    let output = match (a.grid_only, grid) {
        (true, Some(g)) => {
            let (p, r) = g.best().ok_or(Error::NonCalibratable)?;
            CalibrationOutput {
                model: kind,
                method: "grid".into(),
                alpha: p.alpha,
                beta: p.beta,
                objective: r,
                degenerate: g.scores.iter().all(|s| s.value == g.scores[0].value),
                evaluations: g.scores.len(),
                restarts: Vec::new(),
                config: None,
            }
        }
        _ => {
            let res = pso_with(&eval, &cfg)?;
            if res.degenerate {
                eprintln!("warning: objective is flat over the search box; the reported exponents are arbitrary");
            }
            let trace_rows: Vec<[String; 3]> = res
                .restarts
                .iter()
                .enumerate()
                .flat_map(|(r, o)| {
                    o.trace
                        .iter()
                        .enumerate()
                        .map(move |(it, v)| [r.to_string(), it.to_string(), num(*v)])
                })
                .collect();
            run.out.csv("trace.csv", &["restart", "iteration", "best_objective"], trace_rows)?;
            CalibrationOutput {
                model: kind,
                method: "pso".into(),
                alpha: res.best_params.alpha,
                beta: res.best_params.beta,
                objective: res.best_objective,
                degenerate: res.degenerate,
                evaluations: res.evaluations,
                restarts: res
                    .restarts
                    .iter()
                    .map(|o| RestartSummary {
                        seed: o.seed,
                        alpha: o.best_params.alpha,
                        beta: o.best_params.beta,
                        objective: o.best_objective,
                        iterations: o.trace.len() - 1,
                    })
                    .collect(),
                config: Some(cfg.clone()),
            }
        }
    };
    run.out.json("result.json", &output)?;
    let config = json!({
        "model": kind,
        "input": input_echo(&a.input),
        "pso": cfg,
        "grid": a.grid || a.grid_only,
        "grid_only": a.grid_only,
        "grid_values": a.grid_values,
    });
    run.finish("calibrate", args, config, Some(cfg.seed))
}

fn winners_at_hour(pred: &crate::models::PredictionTensor, t: usize) -> Vec<Winner> {
    let n_s = pred.tensor.stores();
    let slice = pred.tensor.hour_slice(t);
    (0..pred.tensor.rows())
        .map(|i| {
            let row = &slice[i * n_s..(i + 1) * n_s];
            let mut best = 0;
            for j in 1..n_s {
                if row[j] > row[best] {
                    best = j;
                }
            }
            Winner {
                neighborhood: pred.neighborhood_ids[i].clone(),
                store: pred.store_ids[best].clone(),
                probability: row[best],
            }
        })
        .collect()
}

fn predict_cmd(cli: &Cli, a: &PredictArgs, args: Vec<String>) -> Result<(), Failure> {
    let mut run = Run::start(cli)?;
    let kind = ModelKind::from(a.model);
    let params = match (&a.params, a.alpha, a.beta) {
        (Some(path), _, _) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::new(1, format!("{}: {e}", path.display())))?;
            run.hash_input(path)?;
            let p: ParamsFile =
                serde_json::from_str(&text).map_err(|e| Failure::new(1, format!("{}: {e}", path.display())))?;
            ModelParams::new(p.alpha, p.beta)
        }
        (None, Some(alpha), Some(beta)) => ModelParams::new(alpha, beta),
        _ => return Err(Failure::new(1, "exponents need --alpha and --beta or --params")),
    };
    if let Some(t) = a.hour {
        if !kind.is_dynamic() {
            return Err(Error::ShapeMismatch(format!("--hour needs a time-aware model, not {kind}")).into());
        }
        if t >= kind.hours() {
            return Err(Error::ShapeMismatch(format!("hour {t} is outside 0..{}", kind.hours() - 1)).into());
        }
    }

    let s = run.load(&a.input)?;
    let d = build_distance_matrix(&s);
    let pred = predict(&s, &d, kind, params)?;
    let t = &pred.tensor;
    let (n_s, hours) = (t.stores(), t.hours());

    let mut rows: Vec<Vec<String>> = Vec::new();
    for i in 0..t.rows() {
        for j in 0..n_s {
            match (kind.is_dynamic(), a.hour) {
                (false, _) => rows.push(vec![
                    pred.neighborhood_ids[i].clone(),
                    pred.store_ids[j].clone(),
                    num(t.get(i, j, 0)),
                ]),
                (true, Some(h)) => rows.push(vec![
                    pred.neighborhood_ids[i].clone(),
                    pred.store_ids[j].clone(),
                    num(t.get(i, j, h)),
                    h.to_string(),
                ]),
                (true, None) => {
                    for h in 0..hours {
                        rows.push(vec![
                            pred.neighborhood_ids[i].clone(),
                            pred.store_ids[j].clone(),
                            num(t.get(i, j, h)),
                            h.to_string(),
                        ]);
                    }
                }
            }
        }
    }
    let header: &[&str] = if kind.is_dynamic() {
        &["neighborhood", "store", "probability", "hour"]
    } else {
        &["neighborhood", "store", "probability"]
    };
    run.out.csv("shares.csv", header, rows)?;

    let weights = neighborhood_weights(&s, a.weights.into());
    let ms = market_share(&pred, &weights)?;
    let winners = match a.hour {
        Some(h) => winners_at_hour(&pred, h),
        None => ms.winners.clone(),
    };
    run.out.csv(
        "winners.csv",
        &["neighborhood", "store", "probability"],
        winners
            .iter()
            .map(|w| [w.neighborhood.clone(), w.store.clone(), num(w.probability)]),
    )?;
    let share_rows: Vec<[String; 2]> = ms
        .store_ids
        .iter()
        .enumerate()
        .map(|(j, id)| {
            let v = match a.hour {
                Some(h) => ms.store_hour_share[j * ms.hours + h],
                None => ms.store_share[j],
            };
            [id.clone(), num(v)]
        })
        .collect();
    run.out.csv("market_share.csv", &["store", "share"], share_rows)?;

    let values: Vec<f64> = winners.iter().map(|w| w.probability).collect();
    let breaks = match geometric_intervals(&values, a.classes) {
        Ok(b) => Some(b),
        Err(Error::DegenerateRange(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let features: Vec<serde_json::Value> = s
        .neighborhoods
        .iter()
        .zip(&winners)
        .map(|(n, w)| {
            let class = breaks.as_ref().map_or(0, |b| class_index(b, w.probability));
            json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [n.centroid.lon, n.centroid.lat]},
                "properties": {
                    "neighborhood": w.neighborhood,
                    "winner": w.store,
                    "probability": w.probability,
                    "class": class,
                },
            })
        })
        .collect();
    run.out.json(
        "shares.geojson",
        &json!({"type": "FeatureCollection", "class_breaks": breaks, "features": features}),
    )?;

    if a.diff {
        let obs = observe(&s, kind)?;
        let diff = crate::models::share_difference(&pred, &obs, a.hour)?;
        run.out.csv(
            "diff.csv",
            &["neighborhood", "store", "difference"],
            diff.entries
                .iter()
                .map(|e| [e.neighborhood.clone(), e.store.clone(), num(e.difference)]),
        )?;
    }

    let config = json!({
        "model": kind,
        "alpha": params.alpha,
        "beta": params.beta,
        "hour": a.hour,
        "diff": a.diff,
        "classes": a.classes,
        "weights": Into::<crate::models::Weighting>::into(a.weights),
        "input": input_echo(&a.input),
    });
    run.finish("predict", args, config, cli.seed)
}

fn decay(cli: &Cli, a: &DecayArgs, args: Vec<String>) -> Result<(), Failure> {
    let mut run = Run::start(cli)?;
    let s = run.load(&a.input)?;
    let d = build_distance_matrix(&s);
    let out = decay_analysis(&s, &d, a.bins, a.fit_min_km)?;
    run.out.json("decay.json", &out)?;
    run.out.csv(
        "pdf.csv",
        &["lower_km", "upper_km", "center_km", "density"],
        out.pdf_bins
            .iter()
            .map(|b| [num(b.lower_km), num(b.upper_km), num(b.center_km), num(b.density)]),
    )?;
    run.out.csv(
        "ecdf.csv",
        &["distance_km", "cumulative_share"],
        out.ecdf.iter().map(|(x, p)| [num(*x), num(*p)]),
    )?;
    run.out.csv(
        "loglog.csv",
        &["log_distance", "log_density", "in_fit"],
        out.pdf_bins.iter().filter(|b| b.density > 0.0).map(|b| {
            let used = b.center_km >= a.fit_min_km && out.loglog_slope.is_some();
            [num(b.center_km.ln()), num(b.density.ln()), used.to_string()]
        }),
    )?;
    let config = json!({"bins": a.bins, "fit_min_km": a.fit_min_km, "input": input_echo(&a.input)});
    run.finish("decay", args, config, cli.seed)
}

fn term_rows<'a>(group: Option<&'a str>, r: &'a RegressionReport) -> impl Iterator<Item = Vec<String>> + 'a {
    r.terms.iter().map(move |t| {
        group
            .map(str::to_owned)
            .into_iter()
            .chain([
                t.name.clone(),
                num(t.coefficient),
                num(t.std_error),
                num(t.t_stat),
                num(t.p_value),
                significance_stars(t.p_value).to_owned(),
            ])
            .collect()
    })
}

const TERM_HEADER: [&str; 6] = ["term", "coefficient", "std_error", "t_stat", "p_value", "significance"];

fn regress(cli: &Cli, a: &RegressArgs, args: Vec<String>) -> Result<(), Failure> {
    let mut run = Run::start(cli)?;
    let s = run.load(&a.input)?;
    let d = build_distance_matrix(&s);
    let design = regression_design(&s, &d, a.group_by == Some(GroupArg::Brand));
    let pooled = mlr_fit(&design.variables, &design.rows, &design.response)?;
    run.out.csv("regression.csv", &TERM_HEADER, term_rows(None, &pooled))?;
    run.out.json("regression.json", &pooled)?;

    if a.group_by.is_some() {
        let mut r2_rows = Vec::new();
        let mut term_table = Vec::new();
        for (g, sub) in design.by_group() {
            match mlr_fit(&sub.variables, &sub.rows, &sub.response) {
                Ok(r) => {
                    r2_rows.push([g.clone(), sub.len().to_string(), num(r.r_squared), String::new()]);
                    term_table.extend(term_rows(Some(&g), &r).collect::<Vec<_>>());
                }
                Err(e) => r2_rows.push([g.clone(), sub.len().to_string(), String::new(), e.to_string()]),
            }
        }
        run.out.csv("r2_by_group.csv", &["group", "n_obs", "r_squared", "error"], r2_rows)?;
        let header: Vec<&str> = std::iter::once("group").chain(TERM_HEADER).collect();
        run.out.csv("regression_by_group.csv", &header, term_table)?;
    }
    let group = a.group_by.map(|g| match g {
        GroupArg::City => "city",
        GroupArg::Brand => "brand",
    });
    let config = json!({"group_by": group, "input": input_echo(&a.input)});
    run.finish("regress", args, config, cli.seed)
}

fn synth(cli: &Cli, a: &SynthArgs, args: Vec<String>) -> Result<(), Failure> {
    let mut run = Run::start(cli)?;
    let spec = SynthSpec {
        n_stores: a.stores,
        n_neighborhoods: a.neighborhoods,
        true_params: ModelParams::new(a.alpha, a.beta),
        profile_shape: match a.profile {
            ProfileArg::Uniform => ProfileShape::Uniform,
            ProfileArg::Bimodal => ProfileShape::BimodalWeekday,
            ProfileArg::PointMass => ProfileShape::PointMass,
            ProfileArg::Dirichlet => ProfileShape::Dirichlet { kappa: a.kappa },
        },
        visits_per_neighborhood: a.visits_per_neighborhood,
        noise: match a.noise {
            NoiseArg::None => NoiseModel::None,
            NoiseArg::Poisson => NoiseModel::Poisson,
        },
        seed: cli.seed.unwrap_or(0),
        ..SynthSpec::default()
    };
    let (s, truth) = generate(&spec)?;
    write_dataset(run.out.path(), &s, &truth)?;
    let files = ScenarioPaths::in_dir(run.out.path());
    for p in files.all() {
        run.out.note(&p.file_name().expect("file name").to_string_lossy());
    }
    run.out.note("truth.json");
    let config = serde_json::to_value(&spec).map_err(|e| Failure::new(1, e.to_string()))?;
    run.finish("synth", args, config, Some(spec.seed))
}
