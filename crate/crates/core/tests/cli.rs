use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tradewinds::calibrate::{grid_evaluate, DEFAULT_GRID};
use tradewinds::cli::{CalibrationOutput, RunManifest};
use tradewinds::domain::{GeoPoint, ModelParams, Neighborhood, Scenario, Store, VisitMatrix, HOURS_PER_WEEK};
use tradewinds::geo::build_distance_matrix;
use tradewinds::ingest::{load_scenario, write_scenario, LoadOptions, ScenarioPaths};
use tradewinds::models::{predict_ahuff, ModelKind};
use tradewinds::synth::GroundTruth;

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tradewinds"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn cli")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = cli(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_owned).collect())
        .collect()
}

fn synth_data(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--stores", "4", "--neighborhoods", "80", "--seed", "7", "--out-dir", "data"];
    args.extend(extra);
    ok(dir, &args);
}

#[test]
fn synth_writes_dataset_and_truth() {
    let tmp = tempfile::tempdir().unwrap();
    synth_data(tmp.path(), &[]);
    let data = tmp.path().join("data");
    for f in ["stores.csv", "hourly.csv", "visits.csv", "neighborhoods.csv", "truth.json", "manifest.json"] {
        assert!(data.join(f).exists(), "{f}");
    }
    let truth: GroundTruth = serde_json::from_str(&fs::read_to_string(data.join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth.true_params, ModelParams::new(0.8, 1.2));
    let report = load_scenario(&ScenarioPaths::in_dir(&data), &LoadOptions::default()).unwrap();
    assert_eq!(report.scenario.n_stores(), 4);
    assert_eq!(report.scenario.n_neighborhoods(), 80);
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(data.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.command, "synth");
    assert_eq!(manifest.seed, Some(7));
}

#[test]
fn calibrate_recovers_truth() {
    let tmp = tempfile::tempdir().unwrap();
    synth_data(tmp.path(), &[]);
    ok(tmp.path(), &["calibrate", "--data-dir", "data", "--model", "thuff", "--seed", "7", "--out-dir", "cal"]);
    let res: CalibrationOutput =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("cal/result.json")).unwrap()).unwrap();
    let truth: GroundTruth =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("data/truth.json")).unwrap()).unwrap();
    assert!((res.alpha - truth.true_params.alpha).abs() < 0.05);
    assert!((res.beta - truth.true_params.beta).abs() < 0.05);
    assert!(res.objective > 0.999);
    let trace = read_csv(&tmp.path().join("cal/trace.csv"));
    assert_eq!(trace[0], ["0", "0", trace[0][2].as_str()]);

    let manifest: RunManifest =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("cal/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.inputs.len(), 4);
    assert!(manifest.inputs.values().all(|h| h.len() == 64));
    assert!(manifest.outputs.contains(&"result.json".to_owned()));
}

#[test]
fn grid_only_matches_library() {
    let tmp = tempfile::tempdir().unwrap();
    synth_data(tmp.path(), &["--noise", "poisson"]);
    ok(tmp.path(), &["calibrate", "--data-dir", "data", "--model", "huff", "--grid-only", "--out-dir", "g"]);
    assert!(!tmp.path().join("g/trace.csv").exists());
    let rows = read_csv(&tmp.path().join("g/grid.csv"));
    assert_eq!(rows.len(), 5);

    let s = load_scenario(&ScenarioPaths::in_dir(tmp.path().join("data")), &LoadOptions::default())
        .unwrap()
        .scenario;
    let d = build_distance_matrix(&s);
    let g = grid_evaluate(&s, &d, ModelKind::Huff, &DEFAULT_GRID, &DEFAULT_GRID).unwrap();
    let mut cells = 0;
    for (a, row) in rows.iter().enumerate() {
        assert_eq!(row[0].parse::<f64>().unwrap(), DEFAULT_GRID[a]);
        for b in 0..5 {
            assert_eq!(row[b + 1].parse::<f64>().unwrap(), g.get(a, b).value);
            cells += 1;
        }
    }
    assert_eq!(cells, 25);
}

#[test]
fn missing_input_exits_2_with_file_name() {
    let tmp = tempfile::tempdir().unwrap();
    synth_data(tmp.path(), &[]);
    fs::remove_file(tmp.path().join("data/visits.csv")).unwrap();
    let out = cli(tmp.path(), &["calibrate", "--data-dir", "data", "--out-dir", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("visits.csv"));
}

#[test]
fn empty_visits_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    synth_data(tmp.path(), &[]);
    fs::write(tmp.path().join("data/visits.csv"), "cbg_id,store_id,visits\n").unwrap();
    for cmd in ["calibrate", "decay"] {
        let out = cli(tmp.path(), &[cmd, "--data-dir", "data", "--out-dir", "x"]);
        assert_eq!(out.status.code(), Some(3), "{cmd}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    }
}

#[test]
fn predict_exports_and_params_file() {
    let tmp = tempfile::tempdir().unwrap();
    synth_data(tmp.path(), &[]);
    ok(tmp.path(), &["calibrate", "--data-dir", "data", "--model", "huff", "--restarts", "2", "--out-dir", "cal"]);
    ok(tmp.path(), &["predict", "--data-dir", "data", "--params", "cal/result.json", "--diff", "--out-dir", "p"]);
    let shares = read_csv(&tmp.path().join("p/shares.csv"));
    assert_eq!(shares.len(), 80 * 4);
    let winners = read_csv(&tmp.path().join("p/winners.csv"));
    assert_eq!(winners.len(), 80);
    let geo: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("p/shares.geojson")).unwrap()).unwrap();
    let features = geo["features"].as_array().unwrap();
    assert_eq!(features.len(), 80);
    assert!(features.iter().all(|f| f["properties"]["class"].as_u64().unwrap() < 7));
    let total: f64 = read_csv(&tmp.path().join("p/market_share.csv"))
        .iter()
        .map(|r| r[1].parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert!(tmp.path().join("p/diff.csv").exists());
}

#[test]
fn diff_of_exact_prediction_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    synth_data(tmp.path(), &["--profile", "bimodal"]);
    ok(tmp.path(), &[
        "predict", "--data-dir", "data", "--model", "thuff", "--alpha", "0.8", "--beta", "1.2", "--diff", "--out-dir", "p",
    ]);
    let diff = read_csv(&tmp.path().join("p/diff.csv"));
    assert_eq!(diff.len(), 80 * 4);
    assert!(diff.iter().all(|r| r[2].parse::<f64>().unwrap().abs() < 1e-12));
}

#[test]
fn ahuff_hour_slice_matches_library() {
    let tmp = tempfile::tempdir().unwrap();
    synth_data(tmp.path(), &[]);
    ok(tmp.path(), &[
        "predict", "--data-dir", "data", "--model", "ahuff", "--alpha", "0.5", "--beta", "1.5", "--hour", "17",
        "--out-dir", "p",
    ]);
    let s = load_scenario(&ScenarioPaths::in_dir(tmp.path().join("data")), &LoadOptions::default())
        .unwrap()
        .scenario;
    let d = build_distance_matrix(&s);
    let pred = predict_ahuff(&s, &d, ModelParams::new(0.5, 1.5)).unwrap();
    let rows = read_csv(&tmp.path().join("p/shares.csv"));
    assert_eq!(rows.len(), 80 * 4);
    for (k, r) in rows.iter().enumerate() {
        let (i, j) = (k / 4, k % 4);
        assert_eq!(r[0], s.neighborhoods[i].id);
        assert_eq!(r[1], s.stores[j].id);
        assert_eq!(r[3], "17");
        assert_eq!(r[2].parse::<f64>().unwrap(), pred.tensor.get(i, j, 17));
    }
}

#[test]
fn hour_on_static_model_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    synth_data(tmp.path(), &[]);
    let out = cli(tmp.path(), &["predict", "--data-dir", "data", "--alpha", "1", "--beta", "1", "--hour", "3"]);
    assert_eq!(out.status.code(), Some(4));
}

fn tiny_scenario(n_stores: usize) -> Scenario {
    let stores = (0..n_stores)
        .map(|j| Store::from_hourly(format!("s{j}"), "acme", GeoPoint::new(34.0, -118.0 + 0.05 * j as f64), vec![2.0 + j as f64; HOURS_PER_WEEK]))
        .collect();
    let nbs: Vec<Neighborhood> = (0..12)
        .map(|i| {
            let mut n = Neighborhood::new(
                format!("c{i:02}"),
                GeoPoint::new(34.0 + 0.01 * i as f64, -118.0 + 0.007 * ((i * 5) % 12) as f64),
                500.0 + 37.0 * ((i * 7) % 12) as f64,
            );
            n.median_age = Some(30.0 + ((i * 3) % 11) as f64);
            n.median_income = Some(40_000.0 + 1_500.0 * ((i * 5) % 13) as f64);
            n.race_counts = Some(
                [("race_a", 100.0 + 10.0 * i as f64), ("race_b", 50.0 + 3.0 * ((i * 4) % 9) as f64)]
                    .into_iter()
                    .map(|(k, v)| (k.to_owned(), v))
                    .collect(),
            );
            n.city = Some("springfield".into());
            n
        })
        .collect();
    Scenario::new(stores, nbs, VisitMatrix::new())
}

#[test]
fn single_store_winners_are_that_store() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = tiny_scenario(1);
    s.visits.add("c00", "s0", 10.0);
    write_scenario(&ScenarioPaths::in_dir(tmp.path()), &s).unwrap();
    ok(tmp.path(), &["predict", "--alpha", "1", "--beta", "1", "--out-dir", "p"]);
    let winners = read_csv(&tmp.path().join("p/winners.csv"));
    assert_eq!(winners.len(), 12);
    assert!(winners.iter().all(|w| w[1] == "s0" && w[2] == "1"));
}

#[test]
fn perfect_linear_response_has_unit_r_squared() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = tiny_scenario(2);
    let d = build_distance_matrix(&s);
    for (i, n) in s.neighborhoods.clone().iter().enumerate() {
        let race = n.race_counts.as_ref().unwrap();
        let total: f64 = race.values().sum();
        let entropy: f64 = -race.values().map(|c| (c / total) * (c / total).ln()).sum::<f64>();
        for (j, st) in s.stores.clone().iter().enumerate() {
            let y = 5.0 + 0.01 * st.attractiveness - 2.0 * d.get(i, j) + 0.03 * n.population
                + 0.0002 * n.median_income.unwrap()
                - 0.5 * n.median_age.unwrap()
                + 40.0 * entropy;
            s.visits.add(n.id.clone(), st.id.clone(), y);
        }
    }
    write_scenario(&ScenarioPaths::in_dir(tmp.path()), &s).unwrap();
    ok(tmp.path(), &["regress", "--out-dir", "r"]);
    ok(tmp.path(), &["regress", "--group-by", "city", "--out-dir", "g"]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("r/regression.json")).unwrap()).unwrap();
    assert!((report["r_squared"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(report["n_obs"].as_u64(), Some(24));

    let pooled = read_csv(&tmp.path().join("r/regression.csv"));
    let grouped = read_csv(&tmp.path().join("g/regression_by_group.csv"));
    assert_eq!(pooled.len(), 7);
    for (p, g) in pooled.iter().zip(&grouped) {
        assert_eq!(g[0], "springfield");
        assert_eq!(&g[1..], &p[..]);
    }
    let r2 = read_csv(&tmp.path().join("g/r2_by_group.csv"));
    assert_eq!(r2.len(), 1);
    assert_eq!(r2[0][1], "24");
}

#[test]
fn rank_deficient_design_exits_5() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = tiny_scenario(1);
    for n in &mut s.neighborhoods {
        n.median_age = Some(40.0);
    }
    for n in s.neighborhoods.clone() {
        s.visits.add(n.id, "s0", 3.0 + n.population);
    }
    write_scenario(&ScenarioPaths::in_dir(tmp.path()), &s).unwrap();
    let out = cli(tmp.path(), &["regress", "--out-dir", "r"]);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn row_cap_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    synth_data(tmp.path(), &[]);
    let out = Command::new(env!("CARGO_BIN_EXE_tradewinds"))
        .current_dir(tmp.path())
        .env("TRADEWINDS_MAX_ROWS", "30")
        .args(["decay", "--data-dir", "data", "--lenient", "--out-dir", "d"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("d/decay.json")).unwrap()).unwrap();
    let visits = read_csv(&tmp.path().join("data/visits.csv"));
    let first30: f64 = visits[..30]
        .iter()
        .filter(|r| r[0].as_str() < "cbg_00030")
        .map(|r| r[2].parse::<f64>().unwrap())
        .sum();
    assert!((summary["total_visits"].as_f64().unwrap() - first30).abs() < 1e-6);
}

#[test]
fn privacy_threshold_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = tiny_scenario(2);
    s.visits.add("c00", "s0", 3.0);
    s.visits.add("c01", "s0", 9.0);
    s.visits.add("c01", "s1", 12.0);
    write_scenario(&ScenarioPaths::in_dir(tmp.path()), &s).unwrap();
    let out = cli(tmp.path(), &["decay", "--min-visit-threshold", "--out-dir", "d"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("privacy threshold"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("d/decay.json")).unwrap()).unwrap();
    assert_eq!(summary["total_visits"].as_f64(), Some(21.0));
}
