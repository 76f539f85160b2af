//! Loading and writing the four CSV inputs of a scenario.
//!
//! ```text
//! stores.csv         store_id, brand, lat, lon[, attractiveness]
//! hourly.csv         store_id, hour (0-167), visits
//! visits.csv         cbg_id, store_id, visits
//! neighborhoods.csv  cbg_id, lat, lon, population[, median_age, median_income, city, race_*...]
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::domain::{validate_scenario, GeoPoint, Neighborhood, Scenario, Store, VisitMatrix, HOURS_PER_WEEK};

/// Row cap applied to every input file when set (smoke tests).
pub const MAX_ROWS_ENV: &str = "TRADEWINDS_MAX_ROWS";

/// Minimum pairwise visit count kept when the privacy filter is on.
pub const DEFAULT_MIN_VISIT_THRESHOLD: f64 = 5.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{file}: schema error: {message}")]
    Schema { file: String, message: String },
    #[error("{file}:{line}: unknown id: {message}")]
    Join { file: String, line: u64, message: String },
    #[error("{file}:{line}: parse error: {message}")]
    Parse { file: String, line: u64, message: String },
    #[error("loaded scenario is invalid: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioPaths {
    pub stores: PathBuf,
    pub hourly: PathBuf,
    pub visits: PathBuf,
    pub neighborhoods: PathBuf,
}

impl ScenarioPaths {
    /// The conventional file names inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            stores: dir.join("stores.csv"),
            hourly: dir.join("hourly.csv"),
            visits: dir.join("visits.csv"),
            neighborhoods: dir.join("neighborhoods.csv"),
        }
    }

    pub fn all(&self) -> [&Path; 4] {
        [&self.stores, &self.hourly, &self.visits, &self.neighborhoods]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadOptions {
    /// Drop visit rows below this count (source-data privacy censoring).
    pub min_visit_threshold: Option<f64>,
    /// Drop rows with unknown ids or malformed values instead of failing.
    pub lenient: bool,
    pub max_rows: Option<usize>,
}

impl LoadOptions {
    /// Default options with the row cap taken from the environment.
    pub fn from_env() -> Self {
        Self {
            max_rows: std::env::var(MAX_ROWS_ENV).ok().and_then(|v| v.trim().parse().ok()),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    PrivacyThreshold,
    UnresolvedId,
    Malformed,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropReason::PrivacyThreshold => "privacy threshold",
            DropReason::UnresolvedId => "unresolved id",
            DropReason::Malformed => "malformed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct FileReport {
    pub rows_read: usize,
    pub rows_dropped: BTreeMap<DropReason, usize>,
}

impl FileReport {
    fn drop(&mut self, reason: DropReason) {
        *self.rows_dropped.entry(reason).or_default() += 1;
    }

    pub fn total_dropped(&self) -> usize {
        self.rows_dropped.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    /// Per-file counters keyed by file role (`stores`, `hourly`, ...).
    pub files: BTreeMap<String, FileReport>,
    pub warnings: Vec<String>,
    pub scenario: Scenario,
}

struct Table {
    file: String,
    columns: HashMap<String, usize>,
    headers: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(
        path: &Path,
        required: &[&str],
        optional: &[&str],
        prefix: Option<&str>,
        max_rows: Option<usize>,
    ) -> Result<Self, IngestError> {
        let file = path.display().to_string();
        let f = File::open(path).map_err(|source| IngestError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(f);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| IngestError::Schema {
                file: file.clone(),
                message: e.to_string(),
            })?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut columns = HashMap::new();
        for (k, h) in headers.iter().enumerate() {
            let known = required.contains(&h.as_str())
                || optional.contains(&h.as_str())
                || prefix.is_some_and(|p| h.starts_with(p) && h.len() > p.len());
            if !known {
                return Err(IngestError::Schema {
                    file,
                    message: format!("unexpected column '{h}'"),
                });
            }
            if columns.insert(h.clone(), k).is_some() {
                return Err(IngestError::Schema {
                    file,
                    message: format!("duplicate column '{h}'"),
                });
            }
        }
        if let Some(missing) = required.iter().find(|c| !columns.contains_key(**c)) {
            return Err(IngestError::Schema {
                file,
                message: format!("missing required column '{missing}'"),
            });
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            if max_rows.is_some_and(|m| rows.len() >= m) {
                break;
            }
            let rec = rec.map_err(|e| IngestError::Parse {
                file: file.clone(),
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Self {
            file,
            columns,
            headers,
            rows,
        })
    }

    fn cell<'r>(&self, rec: &'r csv::StringRecord, col: &str) -> Option<&'r str> {
        self.columns
            .get(col)
            .and_then(|&k| rec.get(k))
            .filter(|v| !v.is_empty())
    }

    fn parse_err(&self, line: u64, message: String) -> IngestError {
        IngestError::Parse {
            file: self.file.clone(),
            line,
            message,
        }
    }

    fn text(&self, line: u64, rec: &csv::StringRecord, col: &str) -> Result<String, IngestError> {
        self.cell(rec, col)
            .map(str::to_owned)
            .ok_or_else(|| self.parse_err(line, format!("empty '{col}'")))
    }

    fn number(&self, line: u64, rec: &csv::StringRecord, col: &str) -> Result<f64, IngestError> {
        let raw = self
            .cell(rec, col)
            .ok_or_else(|| self.parse_err(line, format!("empty '{col}'")))?;
        parse_non_negative(raw).map_err(|m| self.parse_err(line, format!("'{col}': {m}")))
    }

    fn optional_number(&self, line: u64, rec: &csv::StringRecord, col: &str) -> Result<Option<f64>, IngestError> {
        match self.cell(rec, col) {
            None => Ok(None),
            Some(raw) => parse_non_negative(raw)
                .map(Some)
                .map_err(|m| self.parse_err(line, format!("'{col}': {m}"))),
        }
    }

    fn coordinate(&self, line: u64, rec: &csv::StringRecord, col: &str, limit: f64) -> Result<f64, IngestError> {
        let raw = self
            .cell(rec, col)
            .ok_or_else(|| self.parse_err(line, format!("empty '{col}'")))?;
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() && v.abs() <= limit => Ok(v),
            _ => Err(self.parse_err(line, format!("'{col}' value '{raw}' is not a coordinate"))),
        }
    }
}

fn parse_non_negative(raw: &str) -> Result<f64, String> {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        Ok(v) => Err(format!("{v} is not a non-negative real")),
        Err(_) => Err(format!("'{raw}' is not a number")),
    }
}

/// Reads, joins and validates the four input files. Stores and neighborhoods
/// come back sorted by id, so the result does not depend on row order.
pub fn load_scenario(paths: &ScenarioPaths, opts: &LoadOptions) -> Result<IngestReport, IngestError> {
    let mut files: BTreeMap<String, FileReport> = BTreeMap::new();
    let mut warnings = Vec::new();

    // Malformed rows either abort or are counted, depending on leniency.
    macro_rules! row_or_drop {
        ($report:expr, $e:expr) => {
            match $e {
                Ok(v) => v,
                Err(err) if opts.lenient => {
                    let _ = err;
                    $report.drop(DropReason::Malformed);
                    continue;
                }
                Err(err) => return Err(err),
            }
        };
    }

    // stores
    let t = Table::read(&paths.stores, &["store_id", "brand", "lat", "lon"], &["attractiveness"], None, opts.max_rows)?;
    let mut rep = FileReport {
        rows_read: t.rows.len(),
        ..Default::default()
    };
    let mut stores: BTreeMap<String, (Store, Option<f64>)> = BTreeMap::new();
    for (line, rec) in &t.rows {
        let line = *line;
        let parsed = (|| {
            Ok::<_, IngestError>((
                t.text(line, rec, "store_id")?,
                t.text(line, rec, "brand")?,
                GeoPoint::new(t.coordinate(line, rec, "lat", 90.0)?, t.coordinate(line, rec, "lon", 180.0)?),
                t.optional_number(line, rec, "attractiveness")?,
            ))
        })();
        let (id, brand, location, attr) = row_or_drop!(rep, parsed);
        if stores.contains_key(&id) {
            return Err(IngestError::Schema {
                file: t.file.clone(),
                message: format!("duplicate store id '{id}'"),
            });
        }
        let store = Store {
            id: id.clone(),
            brand,
            location,
            attractiveness: 0.0,
            hourly_visits: vec![0.0; HOURS_PER_WEEK],
        };
        stores.insert(id, (store, attr));
    }
    files.insert("stores".into(), rep);

    // hourly
    let t = Table::read(&paths.hourly, &["store_id", "hour", "visits"], &[], None, opts.max_rows)?;
    let mut rep = FileReport {
        rows_read: t.rows.len(),
        ..Default::default()
    };
    for (line, rec) in &t.rows {
        let line = *line;
        let parsed = (|| {
            let id = t.text(line, rec, "store_id")?;
            let raw_hour = t.text(line, rec, "hour")?;
            let hour = raw_hour
                .parse::<usize>()
                .ok()
                .filter(|h| *h < HOURS_PER_WEEK)
                .ok_or_else(|| t.parse_err(line, format!("hour '{raw_hour}' is not in 0..{}", HOURS_PER_WEEK - 1)))?;
            Ok::<_, IngestError>((id, hour, t.number(line, rec, "visits")?))
        })();
        let (id, hour, v) = row_or_drop!(rep, parsed);
        match stores.get_mut(&id) {
            Some((st, _)) => st.hourly_visits[hour] += v,
            None if opts.lenient => rep.drop(DropReason::UnresolvedId),
            None => {
                return Err(IngestError::Join {
                    file: t.file.clone(),
                    line,
                    message: format!("store '{id}'"),
                })
            }
        }
    }
    files.insert("hourly".into(), rep);
    for (st, _) in stores.values() {
        if st.hourly_visits.iter().all(|v| *v == 0.0) {
            warnings.push(format!("store {} has no hourly visits; its temporal profile is uniform", st.id));
        }
    }

    // neighborhoods
    let t = Table::read(
        &paths.neighborhoods,
        &["cbg_id", "lat", "lon", "population"],
        &["median_age", "median_income", "city"],
        Some("race_"),
        opts.max_rows,
    )?;
    let race_cols: Vec<String> = t.headers.iter().filter(|h| h.starts_with("race_")).cloned().collect();
    let mut rep = FileReport {
        rows_read: t.rows.len(),
        ..Default::default()
    };
    let mut neighborhoods: BTreeMap<String, Neighborhood> = BTreeMap::new();
    for (line, rec) in &t.rows {
        let line = *line;
        let parsed = (|| {
            let mut race = BTreeMap::new();
            for c in &race_cols {
                if let Some(v) = t.optional_number(line, rec, c)? {
                    race.insert(c.clone(), v);
                }
            }
            Ok::<_, IngestError>(Neighborhood {
                id: t.text(line, rec, "cbg_id")?,
                centroid: GeoPoint::new(t.coordinate(line, rec, "lat", 90.0)?, t.coordinate(line, rec, "lon", 180.0)?),
                population: t.number(line, rec, "population")?,
                median_age: t.optional_number(line, rec, "median_age")?,
                median_income: t.optional_number(line, rec, "median_income")?,
                race_counts: (!race.is_empty()).then_some(race),
                city: t.cell(rec, "city").map(str::to_owned),
            })
        })();
        let nb = row_or_drop!(rep, parsed);
        if neighborhoods.contains_key(&nb.id) {
            return Err(IngestError::Schema {
                file: t.file.clone(),
                message: format!("duplicate neighborhood id '{}'", nb.id),
            });
        }
        neighborhoods.insert(nb.id.clone(), nb);
    }
    files.insert("neighborhoods".into(), rep);

    // visits
    let t = Table::read(&paths.visits, &["cbg_id", "store_id", "visits"], &[], None, opts.max_rows)?;
    let mut rep = FileReport {
        rows_read: t.rows.len(),
        ..Default::default()
    };
    let mut visits = VisitMatrix::new();
    for (line, rec) in &t.rows {
        let line = *line;
        let parsed = (|| {
            Ok::<_, IngestError>((
                t.text(line, rec, "cbg_id")?,
                t.text(line, rec, "store_id")?,
                t.number(line, rec, "visits")?,
            ))
        })();
        let (nb, st, v) = row_or_drop!(rep, parsed);
        let unknown = if !neighborhoods.contains_key(&nb) {
            Some(format!("neighborhood '{nb}'"))
        } else if !stores.contains_key(&st) {
            Some(format!("store '{st}'"))
        } else {
            None
        };
        if let Some(message) = unknown {
            if opts.lenient {
                rep.drop(DropReason::UnresolvedId);
                continue;
            }
            return Err(IngestError::Join {
                file: t.file.clone(),
                line,
                message,
            });
        }
        if opts.min_visit_threshold.is_some_and(|th| v < th) {
            rep.drop(DropReason::PrivacyThreshold);
            continue;
        }
        visits.add(nb, st, v);
    }
    if t.rows.is_empty() {
        warnings.push("visits file has no rows; calibration and decay analysis need observations".into());
    } else if visits.is_empty() {
        warnings.push("every visit row was dropped".into());
    }
    files.insert("visits".into(), rep);

    let stores: Vec<Store> = stores
        .into_values()
        .map(|(mut st, attr)| {
            st.attractiveness = attr.unwrap_or_else(|| st.total_hourly_visits());
            st
        })
        .collect();
    let scenario = Scenario::new(stores, neighborhoods.into_values().collect(), visits);
    let violations = validate_scenario(&scenario);
    if !violations.is_empty() {
        return Err(IngestError::Invalid(violations));
    }
    Ok(IngestReport {
        files,
        warnings,
        scenario,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, IngestError> {
    csv::Writer::from_path(path).map_err(|e| IngestError::Io {
        path: path.to_owned(),
        source: e.into(),
    })
}

fn io_err(path: &Path) -> impl Fn(csv::Error) -> IngestError + '_ {
    move |e| IngestError::Io {
        path: path.to_owned(),
        source: e.into(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes a scenario as the four input CSVs. Every hourly bin and every
/// stored visit pair is written; attractiveness is always explicit.
pub fn write_scenario(paths: &ScenarioPaths, s: &Scenario) -> Result<(), IngestError> {
    let p = &paths.stores;
    let mut w = csv_writer(p)?;
    w.write_record(["store_id", "brand", "lat", "lon", "attractiveness"]).map_err(io_err(p))?;
    for st in &s.stores {
        w.write_record([
            st.id.clone(),
            st.brand.clone(),
            st.location.lat.to_string(),
            st.location.lon.to_string(),
            st.attractiveness.to_string(),
        ])
        .map_err(io_err(p))?;
    }
    w.flush().map_err(|source| IngestError::Io { path: p.clone(), source })?;

    let p = &paths.hourly;
    let mut w = csv_writer(p)?;
    w.write_record(["store_id", "hour", "visits"]).map_err(io_err(p))?;
    for st in &s.stores {
        for (t, v) in st.hourly_visits.iter().enumerate() {
            w.write_record([st.id.clone(), t.to_string(), v.to_string()]).map_err(io_err(p))?;
        }
    }
    w.flush().map_err(|source| IngestError::Io { path: p.clone(), source })?;

    let p = &paths.visits;
    let mut w = csv_writer(p)?;
    w.write_record(["cbg_id", "store_id", "visits"]).map_err(io_err(p))?;
    for (n, st, v) in s.visits.iter() {
        w.write_record([n, st, &v.to_string()]).map_err(io_err(p))?;
    }
    w.flush().map_err(|source| IngestError::Io { path: p.clone(), source })?;

    let p = &paths.neighborhoods;
    let races: BTreeSet<&str> = s
        .neighborhoods
        .iter()
        .filter_map(|n| n.race_counts.as_ref())
        .flat_map(|r| r.keys().map(String::as_str))
        .collect();
    let with_city = s.neighborhoods.iter().any(|n| n.city.is_some());
    let mut header = vec!["cbg_id", "lat", "lon", "population", "median_age", "median_income"];
    if with_city {
        header.push("city");
    }
    header.extend(races.iter().copied());
    let mut w = csv_writer(p)?;
    w.write_record(&header).map_err(io_err(p))?;
    for n in &s.neighborhoods {
        let mut rec = vec![
            n.id.clone(),
            n.centroid.lat.to_string(),
            n.centroid.lon.to_string(),
            n.population.to_string(),
            opt(n.median_age),
            opt(n.median_income),
        ];
        if with_city {
            rec.push(n.city.clone().unwrap_or_default());
        }
        for r in &races {
            rec.push(opt(n.race_counts.as_ref().and_then(|m| m.get(*r).copied())));
        }
        w.write_record(&rec).map_err(io_err(p))?;
    }
    w.flush().map_err(|source| IngestError::Io { path: p.clone(), source })?;
    Ok(())
}
