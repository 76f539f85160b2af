//! Ordinary least squares with an intercept, solved through the normal
//! equations on column-scaled data.

use serde::Serialize;

use super::category_entropy;
use super::special::student_t_two_sided_p;
use crate::domain::Scenario;
use crate::error::{Error, Result};
use crate::geo::DistanceMatrix;

/// Covariates of the pairwise visit-count regression, in report order.
pub const REGRESSION_VARIABLES: [&str; 6] = [
    "total_visit_counts",
    "distance",
    "total_population",
    "median_income",
    "median_age",
    "entropy",
];

pub const INTERCEPT: &str = "intercept";

/// Relative pivot threshold below which a column counts as collinear.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Term {
    pub name: String,
    pub coefficient: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionReport {
    /// Covariate names, without the intercept.
    pub variables: Vec<String>,
    /// Intercept first, then one term per covariate.
    pub terms: Vec<Term>,
    pub r_squared: f64,
    pub n_obs: usize,
    pub df_residual: usize,
    pub residual_std_error: f64,
}

impl RegressionReport {
    pub fn term(&self, name: &str) -> Option<&Term> {
        self.terms.iter().find(|t| t.name == name)
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.coefficient).collect()
    }
}

/// R-style significance code for a p-value.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else if p < 0.1 {
        "."
    } else {
        ""
    }
}

/// Observation rows for a regression, with an optional group label per row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Design {
    pub variables: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub response: Vec<f64>,
    pub groups: Vec<String>,
}

impl Design {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Splits rows by group label, in label order.
    pub fn by_group(&self) -> Vec<(String, Design)> {
        let mut out: std::collections::BTreeMap<String, Design> = Default::default();
        for ((row, y), g) in self.rows.iter().zip(&self.response).zip(&self.groups) {
            let d = out.entry(g.clone()).or_insert_with(|| Design {
                variables: self.variables.clone(),
                ..Default::default()
            });
            d.rows.push(row.clone());
            d.response.push(*y);
            d.groups.push(g.clone());
        }
        out.into_iter().collect()
    }
}

/// Pairwise design: one row per `(neighborhood, store)` pair with positive
/// visits and a complete set of covariates. `group_by_brand` labels rows by
/// store brand instead of neighborhood city.
pub fn regression_design(s: &Scenario, d: &DistanceMatrix, group_by_brand: bool) -> Design {
    let n_s = s.n_stores();
    let visits = s.dense_visits();
    let mut design = Design {
        variables: REGRESSION_VARIABLES.iter().map(|v| v.to_string()).collect(),
        ..Default::default()
    };
    for (i, nb) in s.neighborhoods.iter().enumerate() {
        let (Some(age), Some(income), Some(race)) = (nb.median_age, nb.median_income, nb.race_counts.as_ref()) else {
            continue;
        };
        let Ok(entropy) = category_entropy(race) else {
            continue;
        };
        for (j, st) in s.stores.iter().enumerate() {
            let v = visits[i * n_s + j];
            if v <= 0.0 {
                continue;
            }
            design.rows.push(vec![st.attractiveness, d.get(i, j), nb.population, income, age, entropy]);
            design.response.push(v);
            design.groups.push(if group_by_brand {
                st.brand.clone()
            } else {
                nb.city.clone().unwrap_or_default()
            });
        }
    }
    design
}

/// Fits `response ~ 1 + rows` by least squares and reports t-tests on every
/// coefficient.
pub fn mlr_fit(variables: &[String], rows: &[Vec<f64>], response: &[f64]) -> Result<RegressionReport> {
    let k = variables.len();
    let p = k + 1;
    let n = rows.len();
    if response.len() != n {
        return Err(Error::ShapeMismatch(format!("{n} rows but {} responses", response.len())));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != k) {
        return Err(Error::ShapeMismatch(format!("row has {} values for {k} variables", r.len())));
    }
    if n <= p {
        return Err(Error::InsufficientData { n_obs: n, n_params: p });
    }
    let names: Vec<String> = std::iter::once(INTERCEPT.to_owned())
        .chain(variables.iter().cloned())
        .collect();
    let x_at = |r: usize, c: usize| if c == 0 { 1.0 } else { rows[r][c - 1] };

    let mut scale = vec![0.0; p];
    for (c, sc) in scale.iter_mut().enumerate() {
        *sc = (0..n).map(|r| x_at(r, c).powi(2)).sum::<f64>().sqrt();
        if !(*sc > 0.0) || !sc.is_finite() {
            return Err(Error::RankDeficient { column: names[c].clone() });
        }
    }

    // Gram matrix and right-hand side of the scaled system.
    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    for r in 0..n {
        for a in 0..p {
            let za = x_at(r, a) / scale[a];
            rhs[a] += za * response[r];
            for b in 0..=a {
                gram[a * p + b] += za * x_at(r, b) / scale[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[b * p + a] = gram[a * p + b];
        }
    }

    let chol = cholesky(&gram, p).map_err(|c| Error::RankDeficient { column: names[c].clone() })?;
    let gamma = chol_solve(&chol, p, &rhs);
    let coef: Vec<f64> = gamma.iter().zip(&scale).map(|(g, s)| g / s).collect();

    let mean_y = response.iter().sum::<f64>() / n as f64;
    let (mut ssr, mut sst) = (0.0, 0.0);
    for r in 0..n {
        let fitted: f64 = (0..p).map(|c| coef[c] * x_at(r, c)).sum();
        ssr += (response[r] - fitted).powi(2);
        sst += (response[r] - mean_y).powi(2);
    }
    let df = n - p;
    let sigma2 = ssr / df as f64;
    let r_squared = if sst > 0.0 { (1.0 - ssr / sst).clamp(0.0, 1.0) } else { 0.0 };

    let terms = (0..p)
        .map(|c| {
            let mut e = vec![0.0; p];
            e[c] = 1.0;
            let inv_cc = chol_solve(&chol, p, &e)[c];
            let se = (sigma2 * inv_cc).sqrt() / scale[c];
            let (t_stat, p_value) = if se > 0.0 {
                let t = coef[c] / se;
                (t, student_t_two_sided_p(t, df as f64))
            } else if coef[c] == 0.0 {
                (0.0, 1.0)
            } else {
                (coef[c].signum() * f64::INFINITY, 0.0)
            };
            Term {
                name: names[c].clone(),
                coefficient: coef[c],
                std_error: se,
                t_stat,
                p_value,
            }
        })
        .collect();

    Ok(RegressionReport {
        variables: variables.to_vec(),
        terms,
        r_squared,
        n_obs: n,
        df_residual: df,
        residual_std_error: sigma2.sqrt(),
    })
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix;
/// on failure returns the offending column.
fn cholesky(a: &[f64], p: usize) -> std::result::Result<Vec<f64>, usize> {
    let mut l = vec![0.0; p * p];
    let max_diag = (0..p).map(|i| a[i * p + i]).fold(0.0, f64::max);
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= l[j * p + k] * l[j * p + k];
        }
        if !(d > RANK_TOLERANCE * max_diag) {
            return Err(j);
        }
        let d = d.sqrt();
        l[j * p + j] = d;
        for i in j + 1..p {
            let mut v = a[i * p + j];
            for k in 0..j {
                v -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = v / d;
        }
    }
    Ok(l)
}

fn chol_solve(l: &[f64], p: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; p];
    for i in 0..p {
        let mut v = b[i];
        for k in 0..i {
            v -= l[i * p + k] * y[k];
        }
        y[i] = v / l[i * p + i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut v = y[i];
        for k in i + 1..p {
            v -= l[k * p + i] * x[k];
        }
        x[i] = v / l[i * p + i];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn perfect_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..30).map(|_| (0..3).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|r| 2.0 + 3.0 * r[0] - 0.5 * r[1] + 0.25 * r[2]).collect();
        let rep = mlr_fit(&names(3), &rows, &y).unwrap();
        assert!((rep.r_squared - 1.0).abs() < 1e-12);
        for (got, want) in rep.coefficients().iter().zip([2.0, 3.0, -0.5, 0.25]) {
            assert!((got - want).abs() < 1e-10);
        }
        assert!(rep.terms.iter().all(|t| t.p_value < 1e-6));
    }

    #[test]
    fn collinear_columns_are_rejected() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| i as f64 + (i % 3) as f64).collect();
        assert_eq!(
            mlr_fit(&names(2), &rows, &y),
            Err(Error::RankDeficient { column: "x1".into() })
        );
        let constant: Vec<Vec<f64>> = (0..20).map(|_| vec![0.0]).collect();
        assert!(matches!(mlr_fit(&names(1), &constant, &y), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn too_few_rows() {
        let rows: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64; 6]).collect();
        let y = vec![1.0; 7];
        assert_eq!(
            mlr_fit(&names(6), &rows, &y),
            Err(Error::InsufficientData { n_obs: 7, n_params: 7 })
        );
    }

    #[test]
    fn residuals_are_orthogonal_to_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![rng.random_range(0.0..1e4), rng.random_range(0.1..30.0), rng.random_range(0.0..3.0)])
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| 5.0 + 0.01 * r[0] - 2.0 * r[1] + rng.random_range(-3.0..3.0))
            .collect();
        let rep = mlr_fit(&names(3), &rows, &y).unwrap();
        let c = rep.coefficients();
        let resid: Vec<f64> = rows
            .iter()
            .zip(&y)
            .map(|(r, y)| y - c[0] - r.iter().zip(&c[1..]).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        for col in 0..=3 {
            let dot: f64 = rows
                .iter()
                .zip(&resid)
                .map(|(r, e)| if col == 0 { *e } else { r[col - 1] * e })
                .sum();
            let scale: f64 = rows
                .iter()
                .map(|r| if col == 0 { 1.0 } else { r[col - 1].abs() })
                .sum::<f64>()
                * y.iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(dot.abs() < 1e-6 * scale, "column {col}: {dot}");
        }
        assert!(rep.terms.iter().all(|t| (0.0..=1.0).contains(&t.p_value)));
        assert!((0.0..=1.0).contains(&rep.r_squared));
    }

    #[test]
    fn noise_covariate_is_insignificant_on_most_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut small = 0;
        for _ in 0..200 {
            let rows: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
            let y: Vec<f64> = rows.iter().map(|r| 1.0 + 2.0 * r[0] + rng.random_range(-1.0..1.0)).collect();
            let rep = mlr_fit(&names(2), &rows, &y).unwrap();
            if rep.term("x1").unwrap().p_value > 0.05 {
                small += 1;
            }
            assert!(rep.term("x0").unwrap().p_value < 1e-6);
        }
        // nominal 95%; allow Monte Carlo slack
        assert!(small >= 180, "{small}");
    }

    #[test]
    fn stars_follow_r_codes() {
        assert_eq!(significance_stars(0.0005), "***");
        assert_eq!(significance_stars(0.005), "**");
        assert_eq!(significance_stars(0.03), "*");
        assert_eq!(significance_stars(0.07), ".");
        assert_eq!(significance_stars(0.5), "");
    }
}
