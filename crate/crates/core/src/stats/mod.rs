//! Statistical kernels: correlation, entropy, map classification, distance
//! decay and multiple regression.

mod decay;
mod regression;
pub mod special;

use std::collections::BTreeMap;

pub use decay::{decay_analysis, weighted_median, DecaySummary, DEFAULT_BINS, DEFAULT_FIT_MIN_KM};
pub use regression::{mlr_fit, regression_design, significance_stars, Design, RegressionReport, REGRESSION_VARIABLES};

use crate::error::{Error, Result};

/// Product-moment correlation of two equally long vectors.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!("pearson inputs of length {} and {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData {
            n_obs: x.len(),
            n_params: 2,
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    let (mut rx, mut ry) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
        rx += a * a;
        ry += b * b;
    }
    // Constant inputs leave only rounding noise in the centered sums.
    if sxx <= 1e-24 * rx || syy <= 1e-24 * ry {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Shannon entropy (natural log) of a count distribution.
pub fn shannon_entropy<'a, I>(counts: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a f64>,
{
    let counts: Vec<f64> = counts.into_iter().copied().collect();
    let total: f64 = counts.iter().filter(|c| **c > 0.0).sum();
    if !(total > 0.0) {
        return Err(Error::EmptyDistribution);
    }
    Ok(-counts
        .iter()
        .filter(|c| **c > 0.0)
        .map(|c| {
            let p = c / total;
            p * p.ln()
        })
        .sum::<f64>())
}

/// Entropy of a labelled category map, e.g. race/ethnicity counts.
pub fn category_entropy(counts: &BTreeMap<String, f64>) -> Result<f64> {
    shannon_entropy(counts.values())
}

/// Fraction of the data range used as the positive offset when values must be
/// shifted before geometric classing.
pub const GEOMETRIC_SHIFT_FRACTION: f64 = 0.01;

/// `k + 1` class breaks whose class widths grow geometrically. Data with a
/// non-positive minimum are shifted so the minimum lands at
/// `GEOMETRIC_SHIFT_FRACTION * range`, classed, and shifted back.
pub fn geometric_intervals(values: &[f64], k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 classes, got {k}")));
    }
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::InsufficientData { n_obs: 0, n_params: 1 });
    }
    let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Err(Error::DegenerateRange(min));
    }
    let shift = if min > 0.0 {
        0.0
    } else {
        GEOMETRIC_SHIFT_FRACTION * (max - min) - min
    };
    let (lo, hi) = (min + shift, max + shift);
    let ratio = hi / lo;
    let mut breaks: Vec<f64> = (0..=k)
        .map(|i| lo * ratio.powf(i as f64 / k as f64) - shift)
        .collect();
    breaks[0] = min;
    breaks[k] = max;
    Ok(breaks)
}

/// Class index (0-based) of `v` given ascending `breaks`; values at or
/// beyond the ends fall in the first or last class.
pub fn class_index(breaks: &[f64], v: f64) -> usize {
    let classes = breaks.len().saturating_sub(1).max(1);
    let pos = breaks[1..breaks.len().saturating_sub(1).max(1)]
        .iter()
        .take_while(|b| v > **b)
        .count();
    pos.min(classes - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 7.0).collect();
        assert!((pearson(&x, &y).unwrap() + 1.0).abs() < 1e-15);
        // sxy = 3, sxx = syy = 5
        let r = pearson(&x, &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert!((r - 0.6).abs() < 1e-15);
    }

    #[test]
    fn pearson_errors() {
        assert_eq!(pearson(&[1.0, 1.0], &[2.0, 3.0]), Err(Error::ZeroVariance));
        assert!(matches!(pearson(&[1.0], &[2.0]), Err(Error::InsufficientData { .. })));
        assert!(matches!(pearson(&[1.0, 2.0], &[2.0]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(shannon_entropy(&[5.0]).unwrap(), 0.0);
        assert!((shannon_entropy(&[2.0; 4]).unwrap() - 4f64.ln()).abs() < 1e-15);
        let h = shannon_entropy(&[3.0, 1.0]).unwrap();
        let hand = -0.75 * 0.75f64.ln() - 0.25 * 0.25f64.ln();
        assert!((h - hand).abs() < 1e-15);
        assert!((h - 0.5623).abs() < 1e-4);
        assert_eq!(shannon_entropy(&[0.0, 0.0]), Err(Error::EmptyDistribution));
        assert_eq!(shannon_entropy(&[0.0, 7.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn geometric_breaks_examples() {
        let b = geometric_intervals(&[1.0, 3.0, 256.0, 20.0], 4).unwrap();
        for (got, want) in b.iter().zip([1.0, 4.0, 16.0, 64.0, 256.0]) {
            assert!((got - want).abs() < 1e-12, "{b:?}");
        }
        let b = geometric_intervals(&[1.0, 100.0], 2).unwrap();
        assert!((b[1] - 10.0).abs() < 1e-12);
        assert_eq!(geometric_intervals(&[3.0, 3.0], 3), Err(Error::DegenerateRange(3.0)));
    }

    #[test]
    fn geometric_breaks_with_negative_values() {
        let b = geometric_intervals(&[-0.003, 0.0, 0.001, 0.003], 7).unwrap();
        assert_eq!(b.len(), 8);
        assert_eq!(b[0], -0.003);
        assert_eq!(b[7], 0.003);
        assert!(b.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn class_lookup() {
        let b = [1.0, 4.0, 16.0, 64.0, 256.0];
        assert_eq!(class_index(&b, 1.0), 0);
        assert_eq!(class_index(&b, 4.0), 0);
        assert_eq!(class_index(&b, 4.5), 1);
        assert_eq!(class_index(&b, 256.0), 3);
        assert_eq!(class_index(&b, 1e9), 3);
        assert_eq!(class_index(&b, -5.0), 0);
    }

    proptest! {
        #[test]
        fn pearson_affine_invariance(
            x in prop::collection::vec(-100.0..100.0f64, 3..40),
            seed in prop::collection::vec(-100.0..100.0f64, 40),
            a in 0.01..50.0f64, b in -1e3..1e3f64,
        ) {
            let y: Vec<f64> = x.iter().zip(&seed).map(|(v, s)| v * 0.3 + s).collect();
            if let Ok(r) = pearson(&x, &y) {
                let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                let r2 = pearson(&xs, &y).unwrap();
                prop_assert!((r - r2).abs() < 1e-12);
                let neg: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
                prop_assert!((pearson(&neg, &y).unwrap() + r).abs() < 1e-12);
            }
        }

        #[test]
        fn geometric_progression_of_widths(
            values in prop::collection::vec(0.01..1e4f64, 2..50),
            k in 2usize..10,
        ) {
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assume!(max / min > 1.1);
            let b = geometric_intervals(&values, k).unwrap();
            prop_assert_eq!(b[0], min);
            prop_assert_eq!(b[k], max);
            prop_assert!(b.windows(2).all(|w| w[0] < w[1]));
            let widths: Vec<f64> = b.windows(2).map(|w| w[1] - w[0]).collect();
            let ratio = (max / min).powf(1.0 / k as f64);
            for w in widths.windows(2) {
                prop_assert!((w[1] / w[0] - ratio).abs() < 1e-9);
            }
        }
    }
}
