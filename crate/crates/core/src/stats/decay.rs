use serde::Serialize;

use crate::domain::Scenario;
use crate::error::{Error, Result};
use crate::geo::DistanceMatrix;

pub const DEFAULT_BINS: usize = 30;
pub const DEFAULT_FIT_MIN_KM: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdfBin {
    pub lower_km: f64,
    pub upper_km: f64,
    /// Geometric midpoint of the bin.
    pub center_km: f64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoreMedian {
    pub store: String,
    pub median_km: f64,
    pub visits: f64,
}

/// Visit-weighted distance distribution of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecaySummary {
    pub total_visits: f64,
    /// Visit-weighted median over every pair.
    pub median_km: f64,
    /// Unweighted mean of the per-store medians.
    pub mean_of_medians_km: f64,
    pub store_medians: Vec<StoreMedian>,
    pub pdf_bins: Vec<PdfBin>,
    /// `(distance, P(D <= distance))` at every distinct distance.
    pub ecdf: Vec<(f64, f64)>,
    pub loglog_slope: Option<f64>,
    pub loglog_intercept: Option<f64>,
    pub fit_range_km: Option<(f64, f64)>,
}

/// Smallest value whose cumulative weight reaches half the total.
pub fn weighted_median(pairs: &[(f64, f64)]) -> Option<f64> {
    let mut sorted: Vec<(f64, f64)> = pairs.iter().copied().filter(|(_, w)| *w > 0.0).collect();
    if sorted.is_empty() {
        return None;
    }
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = sorted.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    for (v, w) in &sorted {
        acc += w;
        if acc >= 0.5 * total {
            return Some(*v);
        }
    }
    sorted.last().map(|p| p.0)
}

/// Histogram, ECDF and power-law tail fit of visit distances. Bins are
/// logarithmically spaced between the shortest and longest visited distance,
/// so a power-law density plots as a straight line through the bin centers.
pub fn decay_analysis(s: &Scenario, d: &DistanceMatrix, bins: usize, fit_min_km: f64) -> Result<DecaySummary> {
    if bins == 0 {
        return Err(Error::InvalidConfig("histogram needs at least one bin".into()));
    }
    let n_s = s.n_stores();
    if d.rows() != s.n_neighborhoods() || d.cols() != n_s {
        return Err(Error::ShapeMismatch("distance matrix does not match scenario".into()));
    }
    let visits = s.dense_visits();
    let mut pairs = Vec::new();
    let mut per_store: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n_s];
    for (k, v) in visits.iter().enumerate() {
        if *v > 0.0 {
            let (i, j) = (k / n_s, k % n_s);
            let dist = d.get(i, j);
            pairs.push((dist, *v));
            per_store[j].push((dist, *v));
        }
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    if pairs.is_empty() || !(total > 0.0) {
        return Err(Error::NoObservations);
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let median_km = weighted_median(&pairs).expect("non-empty");
    let store_medians: Vec<StoreMedian> = per_store
        .iter()
        .zip(&s.stores)
        .filter_map(|(p, st)| {
            weighted_median(p).map(|m| StoreMedian {
                store: st.id.clone(),
                median_km: m,
                visits: p.iter().map(|x| x.1).sum(),
            })
        })
        .collect();
    let mean_of_medians_km =
        store_medians.iter().map(|m| m.median_km).sum::<f64>() / store_medians.len() as f64;

    let mut ecdf: Vec<(f64, f64)> = Vec::new();
    let mut acc = 0.0;
    for (dist, w) in &pairs {
        acc += w;
        match ecdf.last_mut() {
            Some(last) if last.0 == *dist => last.1 = acc / total,
            _ => ecdf.push((*dist, acc / total)),
        }
    }
    if let Some(last) = ecdf.last_mut() {
        last.1 = 1.0;
    }

    let (mut lo, mut hi) = (pairs[0].0, pairs[pairs.len() - 1].0);
    if hi <= lo * (1.0 + 1e-9) {
        lo *= 0.95;
        hi *= 1.05;
    }
    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    let step = (ln_hi - ln_lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|b| match b {
            0 => lo,
            b if b == bins => hi,
            b => (ln_lo + step * b as f64).exp(),
        })
        .collect();
    let mut mass = vec![0.0; bins];
    for (dist, w) in &pairs {
        let b = (((dist.ln() - ln_lo) / step).floor() as isize).clamp(0, bins as isize - 1) as usize;
        mass[b] += w;
    }
    let pdf_bins: Vec<PdfBin> = (0..bins)
        .map(|b| {
            let (l, u) = (edges[b], edges[b + 1]);
            PdfBin {
                lower_km: l,
                upper_km: u,
                center_km: (l * u).sqrt(),
                density: mass[b] / (total * (u - l)),
            }
        })
        .collect();

    let fit: Vec<(f64, f64)> = pdf_bins
        .iter()
        .filter(|b| b.center_km >= fit_min_km && b.density > 0.0)
        .map(|b| (b.center_km.ln(), b.density.ln()))
        .collect();
    let (loglog_slope, loglog_intercept, fit_range_km) = match simple_ols(&fit) {
        Some((slope, intercept)) => (
            Some(slope),
            Some(intercept),
            Some((fit[0].0.exp(), fit[fit.len() - 1].0.exp())),
        ),
        None => (None, None, None),
    };

    Ok(DecaySummary {
        total_visits: total,
        median_km,
        mean_of_medians_km,
        store_medians,
        pdf_bins,
        ecdf,
        loglog_slope,
        loglog_intercept,
        fit_range_km,
    })
}

fn simple_ols(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}
