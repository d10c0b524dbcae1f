//! Error metrics and privacy-saving accounting for experiment runs.

use serde::Serialize;

/// One per-trial measurement.
#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub trial: usize,
    pub metric: String,
    pub value: f64,
    /// Privacy saving of the run, in [0, 1].
    pub savings: f64,
}

/// Relative count error `|C̃ − C| / C`. A zero true count has no relative
/// error; the row carries a NaN sentinel instead of failing.
pub fn count_err(truth: usize, estimate: usize) -> f64 {
    if truth == 0 {
        return f64::NAN;
    }
    (estimate as f64 - truth as f64).abs() / truth as f64
}

/// Absolute error `|Ã − A|` for KDE values.
pub fn l1_err(truth: f64, estimate: f64) -> f64 {
    (estimate - truth).abs()
}

/// Relative excess total distance of the selected neighbor set over the true
/// one: `(Dist(J̃, p) − Dist(J*, p)) / Dist(J*, p)`.
pub fn dist_err(points: &[Vec<f64>], p: &[f64], selected: &[usize], truth: &[usize]) -> f64 {
    let total = |ids: &[usize]| -> f64 {
        ids.iter()
            .map(|&i| {
                points[i]
                    .iter()
                    .zip(p)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum()
    };
    let base = total(truth);
    if base == 0.0 {
        return f64::NAN;
    }
    (total(selected) - base) / base
}

/// Mean unspent fraction of the per-user allocations.
pub fn priv_sav(spent: &[f64], allocated: &[f64]) -> f64 {
    if spent.is_empty() {
        return 0.0;
    }
    let sum: f64 = spent
        .iter()
        .zip(allocated)
        .map(|(&s, &a)| ((a - s) / a).clamp(0.0, 1.0))
        .sum();
    sum / spent.len() as f64
}

/// Linearly interpolated percentile of already-sorted values.
pub fn percentile(sorted: &[f64], fraction: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let position = fraction * (sorted.len() - 1) as f64;
    let lo = position.floor() as usize;
    let hi = position.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let t = position - lo as f64;
        sorted[lo] * (1.0 - t) + sorted[hi] * t
    }
}
