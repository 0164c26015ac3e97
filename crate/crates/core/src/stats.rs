//! Small descriptive-statistics helpers shared across modules.

/// Linear-interpolation sample quantile (Hyndman–Fan type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty sample");
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, p)
}

/// Smallest value whose cumulative weight reaches `p` of the total.
///
/// `pairs` is `(value, weight)` and need not be sorted.
pub fn weighted_quantile(pairs: &[(f64, f64)], p: f64) -> f64 {
    assert!(!pairs.is_empty(), "weighted quantile of empty sample");
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = sorted.iter().map(|x| x.1).sum();
    let target = p.clamp(0.0, 1.0) * total;
    let mut cum = 0.0;
    for &(v, w) in &sorted {
        cum += w;
        if cum >= target * (1.0 - 1e-12) {
            return v;
        }
    }
    sorted[sorted.len() - 1].0
}

/// Weighted mean and (population) standard deviation.
pub fn weighted_mean_sd(pairs: &[(f64, f64)]) -> (f64, f64) {
    let total: f64 = pairs.iter().map(|x| x.1).sum();
    let mean = pairs.iter().map(|(v, w)| v * w).sum::<f64>() / total;
    let var = pairs.iter().map(|(v, w)| w * (v - mean).powi(2)).sum::<f64>() / total;
    (mean, var.sqrt())
}
