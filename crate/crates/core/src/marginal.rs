//! Marginal preprocessing: moving-window detrending, generalized Pareto tail
//! fits, a semiparametric CDF, and the map to (and from) the shifted-Pareto
//! scale `X = 1/√(1 − F̂(x)) − δ`.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::translin::softplus_inv_unchecked;

/// `E[t⁻¹(Z)]` for `Z` with survival `(z + δ)⁻²` on `z > 1 − δ`.
///
/// With `y = 1/s` the expectation becomes `∫₀¹ t⁻¹(1/s − δ) 2s ds`, whose
/// integrand is bounded at `s → 0`.
pub fn centering_objective(delta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Domain(format!("shift must lie in [0, 1] for a positive support, got {delta}")));
    }
    let integrand = |s: f64| {
        if s <= 0.0 {
            return 2.0;
        }
        2.0 * s * softplus_inv_unchecked(1.0 / s - delta)
    };
    Ok(quad::integrate(integrand, 0.0, 1.0, 1e-13, 1e-13)?.value)
}

/// Shift `δ` with `E[t⁻¹(Z)] = 0`.
pub fn solve_delta() -> Result<f64> {
    quad::bisect(|d| centering_objective(d).unwrap_or(f64::NAN), 0.5, 0.99, 1e-13)
}

/// Cached [`solve_delta`].
pub fn centering_shift() -> f64 {
    static SHIFT: OnceLock<f64> = OnceLock::new();
    *SHIFT.get_or_init(|| solve_delta().expect("centering shift is bracketed on [0.5, 0.99]"))
}

// ---------------------------------------------------------------------------
// Detrending

/// Centered moving mean and standard deviation, truncated at the series edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendModel {
    pub window: usize,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl TrendModel {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    fn check_index(&self, t: usize) -> Result<()> {
        if t >= self.len() {
            return Err(Error::InvalidArgument(format!(
                "time index {t} outside fitted trend of length {}",
                self.len()
            )));
        }
        Ok(())
    }

    pub fn standardize(&self, value: f64, t: usize) -> Result<f64> {
        self.check_index(t)?;
        Ok((value - self.means[t]) / self.sds[t])
    }

    pub fn retrend(&self, value: f64, t: usize) -> Result<f64> {
        self.check_index(t)?;
        Ok(value * self.sds[t] + self.means[t])
    }
}

/// Centers and scales `series` by its moving mean and standard deviation.
pub fn detrend(series: &[f64], window: usize) -> Result<(Vec<f64>, TrendModel)> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("window must be odd and at least 3, got {window}")));
    }
    if series.len() < window {
        return Err(Error::InvalidArgument(format!(
            "series of length {} is shorter than the window {window}",
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("series contains non-finite values".into()));
    }
    let n = series.len();
    let half = window / 2;
    let stats: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|t| {
            let slice = &series[t.saturating_sub(half)..(t + half + 1).min(n)];
            let m = slice.len() as f64;
            let mean = slice.iter().sum::<f64>() / m;
            let var = slice.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
            (mean, var.sqrt())
        })
        .collect();
    if let Some(t) = stats.iter().position(|&(mean, sd)| !(sd > 1e-12 * (1.0 + mean.abs()))) {
        return Err(Error::Degenerate(format!("moving window centered at index {t} has zero standard deviation")));
    }
    let (means, sds): (Vec<f64>, Vec<f64>) = stats.into_iter().unzip();
    let out = series.iter().zip(means.iter().zip(&sds)).map(|(x, (m, s))| (x - m) / s).collect();
    Ok((out, TrendModel { window, means, sds }))
}

// ---------------------------------------------------------------------------
// Generalized Pareto tail

/// Generalized Pareto tail above `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdParams {
    pub sigma: f64,
    pub xi: f64,
    pub threshold: f64,
}

impl GpdParams {
    /// `P(Y > y)` for the excess `y ≥ 0`.
    pub fn excess_survival(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 1.0;
        }
        let z = self.xi * y / self.sigma;
        if self.xi.abs() < 1e-12 {
            (-y / self.sigma).exp()
        } else if z <= -1.0 {
            0.0
        } else {
            (-z.ln_1p() / self.xi).exp()
        }
    }

    /// Excess with survival probability `r ∈ (0, 1]`.
    pub fn excess_quantile(&self, r: f64) -> f64 {
        if self.xi.abs() < 1e-12 {
            -self.sigma * r.ln()
        } else {
            self.sigma * (-self.xi * r.ln()).exp_m1() / self.xi
        }
    }
}

/// Result of a maximum-likelihood GPD fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpdFit {
    pub sigma: f64,
    pub xi: f64,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
}

pub const MIN_EXCEEDANCES: usize = 30;
const XI_BOUNDS: (f64, f64) = (-0.5 + 1e-6, 1.0 - 1e-6);
const RESTARTS: usize = 5;

/// `ln(1 + z) / z`, continuous at 0.
fn log1p_ratio(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - z / 2.0 + z * z / 3.0
    } else {
        z.ln_1p() / z
    }
}

/// GPD log-likelihood of the excesses; `-inf` outside the support.
pub fn gpd_log_likelihood(excesses: &[f64], sigma: f64, xi: f64) -> f64 {
    if !(sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let mut ll = -(excesses.len() as f64) * sigma.ln();
    for &y in excesses {
        let u = y / sigma;
        let z = xi * u;
        if z <= -1.0 {
            return f64::NEG_INFINITY;
        }
        // (1 + 1/ξ) ln(1 + z) = ln(1 + z) + u · ln(1 + z)/z
        ll -= z.ln_1p() + u * log1p_ratio(z);
    }
    ll
}

struct Minimum {
    x: [f64; 2],
    f: f64,
    converged: bool,
    iterations: usize,
}

/// Box-projected BFGS on `(ln σ, ξ)` with central-difference gradients.
fn minimize_projected_bfgs<F: Fn([f64; 2]) -> f64>(f: &F, x0: [f64; 2]) -> Minimum {
    let project = |x: [f64; 2]| [x[0], x[1].clamp(XI_BOUNDS.0, XI_BOUNDS.1)];
    let grad = |x: [f64; 2], fx: f64| -> [f64; 2] {
        let mut g = [0.0; 2];
        for k in 0..2 {
            let h = 1e-6 * (1.0 + x[k].abs());
            let (mut xp, mut xm) = (x, x);
            xp[k] += h;
            xm[k] -= h;
            let (fp, fm) = (f(xp), f(xm));
            g[k] = match (fp.is_finite(), fm.is_finite()) {
                (true, true) => (fp - fm) / (2.0 * h),
                (true, false) => (fp - fx) / h,
                (false, true) => (fx - fm) / h,
                (false, false) => 0.0,
            };
        }
        g
    };
    // gradient with components that push against an active bound removed
    let projected = |x: [f64; 2], g: [f64; 2]| -> [f64; 2] {
        let at_lo = x[1] <= XI_BOUNDS.0 && g[1] > 0.0;
        let at_hi = x[1] >= XI_BOUNDS.1 && g[1] < 0.0;
        [g[0], if at_lo || at_hi { 0.0 } else { g[1] }]
    };

    let mut x = project(x0);
    let mut fx = f(x);
    let mut g = grad(x, fx);
    let mut h = [[1.0, 0.0], [0.0, 1.0]];
    let tol = |fx: f64| 1e-6 * (1.0 + fx.abs());
    for it in 0..500 {
        let pg = projected(x, g);
        if pg[0].abs().max(pg[1].abs()) <= tol(fx) {
            return Minimum { x, f: fx, converged: true, iterations: it };
        }
        let mut d = if pg[1] == 0.0 && g[1] != 0.0 {
            // ξ pinned at a bound: search in ln σ only
            [-h[0][0] * g[0], 0.0]
        } else {
            [-(h[0][0] * g[0] + h[0][1] * g[1]), -(h[1][0] * g[0] + h[1][1] * g[1])]
        };
        if d[0] * g[0] + d[1] * g[1] >= 0.0 {
            // not a descent direction; fall back to steepest descent
            h = [[1.0, 0.0], [0.0, 1.0]];
            d = [-pg[0], -pg[1]];
        }
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-14 {
            let trial = project([x[0] + step * d[0], x[1] + step * d[1]]);
            let ft = f(trial);
            let decrease = g[0] * (trial[0] - x[0]) + g[1] * (trial[1] - x[1]);
            if ft.is_finite() && ft <= fx + 1e-4 * decrease {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            let converged = pg[0].abs().max(pg[1].abs()) <= 1e2 * tol(fx);
            return Minimum { x, f: fx, converged, iterations: it };
        };
        let g_new = grad(x_new, f_new);
        let s = [x_new[0] - x[0], x_new[1] - x[1]];
        let y = [g_new[0] - g[0], g_new[1] - g[1]];
        let sy = s[0] * y[0] + s[1] * y[1];
        if sy > 1e-12 {
            let hy = [h[0][0] * y[0] + h[0][1] * y[1], h[1][0] * y[0] + h[1][1] * y[1]];
            let yhy = y[0] * hy[0] + y[1] * hy[1];
            for i in 0..2 {
                for j in 0..2 {
                    h[i][j] += (sy + yhy) * s[i] * s[j] / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        let small_step = s[0].abs().max(s[1].abs()) < 1e-14;
        x = x_new;
        fx = f_new;
        g = g_new;
        if small_step {
            let pg = projected(x, g);
            let converged = pg[0].abs().max(pg[1].abs()) <= 1e2 * tol(fx);
            return Minimum { x, f: fx, converged, iterations: it + 1 };
        }
    }
    Minimum { x, f: fx, converged: false, iterations: 500 }
}

/// Maximum-likelihood generalized Pareto fit to positive threshold excesses.
///
/// Starts from the method-of-moments estimate plus five seeded random
/// restarts and keeps the best converged optimum.
pub fn fit_gpd(excesses: &[f64]) -> Result<GpdFit> {
    if excesses.len() < MIN_EXCEEDANCES {
        return Err(Error::Fit(format!("need at least {MIN_EXCEEDANCES} exceedances, got {}", excesses.len())));
    }
    if excesses.iter().any(|&y| !(y > 0.0) || !y.is_finite()) {
        return Err(Error::Fit("excesses must be finite and positive".into()));
    }
    let n = excesses.len() as f64;
    let mean = excesses.iter().sum::<f64>() / n;
    let var = excesses.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let y_max = excesses.iter().cloned().fold(0.0, f64::max);

    let objective = |x: [f64; 2]| -gpd_log_likelihood(excesses, x[0].exp(), x[1]);
    let feasible = |sigma: f64, xi: f64| {
        let floor = if xi < 0.0 { -xi * y_max * 1.01 } else { 0.0 };
        sigma.max(floor).max(1e-12 * mean)
    };

    let mut starts = Vec::with_capacity(RESTARTS + 1);
    let xi_mom = (0.5 * (1.0 - mean * mean / var)).clamp(-0.45, 0.95);
    let sigma_mom = 0.5 * mean * (mean * mean / var + 1.0);
    starts.push((feasible(sigma_mom, xi_mom), xi_mom));
    let mut rng = ChaCha8Rng::seed_from_u64(0x6770_6466);
    for _ in 0..RESTARTS {
        let xi = rng.random_range(-0.4..0.9);
        let sigma = mean * (1.0 - xi) * rng.random_range(-0.5f64..0.5).exp();
        starts.push((feasible(sigma, xi), xi));
    }

    let mut best: Option<Minimum> = None;
    let mut total_iterations = 0;
    let mut diagnostics = Vec::new();
    for (sigma, xi) in starts {
        let m = minimize_projected_bfgs(&objective, [sigma.ln(), xi]);
        total_iterations += m.iterations;
        diagnostics.push(format!(
            "start (σ={sigma:.4}, ξ={xi:.3}) → (σ={:.4}, ξ={:.4}, nll={:.6}, converged={})",
            m.x[0].exp(),
            m.x[1],
            m.f,
            m.converged
        ));
        if m.converged && m.f.is_finite() && best.as_ref().is_none_or(|b| m.f < b.f) {
            best = Some(m);
        }
    }
    match best {
        Some(m) => Ok(GpdFit {
            sigma: m.x[0].exp(),
            xi: m.x[1],
            log_likelihood: -m.f,
            converged: true,
            iterations: total_iterations,
        }),
        None => Err(Error::Fit(format!("no start converged: {}", diagnostics.join("; ")))),
    }
}

// ---------------------------------------------------------------------------
// Semiparametric marginal transform

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalOptions {
    /// Fit a GPD above the `tail_level` quantile; otherwise use the empirical
    /// CDF throughout.
    pub gpd_tail: bool,
    pub tail_level: f64,
}

impl Default for MarginalOptions {
    fn default() -> Self {
        Self { gpd_tail: true, tail_level: 0.95 }
    }
}

/// Piecewise-linear empirical CDF through `(x₍ₖ₎, k/(n+1))`, optionally
/// spliced with a GPD above the `tail_level` quantile, plus the shift `δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalTransform {
    body: Vec<f64>,
    tail: Option<GpdParams>,
    tail_level: f64,
    delta: f64,
}

impl MarginalTransform {
    pub fn fit(sample: &[f64], options: MarginalOptions) -> Result<Self> {
        Self::fit_with_shift(sample, options, centering_shift())
    }

    pub fn fit_with_shift(sample: &[f64], options: MarginalOptions, delta: f64) -> Result<Self> {
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("sample contains non-finite values".into()));
        }
        if !(options.tail_level > 0.0 && options.tail_level < 1.0) {
            return Err(Error::InvalidArgument(format!("tail level must lie in (0, 1), got {}", options.tail_level)));
        }
        let mut body = sample.to_vec();
        body.sort_by(f64::total_cmp);
        let n = body.len();
        if n < 2 || options.tail_level >= n as f64 / (n + 1) as f64 {
            return Err(Error::InvalidArgument(format!(
                "sample of size {n} is too small for tail level {}",
                options.tail_level
            )));
        }
        let mut transform = Self { body, tail: None, tail_level: options.tail_level, delta };
        if options.gpd_tail {
            let u = transform.body_quantile(options.tail_level);
            let excesses: Vec<f64> = transform.body.iter().filter(|&&v| v > u).map(|v| v - u).collect();
            let fit = fit_gpd(&excesses)?;
            transform.tail = Some(GpdParams { sigma: fit.sigma, xi: fit.xi, threshold: u });
        }
        Ok(transform)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn tail(&self) -> Option<&GpdParams> {
        self.tail.as_ref()
    }

    pub fn tail_level(&self) -> f64 {
        self.tail_level
    }

    pub fn sample(&self) -> &[f64] {
        &self.body
    }

    fn plotting_position(&self, k: usize) -> f64 {
        k as f64 / (self.body.len() + 1) as f64
    }

    fn body_cdf(&self, x: f64) -> f64 {
        let n = self.body.len();
        let k = self.body.partition_point(|&v| v <= x);
        if k == 0 {
            0.0
        } else if k == n {
            self.plotting_position(n)
        } else {
            let (x0, x1) = (self.body[k - 1], self.body[k]);
            let (p0, p1) = (self.plotting_position(k), self.plotting_position(k + 1));
            p0 + (x - x0) / (x1 - x0) * (p1 - p0)
        }
    }

    fn body_quantile(&self, p: f64) -> f64 {
        let n = self.body.len();
        let pos = p * (n + 1) as f64;
        if pos <= 1.0 {
            return self.body[0];
        }
        if pos >= n as f64 {
            return self.body[n - 1];
        }
        let k = pos.floor() as usize;
        let frac = pos - k as f64;
        self.body[k - 1] + frac * (self.body[k] - self.body[k - 1])
    }

    /// `1 − F̂(x)`, computed directly in the tail to avoid cancellation.
    pub fn survival(&self, x: f64) -> f64 {
        match &self.tail {
            Some(gpd) if x >= gpd.threshold => (1.0 - self.tail_level) * gpd.excess_survival(x - gpd.threshold),
            _ => 1.0 - self.body_cdf(x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match &self.tail {
            Some(gpd) if x >= gpd.threshold => {
                self.tail_level + (1.0 - self.tail_level) * (1.0 - gpd.excess_survival(x - gpd.threshold))
            }
            _ => self.body_cdf(x),
        }
    }

    pub fn to_pareto_scale(&self, x: f64) -> Result<f64> {
        let s = self.survival(x);
        if !(s > 0.0) {
            return Err(Error::Domain(format!("value {x} lies at the upper endpoint of the fitted marginal (F̂ = 1)")));
        }
        Ok(s.powf(-0.5) - self.delta)
    }

    /// Inverse of [`Self::to_pareto_scale`].
    pub fn from_pareto_scale(&self, z: f64) -> f64 {
        let s = (z + self.delta).powi(-2).min(1.0);
        match &self.tail {
            Some(gpd) if s < 1.0 - self.tail_level => gpd.threshold + gpd.excess_quantile(s / (1.0 - self.tail_level)),
            _ => self.body_quantile(1.0 - s),
        }
    }
}

pub fn semiparam_cdf(transform: &MarginalTransform, x: f64) -> f64 {
    transform.cdf(x)
}

pub fn to_pareto_scale(transform: &MarginalTransform, x: f64) -> Result<f64> {
    transform.to_pareto_scale(x)
}

/// Pareto-scale value back to the original data scale, re-adding the moving
/// mean and standard deviation at time index `t` when a trend is given.
pub fn back_transform(transform: &MarginalTransform, trend: Option<&TrendModel>, t: usize, z: f64) -> Result<f64> {
    let standardized = transform.from_pareto_scale(z);
    match trend {
        Some(trend) => trend.retrend(standardized, t),
        None => Ok(standardized),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, Exp};

    fn gpd_sample(sigma: f64, xi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = GpdParams { sigma, xi, threshold: 0.0 };
        (0..n).map(|_| g.excess_quantile(1.0 - rng.random::<f64>())).collect()
    }

    #[test]
    fn centering_shift_matches_published_value() {
        let d = solve_delta().unwrap();
        assert!((d - 0.9352).abs() < 1e-4, "δ = {d}");
        assert!(centering_objective(d).unwrap().abs() < 1e-8);
    }

    #[test]
    fn centering_objective_decreases() {
        let grid: Vec<f64> = (0..=25).map(|i| 0.5 + 0.02 * i as f64).collect();
        let values: Vec<f64> = grid.iter().map(|&d| centering_objective(d).unwrap()).collect();
        assert!(values.windows(2).all(|w| w[1] < w[0]));
        assert!(centering_objective(1.2).is_err());
    }

    #[test]
    fn linear_series_detrends_to_zero_inside() {
        let series: Vec<f64> = (0..50).map(|t| 3.0 + 0.7 * t as f64).collect();
        let (out, trend) = detrend(&series, 3).unwrap();
        assert_eq!(out.len(), 50);
        for v in &out[1..49] {
            assert!(v.abs() < 1e-12);
        }
        assert!(trend.sds.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn retrend_inverts_detrend() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let series: Vec<f64> = (0..400).map(|t| 10.0 - 0.01 * t as f64 + rng.random::<f64>() * 3.0).collect();
        let (out, trend) = detrend(&series, 31).unwrap();
        for (t, (&z, &x)) in out.iter().zip(&series).enumerate() {
            assert!((trend.retrend(z, t).unwrap() - x).abs() < 1e-10);
            assert!((trend.standardize(x, t).unwrap() - z).abs() < 1e-10);
        }
        assert!(trend.retrend(0.0, 400).is_err());
    }

    #[test]
    fn long_window_keeps_every_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let series: Vec<f64> = (0..5163).map(|_| rng.random::<f64>()).collect();
        let (out, trend) = detrend(&series, 901).unwrap();
        assert_eq!(out.len(), 5163);
        assert_eq!(trend.len(), 5163);
    }

    #[test]
    fn detrend_rejects_bad_input() {
        assert!(detrend(&[1.0; 10], 4).is_err());
        assert!(detrend(&[1.0; 2], 3).is_err());
        let mut flat = vec![1.0; 20];
        flat.extend((0..20).map(|t| t as f64));
        assert!(matches!(detrend(&flat, 5), Err(Error::Degenerate(_))));
    }

    #[test]
    fn gpd_mle_recovers_heavy_tail() {
        let data = gpd_sample(1.0, 0.2, 10_000, 17);
        let fit = fit_gpd(&data).unwrap();
        assert!(fit.converged);
        assert!((fit.sigma - 1.0).abs() < 0.05, "σ̂ = {}", fit.sigma);
        assert!((fit.xi - 0.2).abs() < 0.05, "ξ̂ = {}", fit.xi);
    }

    #[test]
    fn gpd_mle_recovers_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let exp = Exp::new(1.0 / 2.5).unwrap();
        let data: Vec<f64> = (0..10_000).map(|_| exp.sample(&mut rng)).collect();
        let fit = fit_gpd(&data).unwrap();
        assert!(fit.xi.abs() < 0.05, "ξ̂ = {}", fit.xi);
        assert!((fit.sigma - 2.5).abs() < 0.1);
    }

    #[test]
    fn gpd_mle_handles_bounded_tail() {
        let data = gpd_sample(2.0, -0.3, 10_000, 29);
        let fit = fit_gpd(&data).unwrap();
        assert!((fit.xi + 0.3).abs() < 0.05, "ξ̂ = {}", fit.xi);
    }

    #[test]
    fn gpd_needs_thirty_exceedances() {
        assert!(matches!(fit_gpd(&[1.0; 29]), Err(Error::Fit(_))));
        let mut data = gpd_sample(1.0, 0.1, 100, 1);
        data[3] = -1.0;
        assert!(fit_gpd(&data).is_err());
    }

    #[test]
    fn likelihood_is_continuous_at_exponential() {
        let data = gpd_sample(1.0, 0.0, 200, 2);
        let at_zero = gpd_log_likelihood(&data, 1.3, 0.0);
        let near = gpd_log_likelihood(&data, 1.3, 1e-9);
        assert!((at_zero - near).abs() < 1e-6);
    }

    fn fitted_transform(n: usize, seed: u64) -> MarginalTransform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n).map(|_| rng.random::<f64>().ln().abs() * 2.0 + 1.0).collect();
        MarginalTransform::fit(&data, MarginalOptions::default()).unwrap()
    }

    #[test]
    fn cdf_junction_and_limits() {
        let t = fitted_transform(4000, 3);
        let gpd = *t.tail().unwrap();
        assert_eq!(t.cdf(gpd.threshold), 0.95);
        assert!((t.body_cdf(gpd.threshold) - 0.95).abs() < 1e-12);
        assert_eq!(t.cdf(t.sample()[0] - 1.0), 0.0);
        let median_excess = gpd.sigma * (2f64.powf(gpd.xi) - 1.0) / gpd.xi;
        assert!((t.cdf(gpd.threshold + median_excess) - 0.975).abs() < 1e-12);
        let grid: Vec<f64> = (0..5000).map(|i| -1.0 + i as f64 * 0.01).collect();
        assert!(grid.windows(2).all(|w| t.cdf(w[1]) >= t.cdf(w[0])));
    }

    #[test]
    fn pareto_scale_examples() {
        let t = fitted_transform(4000, 4);
        let delta = t.delta();
        // F̂ = 0.75 ↔ survival 0.25 ↔ 2 − δ
        let x = t.body_quantile(0.75);
        assert!((t.to_pareto_scale(x).unwrap() - (2.0 - delta)).abs() < 1e-9);
        assert!((2.0 - delta - 1.0648).abs() < 1e-4);
        assert!((t.to_pareto_scale(t.sample()[0] - 5.0).unwrap() - (1.0 - delta)).abs() < 1e-15);
        let zs: Vec<f64> = (0..400).map(|i| -2.0 + 0.05 * i as f64).collect();
        let mapped: Vec<f64> = zs.iter().map(|&x| t.to_pareto_scale(x).unwrap()).collect();
        assert!(mapped.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn infinite_transform_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let t = MarginalTransform::fit(&data, MarginalOptions::default()).unwrap();
        let gpd = t.tail().unwrap();
        if gpd.xi < 0.0 {
            let endpoint = gpd.threshold - gpd.sigma / gpd.xi;
            assert!(matches!(t.to_pareto_scale(endpoint + 1.0), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn back_transform_round_trip() {
        let t = fitted_transform(3000, 6);
        let sorted = t.sample();
        let spacing = sorted.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let x = sorted[0] + rng.random::<f64>() * (sorted[sorted.len() - 1] - sorted[0]) * 1.3;
            let z = t.to_pareto_scale(x).unwrap();
            let back = back_transform(&t, None, 0, z).unwrap();
            assert!((back - x).abs() < spacing, "x = {x}, back = {back}");
        }
        let z95 = 0.05f64.powf(-0.5) - t.delta();
        assert_relative_eq!(t.from_pareto_scale(z95), t.tail().unwrap().threshold, max_relative = 1e-12);
        assert_eq!(t.from_pareto_scale(1.0 - t.delta()), sorted[0]);
    }

    #[test]
    fn empirical_only_transform_stays_below_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
        let opts = MarginalOptions { gpd_tail: false, ..Default::default() };
        let t = MarginalTransform::fit(&data, opts).unwrap();
        let max = t.sample()[499];
        assert_relative_eq!(t.cdf(max), 500.0 / 501.0);
        assert!(t.to_pareto_scale(max + 10.0).unwrap().is_finite());
        assert_eq!(t.from_pareto_scale(1e9), max);
    }

    #[test]
    fn back_transform_applies_trend() {
        let t = fitted_transform(2000, 10);
        let trend = TrendModel { window: 3, means: vec![5.0, 6.0], sds: vec![2.0, 3.0] };
        let z = 3.0;
        let s = t.from_pareto_scale(z);
        assert_relative_eq!(back_transform(&t, Some(&trend), 1, z).unwrap(), 3.0 * s + 6.0);
    }

    #[test]
    fn transformed_sample_has_unit_tail_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let data: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>().powf(-0.3)).collect();
        let t = MarginalTransform::fit(&data, MarginalOptions::default()).unwrap();
        let z: Vec<f64> = data.iter().map(|&x| t.to_pareto_scale(x).unwrap()).collect();
        let q = crate::stats::quantile(&z, 0.99);
        let frac = z.iter().filter(|&&v| v > q).count() as f64 / z.len() as f64;
        let ratio = (q + t.delta()).powi(2) * frac;
        assert!((0.8..=1.2).contains(&ratio), "tail ratio {ratio}");
    }
}
