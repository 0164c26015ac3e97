//! Angular measure estimates from factor ensembles, the joint region, an
//! angular kernel density with boundary correction, and the conditional
//! density of the target given a large prediction.
//!
//! Angles are `θ = atan2(x, x̂) ∈ [0, π/2]`. The kernel density is built in
//! `s = ln(θ / (π/2 − θ))`, where a Gaussian kernel cannot leak mass past
//! either boundary, and mapped back with the Jacobian `ds/dθ`.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cpfactor::CpFactor;
use crate::error::{Error, Result};
use crate::quad;
use crate::sim::MIN_ATOM_NORM;
use crate::stats::{quantile, weighted_mean_sd, weighted_quantile};

/// Atoms are pulled this far (radians) inside `(0, π/2)` before smoothing.
pub const ANGLE_CLAMP: f64 = 0.01;
pub const GRID_POINTS: usize = 2048;
pub const GRID_START: f64 = 1e-4;
pub const TAIL_MASS_TOL: f64 = 1e-8;
/// Kernel support used for integration limits, in bandwidths.
const KERNEL_REACH: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularAtom {
    pub weight: f64,
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularMeasureEstimate {
    pub atoms: Vec<AngularAtom>,
    pub total_mass: f64,
}

impl AngularMeasureEstimate {
    pub fn new(atoms: Vec<AngularAtom>) -> Result<Self> {
        let atoms: Vec<_> = atoms.into_iter().filter(|a| a.weight > 0.0).collect();
        if atoms.is_empty() {
            return Err(Error::Degenerate("angular measure has no positive mass".into()));
        }
        if let Some(a) = atoms.iter().find(|a| !(0.0..=FRAC_PI_2).contains(&a.angle) || !a.weight.is_finite()) {
            return Err(Error::InvalidArgument(format!("atom {a:?} outside [0, π/2] or non-finite")));
        }
        let total_mass = atoms.iter().map(|a| a.weight).sum();
        Ok(Self { atoms, total_mass })
    }
}

/// Average of the atomic measures of the factors' columns: each nonzero
/// column `b` contributes weight `‖b‖²/n` at angle `atan2(b₂, b₁)`.
pub fn masses_from_ensemble(factors: &[CpFactor]) -> Result<AngularMeasureEstimate> {
    if factors.is_empty() {
        return Err(Error::InvalidArgument("empty factor ensemble".into()));
    }
    let n = factors.len() as f64;
    let atoms = factors
        .iter()
        .flat_map(|f| f.b.column_iter().map(|c| (c[0], c[1])).collect::<Vec<_>>())
        .filter(|(a, b)| a.hypot(*b) >= MIN_ATOM_NORM)
        .map(|(a, b)| AngularAtom { weight: (a * a + b * b) / n, angle: b.atan2(a) })
        .collect();
    AngularMeasureEstimate::new(atoms)
}

/// Cone `{θ_lo ≤ atan2(x, x̂) ≤ θ_hi}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointRegion {
    pub lo: f64,
    pub hi: f64,
}

impl JointRegion {
    pub fn contains(&self, x_hat: f64, x: f64) -> bool {
        let theta = x.atan2(x_hat);
        self.lo <= theta && theta <= self.hi
    }
}

/// Equal-tail mass-weighted angle quantiles of the atoms.
pub fn joint_region(h: &AngularMeasureEstimate, level: f64) -> Result<JointRegion> {
    if !(0.0..1.0).contains(&level) {
        return Err(Error::InvalidArgument(format!("level must lie in [0, 1), got {level}")));
    }
    let pairs: Vec<(f64, f64)> = h.atoms.iter().map(|a| (a.angle, a.weight)).collect();
    Ok(JointRegion {
        lo: weighted_quantile(&pairs, (1.0 - level) / 2.0),
        hi: weighted_quantile(&pairs, (1.0 + level) / 2.0),
    })
}

/// Fraction of rows with `‖(x̂, x)‖` above its `radial_quantile` that fall in
/// `region`.
pub fn joint_fraction(region: &JointRegion, pairs: &[(f64, f64)], radial_quantile: f64) -> Result<(f64, usize)> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no pairs".into()));
    }
    let radii: Vec<f64> = pairs.iter().map(|(a, b)| a.hypot(*b)).collect();
    let r_star = quantile(&radii, radial_quantile);
    let large: Vec<_> = pairs.iter().zip(&radii).filter(|(_, &r)| r > r_star).map(|(p, _)| p).collect();
    if large.is_empty() {
        return Err(Error::Degenerate("no pairs above the radial quantile".into()));
    }
    let inside = large.iter().filter(|(a, b)| region.contains(*a, *b)).count();
    Ok((inside as f64 / large.len() as f64, large.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    Auto,
    Fixed(f64),
}

/// `ln(θ / (π/2 − θ))`.
fn s_of_theta(theta: f64) -> f64 {
    (theta / (FRAC_PI_2 - theta)).ln()
}

/// `s` at `θ = atan u`, accurate for large `u`.
fn s_of_ratio(u: f64) -> f64 {
    u.atan().ln() - u.recip().atan().ln()
}

/// `(θ, π/2 − θ)` at `s`, each computed without cancellation.
fn theta_of_s(s: f64) -> (f64, f64) {
    (FRAC_PI_2 / (1.0 + (-s).exp()), FRAC_PI_2 / (1.0 + s.exp()))
}

/// Ratio `u = tan θ` at `s`.
fn ratio_of_s(s: f64) -> f64 {
    let (theta, rest) = theta_of_s(s);
    theta.sin() / rest.sin()
}

/// Angular density on `[0, π/2]` from Gaussian kernels in `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularDensity {
    centers: Vec<f64>,
    weights: Vec<f64>,
    bandwidth: f64,
    total_mass: f64,
}

const DEGENERATE_SPREAD: f64 = 1.0;

fn silverman(s: &[f64], w: &[f64]) -> Result<f64> {
    let pairs: Vec<(f64, f64)> = s.iter().cloned().zip(w.iter().cloned()).collect();
    let (_, sd) = weighted_mean_sd(&pairs);
    let iqr = weighted_quantile(&pairs, 0.75) - weighted_quantile(&pairs, 0.25);
    // A single distinct angle has no spread; fall back to unit spread in s.
    let spread = if !(sd > 1e-12) {
        DEGENERATE_SPREAD
    } else if iqr > 0.0 {
        sd.min(iqr / 1.34)
    } else {
        sd
    };
    let total: f64 = w.iter().sum();
    let n_eff = total * total / w.iter().map(|v| v * v).sum::<f64>();
    Ok(0.9 * spread * n_eff.powf(-0.2))
}

pub fn kde_angular(h: &AngularMeasureEstimate, bandwidth: Bandwidth) -> Result<AngularDensity> {
    let centers: Vec<f64> =
        h.atoms.iter().map(|a| s_of_theta(a.angle.clamp(ANGLE_CLAMP, FRAC_PI_2 - ANGLE_CLAMP))).collect();
    let weights: Vec<f64> = h.atoms.iter().map(|a| a.weight).collect();
    let bandwidth = match bandwidth {
        Bandwidth::Fixed(b) if b > 0.0 && b.is_finite() => b,
        Bandwidth::Fixed(b) => return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {b}"))),
        Bandwidth::Auto => silverman(&centers, &weights)?,
    };
    Ok(AngularDensity { centers, weights, bandwidth, total_mass: h.total_mass })
}

impl AngularDensity {
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Density in `s`.
    pub fn density_s(&self, s: f64) -> f64 {
        let b = self.bandwidth;
        let norm = 1.0 / (b * (2.0 * std::f64::consts::PI).sqrt());
        self.centers
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| {
                let z = (s - c) / b;
                if z.abs() > KERNEL_REACH {
                    0.0
                } else {
                    w * (-0.5 * z * z).exp()
                }
            })
            .sum::<f64>()
            * norm
    }

    /// Density in `θ`.
    pub fn density(&self, theta: f64) -> f64 {
        if !(theta > 0.0 && theta < FRAC_PI_2) {
            return 0.0;
        }
        let jacobian = FRAC_PI_2 / (theta * (FRAC_PI_2 - theta));
        jacobian * self.density_s(s_of_theta(theta))
    }

    /// `(θ, h(θ))` on `n` equally spaced interior angles.
    pub fn grid(&self, n: usize) -> Vec<(f64, f64)> {
        (1..=n)
            .map(|i| {
                let theta = FRAC_PI_2 * i as f64 / (n + 1) as f64;
                (theta, self.density(theta))
            })
            .collect()
    }

    /// Range of `s` outside which the density is identically zero.
    pub fn support_s(&self) -> (f64, f64) {
        let lo = self.centers.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.centers.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo - KERNEL_REACH * self.bandwidth, hi + KERNEL_REACH * self.bandwidth)
    }

    /// `∫ f(θ(s)) h_s(s) ds` over `[a, b]`, split into bandwidth-sized panels.
    pub fn integrate_s<F: Fn(f64, f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<f64> {
        let (lo, hi) = self.support_s();
        let (a, b) = (a.max(lo), b.min(hi));
        if b <= a {
            return Ok(0.0);
        }
        let panels = ((b - a) / self.bandwidth).ceil().max(1.0) as usize;
        let width = (b - a) / panels as f64;
        let tol = 1e-14 * self.total_mass;
        let mut sum = 0.0;
        for k in 0..panels {
            let (p0, p1) = (a + k as f64 * width, if k + 1 == panels { b } else { a + (k + 1) as f64 * width });
            sum += quad::integrate(
                |s| {
                    let (theta, rest) = theta_of_s(s);
                    f(theta, rest) * self.density_s(s)
                },
                p0,
                p1,
                tol / panels as f64,
                1e-12,
            )?
            .value;
        }
        Ok(sum)
    }
}

/// `2cos²θ`, the angular weight of the conditional density in ratio
/// coordinates, written with `π/2 − θ` for accuracy near `θ = π/2`.
fn ray_weight(_theta: f64, rest: f64) -> f64 {
    2.0 * rest.sin().powi(2)
}

#[derive(Debug)]
struct UnitConditional {
    h: AngularDensity,
    c1: f64,
    ratios: Vec<f64>,
    s_grid: Vec<f64>,
    pdf: Vec<f64>,
    cdf: Vec<f64>,
}

impl UnitConditional {
    fn pdf(&self, u: f64) -> f64 {
        if !(u > 0.0) {
            return 0.0;
        }
        2.0 * (1.0 + u * u).powi(-2) * self.h.density(u.atan()) / self.c1
    }

    fn cdf(&self, u: f64) -> Result<f64> {
        if !(u > 0.0) {
            return Ok(0.0);
        }
        let s = s_of_ratio(u);
        let i = self.s_grid.partition_point(|&g| g <= s);
        let (base, from) = if i == 0 { (0.0, f64::NEG_INFINITY) } else { (self.cdf[i - 1], self.s_grid[i - 1]) };
        let extra = self.h.integrate_s(ray_weight, from, s)? / self.c1;
        Ok((base + extra).min(1.0))
    }

    fn quantile(&self, p: f64) -> Result<f64> {
        let p = p.clamp(0.0, 1.0);
        let i = self.cdf.partition_point(|&c| c < p);
        let (base, lo) = if i == 0 { (0.0, self.h.support_s().0) } else { (self.cdf[i - 1], self.s_grid[i - 1]) };
        let hi = if i < self.s_grid.len() { self.s_grid[i] } else { self.h.support_s().1 };
        let target = (p - base) * self.c1;
        let (mut a, mut b) = (lo, hi);
        for _ in 0..100 {
            let mid = 0.5 * (a + b);
            if b - a <= 1e-13 * (1.0 + mid.abs()) {
                break;
            }
            if self.h.integrate_s(ray_weight, lo, mid)? < target {
                a = mid;
            } else {
                b = mid;
            }
        }
        Ok(ratio_of_s(0.5 * (a + b)))
    }
}

/// Conditional density of the target given prediction `x̂`.
///
/// Homogeneity makes `x / x̂` independent of `x̂`; the density is computed
/// once in that ratio and rescaled, so [`ConditionalDensity::rescale`] is
/// exact.
#[derive(Debug, Clone)]
pub struct ConditionalDensity {
    x_hat: f64,
    unit: Arc<UnitConditional>,
}

pub fn conditional_density(h: &AngularDensity, x_hat: f64) -> Result<ConditionalDensity> {
    if !(x_hat > 0.0 && x_hat.is_finite()) {
        return Err(Error::InvalidArgument(format!("x̂ must be positive, got {x_hat}")));
    }
    let (s_lo, s_hi) = h.support_s();
    let c1 = h.integrate_s(ray_weight, s_lo, s_hi)?;
    if !(c1 * x_hat.powi(-3) > 1e-300) {
        return Err(Error::Degenerate("conditional density vanishes: angular mass sits at θ = π/2".into()));
    }

    // extend the grid until the omitted upper tail is negligible
    let mut upper = 10.0;
    while h.integrate_s(ray_weight, s_of_ratio(upper), s_hi)? >= TAIL_MASS_TOL * c1 && upper < 1e15 {
        upper *= 2.0;
    }
    let step = (upper / GRID_START).ln() / (GRID_POINTS - 1) as f64;
    let ratios: Vec<f64> = (0..GRID_POINTS).map(|i| GRID_START * (i as f64 * step).exp()).collect();
    let s_grid: Vec<f64> = ratios.iter().map(|&u| s_of_ratio(u)).collect();

    let mut cdf = Vec::with_capacity(GRID_POINTS);
    let mut acc = h.integrate_s(ray_weight, s_lo, s_grid[0])?;
    cdf.push(acc / c1);
    for w in s_grid.windows(2) {
        acc += h.integrate_s(ray_weight, w[0], w[1])?;
        cdf.push((acc / c1).min(1.0));
    }
    let mut unit = UnitConditional { h: h.clone(), c1, ratios, s_grid, pdf: Vec::new(), cdf };
    unit.pdf = unit.ratios.iter().map(|&u| unit.pdf(u)).collect();
    Ok(ConditionalDensity { x_hat, unit: Arc::new(unit) })
}

impl ConditionalDensity {
    pub fn x_hat(&self) -> f64 {
        self.x_hat
    }

    /// Same angular density at another conditioning value.
    pub fn rescale(&self, x_hat: f64) -> Result<Self> {
        if !(x_hat > 0.0 && x_hat.is_finite()) {
            return Err(Error::InvalidArgument(format!("x̂ must be positive, got {x_hat}")));
        }
        Ok(Self { x_hat, unit: Arc::clone(&self.unit) })
    }

    /// Normalizer `c` of the unnormalized density `2‖(x̂, x)‖⁻⁵ x h`.
    pub fn normalizer(&self) -> f64 {
        self.unit.c1 * self.x_hat.powi(-3)
    }

    pub fn grid(&self) -> Vec<f64> {
        self.unit.ratios.iter().map(|u| u * self.x_hat).collect()
    }

    pub fn density(&self) -> Vec<f64> {
        self.unit.pdf.iter().map(|p| p / self.x_hat).collect()
    }

    /// CDF at the grid points.
    pub fn cdf_grid(&self) -> &[f64] {
        &self.unit.cdf
    }

    pub fn pdf_at(&self, x: f64) -> f64 {
        self.unit.pdf(x / self.x_hat) / self.x_hat
    }

    pub fn cdf_at(&self, x: f64) -> Result<f64> {
        self.unit.cdf(x / self.x_hat)
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        Ok(self.x_hat * self.unit.quantile(p)?)
    }
}

/// Equal-tail interval `(F⁻¹((1−level)/2), F⁻¹((1+level)/2))`.
pub fn conditional_interval(f: &ConditionalDensity, level: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&level) {
        return Err(Error::InvalidArgument(format!("level must lie in [0, 1), got {level}")));
    }
    Ok((f.quantile((1.0 - level) / 2.0)?, f.quantile((1.0 + level) / 2.0)?))
}

pub fn coverage_rate(intervals: &[(f64, f64)], truths: &[f64]) -> f64 {
    let inside = intervals.iter().zip(truths).filter(|((lo, hi), t)| lo <= *t && *t <= hi).count();
    inside as f64 / intervals.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub coverage: f64,
    pub n_retained: usize,
    pub mean_width: f64,
    /// Interval for a unit prediction; every retained interval is this
    /// scaled by its `x̂`.
    pub unit_interval: (f64, f64),
}

pub const MIN_RETAINED: usize = 50;

/// Coverage of conditional intervals over pairs whose `x̂` exceeds its
/// `threshold_quantile`.
pub fn assess_coverage(
    h: &AngularDensity,
    pairs: &[(f64, f64)],
    threshold_quantile: f64,
    level: f64,
) -> Result<CoverageReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no pairs to assess".into()));
    }
    let preds: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let cut = quantile(&preds, threshold_quantile);
    let retained: Vec<(f64, f64)> = pairs.iter().cloned().filter(|p| p.0 > cut).collect();
    if retained.len() < MIN_RETAINED {
        return Err(Error::InvalidArgument(format!(
            "only {} pairs above the {threshold_quantile} quantile of x̂, need {MIN_RETAINED}",
            retained.len()
        )));
    }
    let unit = conditional_interval(&conditional_density(h, 1.0)?, level)?;
    let intervals: Vec<(f64, f64)> = retained.iter().map(|(x_hat, _)| (x_hat * unit.0, x_hat * unit.1)).collect();
    let truths: Vec<f64> = retained.iter().map(|p| p.1).collect();
    let mean_width = intervals.iter().map(|(lo, hi)| hi - lo).sum::<f64>() / intervals.len() as f64;
    Ok(CoverageReport {
        coverage: coverage_rate(&intervals, &truths),
        n_retained: retained.len(),
        mean_width,
        unit_interval: unit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use std::f64::consts::FRAC_PI_4;

    fn measure(points: &[(f64, f64)]) -> AngularMeasureEstimate {
        AngularMeasureEstimate::new(points.iter().map(|&(weight, angle)| AngularAtom { weight, angle }).collect())
            .unwrap()
    }

    fn theta_mass(h: &AngularDensity) -> f64 {
        quad::integrate(|t| h.density(t), 0.0, FRAC_PI_2, 1e-13, 1e-12).unwrap().value
    }

    #[test]
    fn masses_from_identity_and_345() {
        let id = CpFactor { b: DMatrix::identity(2, 2), seed: 0, iterations: 0 };
        let h = masses_from_ensemble(&[id]).unwrap();
        assert_eq!(
            h.atoms,
            vec![AngularAtom { weight: 1.0, angle: 0.0 }, AngularAtom { weight: 1.0, angle: FRAC_PI_2 }]
        );
        let col = CpFactor { b: DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 4.0, 0.0]), seed: 0, iterations: 0 };
        let h = masses_from_ensemble(&[col]).unwrap();
        assert_eq!(h.atoms.len(), 1);
        assert_relative_eq!(h.atoms[0].weight, 25.0);
        assert_relative_eq!(h.atoms[0].angle, 0.9272952180016122, epsilon = 1e-15);
        let zero = CpFactor { b: DMatrix::zeros(2, 3), seed: 0, iterations: 0 };
        assert!(matches!(masses_from_ensemble(&[zero]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn joint_region_examples() {
        let r = joint_region(&measure(&[(1.0, 0.0), (1.0, FRAC_PI_2)]), 0.95).unwrap();
        assert_eq!((r.lo, r.hi), (0.0, FRAC_PI_2));
        let r = joint_region(&measure(&[(2.0, FRAC_PI_4)]), 0.95).unwrap();
        assert_eq!((r.lo, r.hi), (FRAC_PI_4, FRAC_PI_4));
        let r = JointRegion { lo: 0.5, hi: 1.0 };
        assert!(r.contains(1.0, 1.0));
        assert!(r.contains(1e6, 1e6));
        assert!(!r.contains(1.0, 0.1));
    }

    #[test]
    fn single_atom_density_is_unimodal_and_mass_preserving() {
        let h = kde_angular(&measure(&[(1.5, 0.6)]), Bandwidth::Fixed(0.2)).unwrap();
        assert_relative_eq!(theta_mass(&h), 1.5, epsilon = 1e-6);
        let grid = h.grid(2000);
        let peak = grid.iter().cloned().fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        assert!((peak.0 - 0.6).abs() < 0.1);
        let signs: Vec<bool> = grid.windows(2).filter(|w| w[1].1 != w[0].1).map(|w| w[1].1 > w[0].1).collect();
        assert_eq!(signs.windows(2).filter(|s| s[0] != s[1]).count(), 1);
        let single = kde_angular(&measure(&[(1.0, 0.6)]), Bandwidth::Auto).unwrap();
        assert_relative_eq!(single.bandwidth(), 0.9);
    }

    #[test]
    fn two_atoms_bimodal() {
        let h = kde_angular(&measure(&[(1.0, 0.3), (1.0, 1.2)]), Bandwidth::Auto).unwrap();
        assert_relative_eq!(theta_mass(&h), 2.0, epsilon = 1e-6);
        assert!(h.density(0.3) > h.density(0.75));
        assert!(h.density(1.2) > h.density(0.75));
    }

    #[test]
    fn boundary_mass_stays_finite() {
        let h = kde_angular(&measure(&[(1.0, 0.0), (0.5, 1e-3), (0.2, FRAC_PI_2)]), Bandwidth::Auto).unwrap();
        assert_relative_eq!(theta_mass(&h), 1.7, epsilon = 1e-6);
        for t in [1e-12, 1e-8, 1e-4, FRAC_PI_2 - 1e-9] {
            assert!(h.density(t).is_finite());
        }
    }

    #[test]
    fn conditional_integrates_to_one() {
        let h = kde_angular(&measure(&[(1.0, 0.3), (0.7, 0.9), (0.4, 1.4)]), Bandwidth::Auto).unwrap();
        let f = conditional_density(&h, 20.0).unwrap();
        // Simpson in ln x on a fine grid, independent of the internal scheme
        let n = 200_000;
        let (a, b) = ((1e-6f64 * 20.0).ln(), (1e7f64 * 20.0).ln());
        let dx = (b - a) / n as f64;
        let g = |i: usize| {
            let x = (a + i as f64 * dx).exp();
            f.pdf_at(x) * x
        };
        let mut sum = g(0) + g(n);
        for i in 1..n {
            sum += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i);
        }
        assert!((sum * dx / 3.0 - 1.0).abs() < 1e-6);
        assert!(f.density().iter().all(|&d| d >= 0.0));
        assert!((f.cdf_grid().last().unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn intervals_scale_with_prediction() {
        let h = kde_angular(&measure(&[(1.0, 0.5), (1.0, 0.9)]), Bandwidth::Auto).unwrap();
        let a = conditional_interval(&conditional_density(&h, 50.0).unwrap(), 0.95).unwrap();
        let b = conditional_interval(&conditional_density(&h, 100.0).unwrap(), 0.95).unwrap();
        assert_relative_eq!(b.0, 2.0 * a.0, max_relative = 1e-10);
        assert_relative_eq!(b.1, 2.0 * a.1, max_relative = 1e-10);
        let f = conditional_density(&h, 50.0).unwrap();
        assert_relative_eq!(f.rescale(100.0).unwrap().pdf_at(80.0), f.pdf_at(40.0) / 2.0, max_relative = 1e-12);
        assert!(a.0 < a.1);
    }

    #[test]
    fn zero_level_gives_median() {
        let h = kde_angular(&measure(&[(1.0, 0.5), (1.0, 0.9)]), Bandwidth::Auto).unwrap();
        let f = conditional_density(&h, 3.0).unwrap();
        let (lo, hi) = conditional_interval(&f, 0.0).unwrap();
        assert_relative_eq!(lo, hi);
        assert_relative_eq!(f.cdf_at(lo).unwrap(), 0.5, epsilon = 1e-9);
        let q = f.quantile(0.9).unwrap();
        assert_relative_eq!(f.cdf_at(q).unwrap(), 0.9, epsilon = 1e-9);
    }

    #[test]
    fn diagonal_atom_puts_mode_near_prediction() {
        let h = kde_angular(&measure(&[(1.0, FRAC_PI_4)]), Bandwidth::Fixed(0.05)).unwrap();
        let f = conditional_density(&h, 10.0).unwrap();
        let (grid, dens) = (f.grid(), f.density());
        let mode = grid[dens.iter().enumerate().fold(0, |m, (i, d)| if *d > dens[m] { i } else { m })];
        assert!((0.8..=1.2).contains(&(mode / 10.0)), "mode {mode}");
    }

    #[test]
    fn coverage_examples() {
        assert_eq!(coverage_rate(&[(0.0, f64::INFINITY); 3], &[1.0, 5.0, 1e9]), 1.0);
        let h = kde_angular(&measure(&[(1.0, 0.5), (1.0, 0.9)]), Bandwidth::Auto).unwrap();
        let pairs: Vec<(f64, f64)> = (0..100).map(|i| (1.0 + i as f64, 1.0 + i as f64)).collect();
        assert!(assess_coverage(&h, &pairs, 0.95, 0.95).is_err());
        let report = assess_coverage(&h, &pairs, 0.4, 0.95).unwrap();
        assert_eq!(report.n_retained, 60);
        assert_eq!(report.coverage, 1.0);
    }

    #[test]
    fn all_mass_on_axis_is_degenerate() {
        let h = AngularDensity { centers: vec![2000.0], weights: vec![1.0], bandwidth: 0.1, total_mass: 1.0 };
        assert!(matches!(conditional_density(&h, 1.0), Err(Error::Degenerate(_))));
    }
}
