//! Gaussian best-linear-predictor reference with mean-square prediction
//! error intervals, used as a contrast for the tail-based intervals.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::predictor::{solve_weights, PartitionedTpdm};

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

fn z_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {level}")));
    }
    Ok(standard_normal().inverse_cdf(0.5 + level / 2.0))
}

/// Column-wise empirical CDF with plotting positions `k/(n+1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    fn new(values: impl Iterator<Item = f64>) -> Self {
        let mut sorted: Vec<f64> = values.collect();
        sorted.sort_by(f64::total_cmp);
        Self { sorted }
    }

    fn n1(&self) -> f64 {
        (self.sorted.len() + 1) as f64
    }

    /// Interpolated CDF, kept inside `[1/(n+1), n/(n+1)]`.
    fn cdf(&self, x: f64) -> f64 {
        let n = self.sorted.len();
        let k = self.sorted.partition_point(|&v| v <= x);
        if k == 0 {
            return 1.0 / self.n1();
        }
        if k == n {
            return n as f64 / self.n1();
        }
        let (x0, x1) = (self.sorted[k - 1], self.sorted[k]);
        (k as f64 + (x - x0) / (x1 - x0)) / self.n1()
    }

    fn quantile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let pos = p * self.n1();
        if pos <= 1.0 {
            return self.sorted[0];
        }
        if pos >= n as f64 {
            return self.sorted[n - 1];
        }
        let k = pos.floor() as usize;
        let frac = pos - k as f64;
        self.sorted[k - 1] + frac * (self.sorted[k] - self.sorted[k - 1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianInterval {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
}

fn covariance(data: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = data.nrows() as f64;
    let mean = DVector::from_iterator(data.ncols(), data.column_iter().map(|c| c.sum() / n));
    let mut centered = data.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    let cov = centered.transpose() * &centered / (n - 1.0);
    (mean, cov)
}

fn blup(cov: &DMatrix<f64>, target: usize) -> Result<(Vec<f64>, f64)> {
    let part = PartitionedTpdm::from_matrix(cov, target)?;
    let w = solve_weights(&part)?;
    let mspe = (part.s22 - part.s12.dot(&w.as_vector())).max(0.0);
    Ok((w.b, mspe))
}

fn check_fit_input(train: &DMatrix<f64>, target: usize) -> Result<()> {
    if target >= train.ncols() || train.ncols() < 2 {
        return Err(Error::InvalidArgument(format!("target {target} invalid for {} columns", train.ncols())));
    }
    if train.nrows() < 3 {
        return Err(Error::InvalidArgument("need at least 3 training rows".into()));
    }
    if train.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("training data must be finite".into()));
    }
    Ok(())
}

fn split_row(row: &[f64], target: usize) -> DVector<f64> {
    DVector::from_iterator(row.len() - 1, row.iter().enumerate().filter(|(j, _)| *j != target).map(|(_, v)| *v))
}

/// Simple kriging on normal scores: each variable is mapped through its
/// training empirical CDF and `Φ⁻¹`, the predictor and its mean-square error
/// come from the score covariance, and the interval `ŝ ± z·√MSPE` is mapped
/// back through the target's training quantiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianReference {
    ecdfs: Vec<Ecdf>,
    target: usize,
    weights: Vec<f64>,
    mspe: f64,
}

impl GaussianReference {
    pub fn fit(train: &DMatrix<f64>, target: usize) -> Result<Self> {
        check_fit_input(train, target)?;
        let ecdfs: Vec<Ecdf> = train.column_iter().map(|c| Ecdf::new(c.iter().cloned())).collect();
        let phi = standard_normal();
        let scores =
            DMatrix::from_fn(train.nrows(), train.ncols(), |i, j| phi.inverse_cdf(ecdfs[j].cdf(train[(i, j)])));
        let (_, cov) = covariance(&scores);
        let (weights, mspe) = blup(&cov, target)?;
        Ok(Self { ecdfs, target, weights, mspe })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mspe(&self) -> f64 {
        self.mspe
    }

    /// Interval for one full row; the target entry is ignored.
    pub fn interval(&self, row: &[f64], level: f64) -> Result<GaussianInterval> {
        if row.len() != self.ecdfs.len() {
            return Err(Error::shape(self.ecdfs.len(), row.len()));
        }
        let z = z_quantile(level)?;
        let phi = standard_normal();
        let scores: Vec<f64> = row.iter().zip(&self.ecdfs).map(|(x, e)| phi.inverse_cdf(e.cdf(*x))).collect();
        let s = split_row(&scores, self.target).dot(&DVector::from_column_slice(&self.weights));
        let half = z * self.mspe.sqrt();
        let back = |v: f64| self.ecdfs[self.target].quantile(phi.cdf(v));
        Ok(GaussianInterval { point: back(s), lo: back(s - half), hi: back(s + half) })
    }
}

/// Best linear predictor and MSPE interval on the raw data scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawGaussianReference {
    mean: Vec<f64>,
    target: usize,
    weights: Vec<f64>,
    mspe: f64,
}

impl RawGaussianReference {
    pub fn fit(train: &DMatrix<f64>, target: usize) -> Result<Self> {
        check_fit_input(train, target)?;
        let (mean, cov) = covariance(train);
        let (weights, mspe) = blup(&cov, target)?;
        Ok(Self { mean: mean.iter().cloned().collect(), target, weights, mspe })
    }

    pub fn interval(&self, row: &[f64], level: f64) -> Result<GaussianInterval> {
        if row.len() != self.mean.len() {
            return Err(Error::shape(self.mean.len(), row.len()));
        }
        let z = z_quantile(level)?;
        let centered: Vec<f64> = row.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        let point =
            self.mean[self.target] + split_row(&centered, self.target).dot(&DVector::from_column_slice(&self.weights));
        let half = z * self.mspe.sqrt();
        Ok(GaussianInterval { point, lo: point - half, hi: point + half })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_pair(n: usize, rho: f64, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::zeros(n, 2);
        for i in 0..n {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            m[(i, 0)] = a;
            m[(i, 1)] = rho * a + (1.0 - rho * rho).sqrt() * b;
        }
        m
    }

    #[test]
    fn ecdf_round_trip() {
        let e = Ecdf::new([3.0, 1.0, 2.0].into_iter());
        assert_relative_eq!(e.cdf(2.0), 0.5);
        assert_relative_eq!(e.quantile(0.5), 2.0);
        assert_relative_eq!(e.cdf(-5.0), 0.25);
        assert_relative_eq!(e.quantile(0.01), 1.0);
        assert_relative_eq!(e.quantile(e.cdf(2.5)), 2.5);
    }

    #[test]
    fn gaussian_data_is_covered_at_nominal_rate() {
        let train = gaussian_pair(20_000, 0.7, 1);
        let test = gaussian_pair(5_000, 0.7, 2);
        let ns = GaussianReference::fit(&train, 1).unwrap();
        let raw = RawGaussianReference::fit(&train, 1).unwrap();
        assert!((ns.weights()[0] - 0.7).abs() < 0.03);
        assert!((ns.mspe() - 0.51).abs() < 0.03);
        for (name, cover) in [
            (
                "scores",
                (0..5000)
                    .filter(|&i| {
                        let row = [test[(i, 0)], test[(i, 1)]];
                        let iv = ns.interval(&row, 0.95).unwrap();
                        iv.lo <= row[1] && row[1] <= iv.hi
                    })
                    .count(),
            ),
            (
                "raw",
                (0..5000)
                    .filter(|&i| {
                        let row = [test[(i, 0)], test[(i, 1)]];
                        let iv = raw.interval(&row, 0.95).unwrap();
                        iv.lo <= row[1] && row[1] <= iv.hi
                    })
                    .count(),
            ),
        ] {
            let rate = cover as f64 / 5000.0;
            assert!((0.935..=0.965).contains(&rate), "{name}: {rate}");
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let train = gaussian_pair(100, 0.5, 3);
        assert!(GaussianReference::fit(&train, 2).is_err());
        let ns = GaussianReference::fit(&train, 0).unwrap();
        assert!(ns.interval(&[1.0], 0.95).is_err());
        assert!(ns.interval(&[1.0, 2.0], 1.0).is_err());
    }
}
