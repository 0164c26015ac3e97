//! Completely positive factorization `BBᵀ = Γ`, `B ≥ 0`, of the 2×2
//! prediction inner-product matrix, by alternating projections between the
//! orthogonal orbit of a Cholesky factor and the nonnegative orthant.

use nalgebra::{DMatrix, Matrix2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::derive_seed;

pub const DEFAULT_QSTAR: usize = 9;
pub const DEFAULT_NDECOMP: usize = 51;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const RESTART_BUDGET: usize = 20;
pub const RECONSTRUCTION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpFactor {
    #[serde(with = "crate::serde_rows")]
    pub b: DMatrix<f64>,
    pub seed: u64,
    pub iterations: usize,
}

impl CpFactor {
    pub fn gram(&self) -> Matrix2<f64> {
        let g = &self.b * self.b.transpose();
        Matrix2::new(g[(0, 0)], g[(0, 1)], g[(1, 0)], g[(1, 1)])
    }
}

fn check_gamma(gamma: &Matrix2<f64>) -> Result<()> {
    if gamma.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("Γ has non-finite entries".into()));
    }
    if (gamma[(0, 1)] - gamma[(1, 0)]).abs() > 1e-12 * gamma.amax().max(1.0) {
        return Err(Error::InvalidArgument("Γ is not symmetric".into()));
    }
    let det = gamma[(0, 0)] * gamma[(1, 1)] - gamma[(0, 1)] * gamma[(1, 0)];
    if gamma[(0, 0)] < 0.0 || gamma[(1, 1)] < 0.0 || det < -1e-12 * gamma.norm_squared() {
        return Err(Error::InvalidArgument(format!("Γ is not positive semi-definite (det {det:.3e})")));
    }
    Ok(())
}

/// Lower Cholesky factor of a PSD 2×2 matrix with `Γ₁₁ > 0`.
pub fn cholesky_seed(gamma: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    check_gamma(gamma)?;
    if !(gamma[(0, 0)] > 0.0) {
        return Err(Error::InvalidArgument("Γ₁₁ must be positive".into()));
    }
    let l11 = gamma[(0, 0)].sqrt();
    let l21 = gamma[(1, 0)] / l11;
    let l22 = (gamma[(1, 1)] - l21 * l21).max(0.0).sqrt();
    Ok(Matrix2::new(l11, 0.0, l21, l22))
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `R`'s diagonal absorbed into `Q`.
fn haar_orthogonal(q: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(q, q, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let r = qr.r();
    let mut m = qr.q();
    for j in 0..q {
        if r[(j, j)] < 0.0 {
            m.column_mut(j).neg_mut();
        }
    }
    m
}

fn attempt(b0: &DMatrix<f64>, seed: u64, max_iter: usize, tol: f64) -> Option<(DMatrix<f64>, usize)> {
    let q = b0.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rot = haar_orthogonal(q, &mut rng);
    for it in 0..max_iter {
        let b = b0 * &rot;
        if b.min() >= -tol {
            return Some((b, it));
        }
        let projected = b.map(|v| v.max(0.0));
        // orthogonal Procrustes: argmin_Q ‖B0 Q − P‖_F
        let svd = (b0.transpose() * projected).svd(true, true);
        rot = svd.u? * svd.v_t?;
    }
    None
}

/// Nonnegative `2 × qstar` factor of `Γ`.
///
/// The Cholesky factor padded with zero columns is rotated by a random
/// orthogonal matrix and then alternately projected onto the nonnegative
/// orthant and back onto its orthogonal orbit until no entry is below
/// `-tol`. Failed attempts restart from a fresh seed.
pub fn cp_factorize(gamma: &Matrix2<f64>, qstar: usize, seed: u64, max_iter: usize, tol: f64) -> Result<CpFactor> {
    if qstar < 2 {
        return Err(Error::InvalidArgument(format!("qstar must be at least 2, got {qstar}")));
    }
    check_gamma(gamma)?;
    if gamma.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument("Γ must have nonnegative entries".into()));
    }
    let mut b0 = DMatrix::zeros(2, qstar);
    if gamma[(0, 0)] > 0.0 {
        let l = cholesky_seed(gamma)?;
        b0[(0, 0)] = l[(0, 0)];
        b0[(1, 0)] = l[(1, 0)];
        b0[(1, 1)] = l[(1, 1)];
    } else {
        // no explained mass: the padded seed is already nonnegative
        b0[(1, 0)] = gamma[(1, 1)].sqrt();
        return Ok(CpFactor { b: b0, seed, iterations: 0 });
    }
    let scale = gamma.norm();
    let mut total = 0;
    for restart in 0..RESTART_BUDGET {
        let s = if restart == 0 { seed } else { derive_seed(seed, restart as u64) };
        let Some((b, it)) = attempt(&b0, s, max_iter, tol * scale.max(1.0)) else {
            total += max_iter;
            continue;
        };
        total += it;
        let b = b.map(|v| v.max(0.0));
        let g = &b * b.transpose();
        let err = (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| (g[(i, j)] - gamma[(i, j)]).powi(2))
            .sum::<f64>()
            .sqrt();
        if err <= RECONSTRUCTION_TOL * scale {
            return Ok(CpFactor { b, seed, iterations: total });
        }
    }
    Err(Error::Convergence(format!("no nonnegative factor after {RESTART_BUDGET} restarts of {max_iter} iterations")))
}

/// `n_decomp` factors with seeds `base_seed + k`, computed in parallel and
/// returned in `k` order.
pub fn factor_ensemble(gamma: &Matrix2<f64>, qstar: usize, n_decomp: usize, base_seed: u64) -> Result<Vec<CpFactor>> {
    if n_decomp == 0 {
        return Err(Error::InvalidArgument("n_decomp must be at least 1".into()));
    }
    (0..n_decomp)
        .into_par_iter()
        .map(|k| {
            cp_factorize(gamma, qstar, base_seed.wrapping_add(k as u64), DEFAULT_MAX_ITER, DEFAULT_TOL).map_err(|e| {
                match e {
                    Error::Convergence(msg) => Error::Convergence(format!("factor {k}: {msg}")),
                    other => other,
                }
            })
        })
        .collect()
}
