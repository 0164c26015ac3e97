//! Best transformed-linear predictor from a partitioned TPDM, its prediction
//! error `K`, the `D` statistic, and the 2×2 prediction inner-product matrix.

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::ParetoSpec;
use crate::tpdm::Tpdm;
use crate::translin::{softplus_inv_unchecked, softplus_unchecked};

pub const MAX_CONDITION: f64 = 1e12;
pub const NORMAL_EQUATION_TOL: f64 = 1e-10;

/// TPDM split into predictors (Σ₁₁, Σ₁₂) and target (Σ₂₂).
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedTpdm {
    pub s11: DMatrix<f64>,
    pub s12: DVector<f64>,
    pub s22: f64,
    pub target: usize,
}

impl PartitionedTpdm {
    pub fn from_tpdm(tpdm: &Tpdm, target: usize) -> Result<Self> {
        Self::from_matrix(tpdm.matrix(), target)
    }

    pub fn from_matrix(m: &DMatrix<f64>, target: usize) -> Result<Self> {
        let d = m.nrows();
        if target >= d {
            return Err(Error::InvalidArgument(format!(
                "target index {target} out of range for a {d}-dimensional TPDM"
            )));
        }
        if d < 2 {
            return Err(Error::InvalidArgument("need at least one predictor".into()));
        }
        let keep: Vec<usize> = (0..d).filter(|&i| i != target).collect();
        let s11 = DMatrix::from_fn(d - 1, d - 1, |i, j| m[(keep[i], keep[j])]);
        let s12 = DVector::from_fn(d - 1, |i, _| m[(keep[i], target)]);
        let s22 = m[(target, target)];
        if !(s22 > 0.0) {
            return Err(Error::InvalidArgument(format!("target tail ratio must be positive, got {s22}")));
        }
        Ok(Self { s11, s12, s22, target })
    }

    pub fn predictors(&self) -> usize {
        self.s12.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionWeights {
    pub b: Vec<f64>,
}

impl PredictionWeights {
    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.b)
    }
}

fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen().eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `b̂ = Σ₁₁⁻¹Σ₁₂` by Cholesky, escalating diagonal jitter on failure.
pub fn solve_weights(part: &PartitionedTpdm) -> Result<PredictionWeights> {
    let condition = condition_estimate(&part.s11);
    if !(condition < MAX_CONDITION) {
        return Err(Error::Solve { reason: "Σ₁₁ is singular or ill-conditioned".into(), condition });
    }
    let scale = part.s11.diagonal().amax();
    for jitter in [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8] {
        let shifted = &part.s11 + DMatrix::identity(part.predictors(), part.predictors()) * (jitter * scale);
        let Some(chol) = shifted.cholesky() else { continue };
        let mut b = chol.solve(&part.s12);
        // one step of iterative refinement against the unjittered system
        let r = &part.s12 - &part.s11 * &b;
        b += chol.solve(&r);
        let residual = (&part.s11 * &b - &part.s12).amax();
        if residual < NORMAL_EQUATION_TOL * scale.max(1.0) {
            return Ok(PredictionWeights { b: b.iter().cloned().collect() });
        }
    }
    Err(Error::Solve { reason: "Cholesky failed or normal-equation residual too large".into(), condition })
}

/// `t(b̂ᵀ t⁻¹(x))`.
pub fn predict(weights: &PredictionWeights, x: &[f64]) -> Result<f64> {
    if x.len() != weights.b.len() {
        return Err(Error::shape(weights.b.len(), x.len()));
    }
    if let Some((index, &value)) = x.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositive { index, value });
    }
    let pre: f64 = weights.b.iter().zip(x).map(|(b, v)| b * softplus_inv_unchecked(*v)).sum();
    Ok(softplus_unchecked(pre))
}

/// `K = Σ₂₂ − Σ₂₁b̂`, clipped at zero.
pub fn prediction_error_k(part: &PartitionedTpdm, weights: &PredictionWeights) -> f64 {
    (part.s22 - part.s12.dot(&weights.as_vector())).max(0.0)
}

/// `max(a ⊖ b, b ⊖ a) = t(|t⁻¹(a) − t⁻¹(b)|)`.
pub fn d_statistic(x_true: f64, x_pred: f64) -> Result<f64> {
    for (index, value) in [x_true, x_pred].into_iter().enumerate() {
        if !(value > 0.0) {
            return Err(Error::NonPositive { index, value });
        }
    }
    let diff = softplus_inv_unchecked(x_true) - softplus_inv_unchecked(x_pred);
    Ok(softplus_unchecked(diff.abs()))
}

/// Threshold `d*` with `P(D > d*) ≈ 1 − level`, using `TR(D) = K` under the
/// input law: `K (d* + δ)⁻² = 1 − level`.
pub fn d_bound(k: f64, level: f64, spec: ParetoSpec) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {level}")));
    }
    if !(k >= 0.0) {
        return Err(Error::InvalidArgument(format!("K must be nonnegative, got {k}")));
    }
    Ok((k / (1.0 - level)).sqrt() - spec.shift())
}

/// `[[v, v], [v, Σ₂₂]]` with `v = Σ₂₁b̂`.
pub fn prediction_ip_matrix(part: &PartitionedTpdm, weights: &PredictionWeights) -> Result<Matrix2<f64>> {
    let v = part.s12.dot(&weights.as_vector());
    if v > part.s22 + 1e-10 {
        return Err(Error::Numeric(format!(
            "explained tail mass {v} exceeds the target's {}; the TPDM is inconsistent",
            part.s22
        )));
    }
    if v < -1e-10 {
        return Err(Error::Numeric(format!("explained tail mass {v} is negative")));
    }
    let v = v.clamp(0.0, part.s22);
    Ok(Matrix2::new(v, v, v, part.s22))
}
