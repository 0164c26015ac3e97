//! Fitted tail predictor for one target: weights, `K`, the 2×2 prediction
//! matrix, its factor ensemble, the estimated angular measure and density.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::angular::{
    conditional_density, conditional_interval, joint_region, kde_angular, masses_from_ensemble, AngularDensity,
    AngularMeasureEstimate, Bandwidth, JointRegion,
};
use crate::cpfactor::{factor_ensemble, CpFactor, DEFAULT_NDECOMP, DEFAULT_QSTAR, RECONSTRUCTION_TOL};
use crate::error::{Error, Result};
use crate::predictor::{
    predict, prediction_error_k, prediction_ip_matrix, solve_weights, PartitionedTpdm, PredictionWeights,
};
use crate::tpdm::Tpdm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub qstar: usize,
    pub n_decomp: usize,
    pub seed: u64,
    pub bandwidth: Bandwidth,
    /// Angular mass level of the joint region.
    pub region_level: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            qstar: DEFAULT_QSTAR,
            n_decomp: DEFAULT_NDECOMP,
            seed: 0,
            bandwidth: Bandwidth::Auto,
            region_level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailPredictor {
    pub target: usize,
    pub weights: PredictionWeights,
    pub k: f64,
    pub gamma: [[f64; 2]; 2],
    pub factors: Vec<CpFactor>,
    pub atoms: AngularMeasureEstimate,
    pub region: JointRegion,
    pub density: AngularDensity,
}

impl TailPredictor {
    pub fn fit(tpdm: &Tpdm, target: usize, settings: &FitSettings) -> Result<Self> {
        let part = PartitionedTpdm::from_tpdm(tpdm, target)?;
        let weights = solve_weights(&part)?;
        let k = prediction_error_k(&part, &weights);
        let g = prediction_ip_matrix(&part, &weights)?;
        let factors = factor_ensemble(&g, settings.qstar, settings.n_decomp, settings.seed)?;
        let atoms = masses_from_ensemble(&factors)?;
        let region = joint_region(&atoms, settings.region_level)?;
        let density = kde_angular(&atoms, settings.bandwidth)?;
        Ok(Self {
            target,
            weights,
            k,
            gamma: [[g[(0, 0)], g[(0, 1)]], [g[(1, 0)], g[(1, 1)]]],
            factors,
            atoms,
            region,
            density,
        })
    }

    pub fn gamma_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.gamma[0][0], self.gamma[0][1], self.gamma[1][0], self.gamma[1][1])
    }

    /// Prediction from a full row; the target entry is ignored.
    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.weights.b.len() + 1 {
            return Err(Error::shape(self.weights.b.len() + 1, row.len()));
        }
        let x: Vec<f64> = row.iter().enumerate().filter(|(j, _)| *j != self.target).map(|(_, v)| *v).collect();
        predict(&self.weights, &x)
    }

    /// Conditional interval for a unit prediction.
    pub fn unit_interval(&self, level: f64) -> Result<(f64, f64)> {
        conditional_interval(&conditional_density(&self.density, 1.0)?, level)
    }

    /// Internal consistency against the TPDM the predictor was fitted on.
    pub fn verify(&self, tpdm: &Tpdm) -> Result<()> {
        let part = PartitionedTpdm::from_tpdm(tpdm, self.target)?;
        let b = self.weights.as_vector();
        if b.len() != part.predictors() {
            return Err(Error::shape(part.predictors(), b.len()));
        }
        let scale = part.s11.amax().max(1.0);
        let residual = (&part.s11 * &b - &part.s12).amax();
        if residual > 1e-10 * scale {
            return Err(Error::Numeric(format!("weights violate the normal equations (residual {residual:.3e})")));
        }
        let v = part.s12.dot(&b);
        if (self.k - (part.s22 - v).max(0.0)).abs() > 1e-12 * scale {
            return Err(Error::Numeric("stored K disagrees with the TPDM".into()));
        }
        let g = self.gamma_matrix();
        if (g - Matrix2::new(v, v, v, part.s22)).amax() > 1e-12 * scale {
            return Err(Error::Numeric("stored prediction matrix disagrees with the TPDM".into()));
        }
        for (k, f) in self.factors.iter().enumerate() {
            if f.b.min() < 0.0 || (f.gram() - g).norm() > RECONSTRUCTION_TOL * g.norm() {
                return Err(Error::Numeric(format!("factor {k} fails the reconstruction check")));
            }
        }
        if (self.atoms.total_mass - g.trace()).abs() > 1e-6 * g.trace().max(1.0) {
            return Err(Error::Numeric(format!(
                "angular mass {} differs from trace(Γ) = {}",
                self.atoms.total_mass,
                g.trace()
            )));
        }
        Ok(())
    }
}
