//! Simulation study: data from a random nonnegative generator, a tail
//! predictor fitted on a training block, and joint-region and interval
//! coverage on the held-out rows, with Gaussian references for contrast.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angular::{assess_coverage, joint_fraction, Bandwidth, JointRegion};
use crate::error::{Error, Result};
use crate::model::{FitSettings, TailPredictor};
use crate::reference::{GaussianReference, RawGaussianReference};
use crate::sim::{derive_seed, simulate_x, uniform_generator, ParetoSpec};
use crate::stats::quantile;
use crate::tpdm::{estimate_pairwise, tpdm_of_generator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub p: usize,
    pub q: usize,
    pub n: usize,
    pub n_train: usize,
    pub generator_range: (f64, f64),
    pub tpdm_quantile: f64,
    pub qstar: usize,
    pub n_decomp: usize,
    pub bandwidth: Bandwidth,
    pub level: f64,
    pub filter_quantile: f64,
    pub radial_quantile: f64,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            p: 7,
            q: 400,
            n: 60_000,
            n_train: 40_000,
            generator_range: (0.0, 5.0),
            tpdm_quantile: 0.99,
            qstar: 9,
            n_decomp: 51,
            bandwidth: Bandwidth::Auto,
            level: 0.95,
            filter_quantile: 0.95,
            radial_quantile: 0.95,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub seed: u64,
    pub k: f64,
    pub region: JointRegion,
    pub joint_fraction: f64,
    pub n_joint: usize,
    pub coverage: f64,
    pub n_retained: usize,
    pub unit_interval: (f64, f64),
    pub bandwidth: f64,
    /// Largest entrywise error of the unit-diagonal estimated TPDM.
    pub tpdm_max_error: f64,
    pub gaussian_coverage: f64,
    pub gaussian_raw_coverage: f64,
}

/// Generator, seeds and simulated rows for one study instance.
pub struct StudyData {
    pub generator: crate::translin::GeneratorMatrix,
    pub x: DMatrix<f64>,
}

pub fn simulate_study_data(cfg: &StudyConfig) -> StudyData {
    let (lo, hi) = cfg.generator_range;
    let generator = uniform_generator(cfg.p, cfg.q, lo, hi, derive_seed(cfg.seed, 0));
    let x = simulate_x(&generator, cfg.n, ParetoSpec::centered(), derive_seed(cfg.seed, 1));
    StudyData { generator, x }
}

pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    if cfg.n_train >= cfg.n || cfg.p < 2 {
        return Err(Error::InvalidArgument("need p ≥ 2 and a nonempty test block".into()));
    }
    let data = simulate_study_data(cfg);
    let target = cfg.p - 1;
    let truth = tpdm_of_generator(&data.generator);
    let tail_ratios: Vec<f64> = truth.matrix().diagonal().iter().cloned().collect();
    let train = data.x.rows(0, cfg.n_train).into_owned();
    let test = data.x.rows(cfg.n_train, cfg.n - cfg.n_train).into_owned();

    let tpdm = estimate_pairwise(&train, cfg.tpdm_quantile, &tail_ratios)?;
    let tpdm_max_error = (tpdm.normalized() - truth.normalized()).amax();
    let settings = FitSettings {
        qstar: cfg.qstar,
        n_decomp: cfg.n_decomp,
        seed: derive_seed(cfg.seed, 2),
        bandwidth: cfg.bandwidth,
        region_level: cfg.level,
    };
    let model = TailPredictor::fit(&tpdm, target, &settings)?;

    let rows: Vec<Vec<f64>> = test.row_iter().map(|r| r.iter().cloned().collect()).collect();
    let pairs: Vec<(f64, f64)> =
        rows.par_iter().map(|row| Ok((model.predict_row(row)?, row[target]))).collect::<Result<_>>()?;
    let (joint, n_joint) = joint_fraction(&model.region, &pairs, cfg.radial_quantile)?;
    let cover = assess_coverage(&model.density, &pairs, cfg.filter_quantile, cfg.level)?;

    // Gaussian references on the same retained rows
    let preds: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let cut = quantile(&preds, cfg.filter_quantile);
    let retained: Vec<&Vec<f64>> = rows.iter().zip(&preds).filter(|(_, &p)| p > cut).map(|(r, _)| r).collect();
    let ns = GaussianReference::fit(&train, target)?;
    let raw = RawGaussianReference::fit(&train, target)?;
    let mut ns_in = 0usize;
    let mut raw_in = 0usize;
    for row in &retained {
        let t = row[target];
        let a = ns.interval(row, cfg.level)?;
        let b = raw.interval(row, cfg.level)?;
        ns_in += usize::from(a.lo <= t && t <= a.hi);
        raw_in += usize::from(b.lo <= t && t <= b.hi);
    }
    let m = retained.len() as f64;

    Ok(StudyReport {
        seed: cfg.seed,
        k: model.k,
        region: model.region,
        joint_fraction: joint,
        n_joint,
        coverage: cover.coverage,
        n_retained: cover.n_retained,
        unit_interval: cover.unit_interval,
        bandwidth: model.density.bandwidth(),
        tpdm_max_error,
        gaussian_coverage: ns_in as f64 / m,
        gaussian_raw_coverage: raw_in as f64 / m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_study_runs() {
        let cfg =
            StudyConfig { p: 3, q: 20, n: 6000, n_train: 4000, tpdm_quantile: 0.95, n_decomp: 5, ..Default::default() };
        let r = run_study(&cfg).unwrap();
        assert!((0.0..=1.0).contains(&r.joint_fraction));
        assert!(r.n_retained >= 99 && r.n_retained <= 100);
        assert!(r.unit_interval.0 < r.unit_interval.1);
        assert_eq!(run_study(&cfg).unwrap(), r);
    }
}
