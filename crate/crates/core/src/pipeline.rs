//! End-to-end fitting on a dataset and prediction with a stored model.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angular::Bandwidth;
use crate::error::{Error, Result};
use crate::io::Dataset;
use crate::marginal::{back_transform, detrend, MarginalOptions, MarginalTransform, TrendModel};
use crate::model::{FitSettings, TailPredictor};
use crate::reference::{GaussianInterval, GaussianReference};
use crate::sim::derive_seed;
use crate::stats::quantile;
use crate::tpdm::{estimate_pairwise, Tpdm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginalMode {
    /// Empirical body with a generalized Pareto tail.
    Gpd,
    /// Empirical CDF throughout.
    Empirical,
    /// Data already on a common heavy-tailed scale.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// Seeded random permutation; this fraction of rows trains.
    Fraction(f64),
    /// The first rows train.
    FirstRows(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub target: String,
    pub tpdm_quantile: f64,
    pub qstar: usize,
    pub n_decomp: usize,
    pub bandwidth: Bandwidth,
    pub seed: u64,
    pub window: Option<usize>,
    pub marginal: MarginalMode,
    pub split: Split,
    /// Known tail ratios, used only without a marginal transform.
    pub tail_ratios: Option<Vec<f64>>,
    pub region_level: f64,
}

impl FitConfig {
    pub fn new(target: impl Into<String>) -> Self {
        Self {
            target: target.into(),
            tpdm_quantile: 0.95,
            qstar: crate::cpfactor::DEFAULT_QSTAR,
            n_decomp: crate::cpfactor::DEFAULT_NDECOMP,
            bandwidth: Bandwidth::Auto,
            seed: 0,
            window: None,
            marginal: MarginalMode::Gpd,
            split: Split::Fraction(2.0 / 3.0),
            tail_ratios: None,
            region_level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: String,
    pub variables: Vec<String>,
    pub target_index: usize,
    pub config: FitConfig,
    /// Number of complete rows in the fitted series.
    pub n_rows: usize,
    pub train_rows: Vec<usize>,
    pub trend: Option<Vec<TrendModel>>,
    pub marginals: Option<Vec<MarginalTransform>>,
    pub tail_ratios: Vec<f64>,
    pub tpdm: Tpdm,
    pub predictor: TailPredictor,
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::InvalidArgument(format!("{name} must lie in (0, 1), got {v}")));
    }
    Ok(())
}

fn train_indices(n: usize, split: Split, seed: u64) -> Result<Vec<usize>> {
    let mut rows: Vec<usize> = match split {
        Split::Fraction(f) => {
            check_unit("train fraction", f)?;
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 10)));
            perm.truncate((f * n as f64).round() as usize);
            perm
        }
        Split::FirstRows(k) => {
            if k > n {
                return Err(Error::InvalidArgument(format!("{k} training rows requested, only {n} available")));
            }
            (0..k).collect()
        }
    };
    rows.sort_unstable();
    Ok(rows)
}

/// Standardizes each column by its moving-window trend.
fn apply_detrend(values: &mut DMatrix<f64>, window: usize) -> Result<Vec<TrendModel>> {
    let mut trends = Vec::with_capacity(values.ncols());
    for j in 0..values.ncols() {
        let col: Vec<f64> = values.column(j).iter().cloned().collect();
        let (out, trend) = detrend(&col, window)?;
        values.column_mut(j).copy_from_slice(&out);
        trends.push(trend);
    }
    Ok(trends)
}

fn to_pareto(values: &DMatrix<f64>, marginals: &[MarginalTransform]) -> Result<DMatrix<f64>> {
    let mut out = values.clone();
    for (j, m) in marginals.iter().enumerate() {
        for i in 0..values.nrows() {
            out[(i, j)] = m.to_pareto_scale(values[(i, j)])?;
        }
    }
    Ok(out)
}

pub fn fit_model(ds: &Dataset, cfg: &FitConfig) -> Result<ModelDocument> {
    check_unit("TPDM quantile", cfg.tpdm_quantile)?;
    check_unit("region level", cfg.region_level)?;
    let p = ds.names.len();
    let target_index = ds.column_index(&cfg.target)?;
    if p < 2 {
        return Err(Error::InvalidArgument("need at least one predictor column".into()));
    }
    let all: Vec<usize> = (0..p).collect();
    let rows = ds.complete_rows(&all);
    let n = rows.len();
    let mut values = ds.select(&rows, &all);

    let trend = cfg.window.map(|w| apply_detrend(&mut values, w)).transpose()?;
    let train_rows = train_indices(n, cfg.split, cfg.seed)?;
    let train_raw = DMatrix::from_fn(train_rows.len(), p, |i, j| values[(train_rows[i], j)]);

    let (marginals, scaled, tail_ratios) = match cfg.marginal {
        MarginalMode::None => {
            let ratios = match &cfg.tail_ratios {
                Some(r) if r.len() == p => r.clone(),
                Some(r) => return Err(Error::shape(format!("{p} tail ratios"), r.len())),
                None => vec![1.0; p],
            };
            (None, train_raw, ratios)
        }
        mode => {
            let options = MarginalOptions { gpd_tail: mode == MarginalMode::Gpd, ..Default::default() };
            let marginals: Vec<MarginalTransform> = (0..p)
                .into_par_iter()
                .map(|j| {
                    let col: Vec<f64> = train_raw.column(j).iter().cloned().collect();
                    MarginalTransform::fit(&col, options).map_err(|e| match e {
                        Error::Fit(msg) => Error::Fit(format!("column '{}': {msg}", ds.names[j])),
                        other => other,
                    })
                })
                .collect::<Result<_>>()?;
            let scaled = to_pareto(&train_raw, &marginals)?;
            (Some(marginals), scaled, vec![1.0; p])
        }
    };

    let tpdm = estimate_pairwise(&scaled, cfg.tpdm_quantile, &tail_ratios)?;
    let settings = FitSettings {
        qstar: cfg.qstar,
        n_decomp: cfg.n_decomp,
        seed: derive_seed(cfg.seed, 2),
        bandwidth: cfg.bandwidth,
        region_level: cfg.region_level,
    };
    let predictor = TailPredictor::fit(&tpdm, target_index, &settings)?;
    Ok(ModelDocument {
        version: env!("CARGO_PKG_VERSION").to_string(),
        variables: ds.names.clone(),
        target_index,
        config: cfg.clone(),
        n_rows: n,
        train_rows,
        trend,
        marginals,
        tail_ratios,
        tpdm,
        predictor,
    })
}

impl ModelDocument {
    pub fn verify(&self) -> Result<()> {
        let p = self.variables.len();
        if self.tpdm.dim() != p || self.target_index >= p || self.tail_ratios.len() != p {
            return Err(Error::shape(format!("{p} variables"), format!("TPDM of size {}", self.tpdm.dim())));
        }
        if self.predictor.target != self.target_index {
            return Err(Error::InvalidArgument("predictor target disagrees with the document".into()));
        }
        if self.train_rows.iter().any(|&r| r >= self.n_rows) {
            return Err(Error::InvalidArgument("training row index out of range".into()));
        }
        if let Some(m) = &self.marginals {
            if m.len() != p {
                return Err(Error::shape(p, m.len()));
            }
        }
        if let Some(t) = &self.trend {
            if t.len() != p || t.iter().any(|t| t.len() != self.n_rows) {
                return Err(Error::InvalidArgument("trend arrays do not match the fitted series".into()));
            }
        }
        for (j, &r) in self.tail_ratios.iter().enumerate() {
            if (self.tpdm.matrix()[(j, j)] - r).abs() > 1e-12 * r.max(1.0) {
                return Err(Error::InvalidArgument(format!("TPDM diagonal {j} differs from its tail ratio")));
            }
        }
        self.predictor.verify(&self.tpdm)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text)?;
        doc.verify()?;
        Ok(doc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn target(&self) -> &str {
        &self.variables[self.target_index]
    }

    pub fn test_rows(&self) -> Vec<usize> {
        let mut is_train = vec![false; self.n_rows];
        for &r in &self.train_rows {
            is_train[r] = true;
        }
        (0..self.n_rows).filter(|&r| !is_train[r]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    All,
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictOptions {
    /// Keep rows whose prediction exceeds this quantile of all predictions.
    pub filter_quantile: f64,
    pub level: f64,
    pub subset: Subset,
}

impl Default for PredictOptions {
    fn default() -> Self {
        Self { filter_quantile: 0.95, level: 0.95, subset: Subset::All }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub truth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    /// Index among the rows used for prediction.
    pub row: usize,
    pub label: Option<String>,
    /// Model (heavy-tailed) scale.
    pub model: Interval,
    /// Original data scale, when marginal transforms are present.
    pub original: Option<Interval>,
}

/// Rows of `ds` aligned with the model's series, and their model-scale values.
struct Prepared {
    source_rows: Vec<usize>,
    raw: DMatrix<f64>,
    scaled: DMatrix<f64>,
}

fn prepare(doc: &ModelDocument, ds: &Dataset) -> Result<Prepared> {
    let columns: Vec<usize> = doc.variables.iter().map(|v| ds.column_index(v)).collect::<Result<_>>()?;
    let needed: Vec<usize> = if doc.trend.is_some() {
        columns.clone()
    } else {
        columns.iter().enumerate().filter(|(j, _)| *j != doc.target_index).map(|(_, c)| *c).collect()
    };
    let source_rows = ds.complete_rows(&needed);
    if doc.trend.is_some() && source_rows.len() != doc.n_rows {
        return Err(Error::InvalidArgument(format!(
            "detrended model covers {} rows but the input has {} complete rows",
            doc.n_rows,
            source_rows.len()
        )));
    }
    let raw = ds.select(&source_rows, &columns);
    let mut scaled = raw.clone();
    if let Some(trends) = &doc.trend {
        for (j, t) in trends.iter().enumerate() {
            for i in 0..scaled.nrows() {
                scaled[(i, j)] = t.standardize(raw[(i, j)], i)?;
            }
        }
    }
    if let Some(marginals) = &doc.marginals {
        for (j, m) in marginals.iter().enumerate() {
            for i in 0..scaled.nrows() {
                let v = scaled[(i, j)];
                if !v.is_nan() {
                    scaled[(i, j)] = m.to_pareto_scale(v)?;
                }
            }
        }
    }
    Ok(Prepared { source_rows, raw, scaled })
}

fn subset_rows(doc: &ModelDocument, n: usize, subset: Subset) -> Result<Vec<usize>> {
    if subset != Subset::All && n != doc.n_rows {
        return Err(Error::InvalidArgument(format!(
            "train/test subsets need the fitted series ({} rows), input has {n}",
            doc.n_rows
        )));
    }
    Ok(match subset {
        Subset::All => (0..n).collect(),
        Subset::Train => doc.train_rows.clone(),
        Subset::Test => doc.test_rows(),
    })
}

/// Predictions and conditional intervals for rows whose prediction exceeds
/// the filter quantile.
pub fn predict_rows(doc: &ModelDocument, ds: &Dataset, opts: &PredictOptions) -> Result<Vec<PredictionRow>> {
    check_unit("filter quantile", opts.filter_quantile)?;
    check_unit("level", opts.level)?;
    let prep = prepare(doc, ds)?;
    let rows = subset_rows(doc, prep.scaled.nrows(), opts.subset)?;
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let t = doc.target_index;
    let preds: Vec<f64> = rows
        .par_iter()
        .map(|&i| {
            let mut row: Vec<f64> = prep.scaled.row(i).iter().cloned().collect();
            row[t] = 1.0;
            doc.predictor.predict_row(&row)
        })
        .collect::<Result<_>>()?;
    let cut = quantile(&preds, opts.filter_quantile);
    let (u_lo, u_hi) = doc.predictor.unit_interval(opts.level)?;

    let mut out = Vec::new();
    for (&i, &x_hat) in rows.iter().zip(&preds) {
        if !(x_hat > cut) {
            continue;
        }
        let truth = Some(prep.scaled[(i, t)]).filter(|v| !v.is_nan());
        let model = Interval { point: x_hat, lo: u_lo * x_hat, hi: u_hi * x_hat, truth };
        let original = match &doc.marginals {
            Some(m) => {
                let trend = doc.trend.as_ref().map(|tr| &tr[t]);
                let back = |z: f64| back_transform(&m[t], trend, i, z);
                Some(Interval {
                    point: back(model.point)?,
                    lo: back(model.lo)?,
                    hi: back(model.hi)?,
                    truth: Some(prep.raw[(i, t)]).filter(|v| !v.is_nan()),
                })
            }
            None => None,
        };
        let label = ds.labels.as_ref().map(|l| l[prep.source_rows[i]].clone());
        out.push(PredictionRow { row: i, label, model, original });
    }
    Ok(out)
}

/// Normal-scores Gaussian reference fitted on the model's training rows of
/// `ds` (original scale), evaluated at prediction rows as numbered by
/// [`predict_rows`].
pub fn gaussian_reference(
    doc: &ModelDocument,
    ds: &Dataset,
    rows: &[usize],
    level: f64,
) -> Result<Vec<GaussianInterval>> {
    let columns: Vec<usize> = doc.variables.iter().map(|v| ds.column_index(v)).collect::<Result<_>>()?;
    let complete = ds.complete_rows(&columns);
    if complete.len() != doc.n_rows {
        return Err(Error::InvalidArgument(format!(
            "reference needs the fitted series ({} rows), input has {}",
            doc.n_rows,
            complete.len()
        )));
    }
    let train_source: Vec<usize> = doc.train_rows.iter().map(|&r| complete[r]).collect();
    let train = ds.select(&train_source, &columns);
    let reference = GaussianReference::fit(&train, doc.target_index)?;
    let prep = prepare(doc, ds)?;
    rows.iter()
        .map(|&r| {
            if r >= prep.raw.nrows() {
                return Err(Error::InvalidArgument(format!("row {r} out of range")));
            }
            let row: Vec<f64> = prep.raw.row(r).iter().cloned().collect();
            reference.interval(&row, level)
        })
        .collect()
}
