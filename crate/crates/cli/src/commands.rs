use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tlpred_core::angular::{conditional_density, coverage_rate};
use tlpred_core::harness::{run_study, simulate_study_data, StudyConfig, StudyReport};
use tlpred_core::io::{write_matrix_csv, Dataset};
use tlpred_core::pipeline::{
    fit_model, gaussian_reference, predict_rows, FitConfig, MarginalMode, ModelDocument, PredictOptions, Split, Subset,
};
use tlpred_core::tpdm::{tpdm_of_generator, Tpdm};

use crate::config::{parse_seeds, Config};
use crate::error::CliError;
use crate::{AssessArgs, FitArgs, MarginalArg, PredictArgs, ReplicateArgs, ScaleArg, SimulateArgs, SubsetArg};

type Result<T> = std::result::Result<T, CliError>;

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| CliError::Argument(format!("{flag} is required")))
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::io(p, e))?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut out = open_output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| CliError::io(path.unwrap_or(Path::new("<stdout>")), e))
}

fn read_dataset(path: &Path, label: Option<&str>) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(Dataset::from_reader(file, label)?)
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:?}")
    }
}

/// Generator and true TPDM of a simulated dataset.
#[derive(Debug, Serialize, Deserialize)]
pub struct Truth {
    pub seed: u64,
    pub names: Vec<String>,
    pub generator: Vec<Vec<f64>>,
    pub tpdm: Tpdm,
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let cfg = Config::load(a.common.config.as_deref())?;
    let seed = required(cfg.or(a.seed, "seed")?, "--seed")?;
    let output: PathBuf = required(cfg.or(a.output, "output")?, "--output")?;
    let p = cfg.or(a.p, "p")?.unwrap_or(7);
    let q = cfg.or(a.q, "q")?.unwrap_or(400);
    let n = cfg.or(a.n, "n")?.unwrap_or(60_000);
    let lo = cfg.or(a.lo, "lo")?.unwrap_or(0.0);
    let hi = cfg.or(a.hi, "hi")?.unwrap_or(5.0);
    if p == 0 || q == 0 {
        return Err(CliError::Argument("p and q must be positive".into()));
    }
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(CliError::Argument(format!("need finite lo < hi, got [{lo}, {hi}]")));
    }
    let study = StudyConfig { p, q, n, generator_range: (lo, hi), seed, ..Default::default() };
    let data = simulate_study_data(&study);
    let names: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    let file = File::create(&output).map_err(|e| CliError::io(&output, e))?;
    write_matrix_csv(BufWriter::new(file), &names, &data.x)?;

    let truth_path = match cfg.or(a.truth, "truth")? {
        Some(t) => t,
        None => output.with_extension("truth.json"),
    };
    let truth = Truth { seed, names, generator: data.generator.to_rows(), tpdm: tpdm_of_generator(&data.generator) };
    write_json(Some(&truth_path), &truth)?;
    eprintln!("wrote {n} rows to {} and truth to {}", output.display(), truth_path.display());
    Ok(())
}

fn read_truth(path: &Path) -> Result<Truth> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let truth: Truth = serde_json::from_str(&text)?;
    if truth.tpdm.dim() != truth.names.len() {
        return Err(CliError::Argument("truth sidecar names and TPDM disagree".into()));
    }
    Ok(truth)
}

#[derive(Debug, Serialize)]
struct FitSummary<'a> {
    target: &'a str,
    n_rows: usize,
    n_train: usize,
    weights: &'a [f64],
    k: f64,
    tpdm_repaired: bool,
    bandwidth: f64,
    unit_interval: (f64, f64),
    #[serde(skip_serializing_if = "Option::is_none")]
    tpdm_max_error: Option<f64>,
}

pub fn fit(a: FitArgs) -> Result<()> {
    let cfg = Config::load(a.common.config.as_deref())?;
    let seed = required(cfg.or(a.seed, "seed")?, "--seed")?;
    let input: PathBuf = required(cfg.or(a.input, "input")?, "--input")?;
    let output: PathBuf = required(cfg.or(a.output, "output")?, "--output")?;
    let target: String = required(cfg.or(a.target, "target")?, "--target")?;
    let label: Option<String> = cfg.or(a.label_column, "label-column")?;
    let truth_path: Option<PathBuf> = cfg.or(a.truth, "truth")?;
    let ds = read_dataset(&input, label.as_deref())?;
    ds.column_index(&target)?;

    let mut fc = FitConfig::new(target.clone());
    fc.seed = seed;
    fc.tpdm_quantile = cfg.or(a.quantile, "quantile")?.unwrap_or(fc.tpdm_quantile);
    fc.qstar = cfg.or(a.qstar, "qstar")?.unwrap_or(fc.qstar);
    fc.n_decomp = cfg.or(a.ndecomp, "ndecomp")?.unwrap_or(fc.n_decomp);
    fc.bandwidth = cfg.bandwidth(a.bandwidth)?;
    fc.window = cfg.or(a.window, "window")?;
    fc.region_level = cfg.or(a.region_level, "region-level")?.unwrap_or(fc.region_level);
    let marginal = cfg.or(a.marginal, "marginal")?;
    fc.marginal = match marginal {
        Some(MarginalArg::None) => MarginalMode::None,
        Some(MarginalArg::Empirical) => MarginalMode::Empirical,
        Some(MarginalArg::Gpd) => MarginalMode::Gpd,
        None if truth_path.is_some() => MarginalMode::None,
        None => MarginalMode::Gpd,
    };
    if cfg.flag(a.no_gpd_tail, "no-gpd-tail")? {
        if marginal.is_some_and(|m| matches!(m, MarginalArg::Gpd)) {
            return Err(CliError::Argument("--no-gpd-tail contradicts --marginal gpd".into()));
        }
        if fc.marginal == MarginalMode::Gpd {
            fc.marginal = MarginalMode::Empirical;
        }
    }
    let train_rows: Option<usize> = cfg.or(a.train_rows, "train-rows")?;
    let train_fraction: Option<f64> = cfg.or(a.train_fraction, "train-fraction")?;
    fc.split = match (train_rows, train_fraction) {
        (Some(_), Some(_)) => return Err(CliError::Argument("give only one of train-rows and train-fraction".into())),
        (Some(k), None) => Split::FirstRows(k),
        (None, Some(f)) => Split::Fraction(f),
        (None, None) => fc.split,
    };

    let truth = truth_path.as_deref().map(read_truth).transpose()?;
    if let Some(t) = &truth {
        if fc.marginal == MarginalMode::None {
            let ratios =
                ds.names
                    .iter()
                    .map(|name| {
                        let j = t.names.iter().position(|n| n == name).ok_or_else(|| {
                            CliError::Argument(format!("column '{name}' is not in the truth sidecar"))
                        })?;
                        Ok(t.tpdm.matrix()[(j, j)])
                    })
                    .collect::<Result<Vec<f64>>>()?;
            fc.tail_ratios = Some(ratios);
        }
    }

    let doc = fit_model(&ds, &fc)?;
    doc.save(&output)?;

    let tpdm_max_error = match &truth {
        Some(t) => {
            let order: Vec<usize> =
                ds.names.iter().map(|name| t.names.iter().position(|n| n == name).unwrap_or(usize::MAX)).collect();
            let est = doc.tpdm.normalized();
            let tru = t.tpdm.normalized();
            let mut worst = 0.0f64;
            for i in 0..order.len() {
                for j in 0..order.len() {
                    worst = worst.max((est[(i, j)] - tru[(order[i], order[j])]).abs());
                }
            }
            Some(worst)
        }
        None => None,
    };
    let summary = FitSummary {
        target: doc.target(),
        n_rows: doc.n_rows,
        n_train: doc.train_rows.len(),
        weights: &doc.predictor.weights.b,
        k: doc.predictor.k,
        tpdm_repaired: doc.tpdm.was_repaired(),
        bandwidth: doc.predictor.density.bandwidth(),
        unit_interval: doc.predictor.unit_interval(0.95)?,
        tpdm_max_error,
    };
    eprintln!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let cfg = Config::load(a.common.config.as_deref())?;
    let model: PathBuf = required(cfg.or(a.model, "model")?, "--model")?;
    let input: PathBuf = required(cfg.or(a.input, "input")?, "--input")?;
    let output: Option<PathBuf> = cfg.or(a.output, "output")?;
    let label: Option<String> = cfg.or(a.label_column, "label-column")?;
    let density_out: Option<PathBuf> = cfg.or(a.density_out, "density-out")?;
    let defaults = PredictOptions::default();
    let opts = PredictOptions {
        filter_quantile: cfg.or(a.quantile, "quantile")?.unwrap_or(defaults.filter_quantile),
        level: cfg.or(a.level, "level")?.unwrap_or(defaults.level),
        subset: match cfg.or(a.subset, "subset")?.unwrap_or(SubsetArg::All) {
            SubsetArg::All => Subset::All,
            SubsetArg::Train => Subset::Train,
            SubsetArg::Test => Subset::Test,
        },
    };
    let doc = ModelDocument::load(&model)?;
    let ds = read_dataset(&input, label.as_deref())?;
    let rows = predict_rows(&doc, &ds, &opts)?;

    let mut w = csv::Writer::from_writer(open_output(output.as_deref())?);
    let has_label = ds.labels.is_some();
    let has_original = doc.marginals.is_some();
    let mut header = vec!["row"];
    if has_label {
        header.push("label");
    }
    header.extend(["x_hat", "lo", "hi", "truth"]);
    if has_original {
        header.extend(["x_hat_original", "lo_original", "hi_original", "truth_original"]);
    }
    w.write_record(&header)?;
    for r in &rows {
        let mut rec = vec![r.row.to_string()];
        if has_label {
            rec.push(r.label.clone().unwrap_or_default());
        }
        let m = r.model;
        rec.extend([fmt(m.point), fmt(m.lo), fmt(m.hi), fmt(m.truth.unwrap_or(f64::NAN))]);
        if let Some(o) = r.original {
            rec.extend([fmt(o.point), fmt(o.lo), fmt(o.hi), fmt(o.truth.unwrap_or(f64::NAN))]);
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(output.as_deref().unwrap_or(Path::new("<stdout>")), e))?;

    if let Some(path) = density_out {
        let f = conditional_density(&doc.predictor.density, 1.0)?;
        let mut w = csv::Writer::from_writer(open_output(Some(&path))?);
        w.write_record(["u", "density", "cdf"])?;
        for ((u, d), c) in f.grid().iter().zip(f.density()).zip(f.cdf_grid()) {
            w.write_record([fmt(*u), fmt(d), fmt(*c)])?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    eprintln!("{} rows above the {} prediction quantile", rows.len(), opts.filter_quantile);
    Ok(())
}

#[derive(Debug, Serialize)]
struct ReferenceReport {
    level: f64,
    coverage: f64,
    mean_width: f64,
}

#[derive(Debug, Serialize)]
struct AssessReport {
    scale: &'static str,
    n_rows: usize,
    n_retained: usize,
    coverage: f64,
    mean_width: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference: Option<ReferenceReport>,
    /// Mean over rows of interval width divided by reference width.
    #[serde(skip_serializing_if = "Option::is_none")]
    width_ratio: Option<f64>,
}

fn column(ds: &Dataset, name: &str) -> Result<Vec<f64>> {
    let j = ds.column_index(name)?;
    Ok(ds.values.column(j).iter().cloned().collect())
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

pub fn assess(a: AssessArgs) -> Result<()> {
    let cfg = Config::load(a.common.config.as_deref())?;
    let input: PathBuf = required(cfg.or(a.input, "input")?, "--input")?;
    let output: Option<PathBuf> = cfg.or(a.output, "output")?;
    let model: Option<PathBuf> = cfg.or(a.model, "model")?;
    let data: Option<PathBuf> = cfg.or(a.data, "data")?;
    let label: Option<String> = cfg.or(a.label_column, "label-column")?;
    let level = cfg.or(a.level, "level")?.unwrap_or(0.95);

    let text = std::fs::read_to_string(&input).map_err(|e| CliError::io(&input, e))?;
    let has_label = text.lines().next().is_some_and(|h| h.split(',').any(|c| c.trim() == "label"));
    let preds = Dataset::from_reader(text.as_bytes(), has_label.then_some("label"))?;
    let has_original = preds.column_index("lo_original").is_ok();
    let scale = match cfg.or(a.scale, "scale")? {
        Some(ScaleArg::Original) if !has_original => {
            return Err(CliError::Argument("predictions have no original-scale columns".into()))
        }
        Some(ScaleArg::Original) => true,
        Some(ScaleArg::Model) => false,
        None => has_original,
    };
    let suffix = if scale { "_original" } else { "" };
    let lo = column(&preds, &format!("lo{suffix}"))?;
    let hi = column(&preds, &format!("hi{suffix}"))?;
    let truth = column(&preds, &format!("truth{suffix}"))?;
    let keep: Vec<usize> = (0..truth.len()).filter(|&i| !truth[i].is_nan()).collect();
    let intervals: Vec<(f64, f64)> = keep.iter().map(|&i| (lo[i], hi[i])).collect();
    let truths: Vec<f64> = keep.iter().map(|&i| truth[i]).collect();
    let widths: Vec<f64> = intervals.iter().map(|(l, h)| h - l).collect();

    let (reference, width_ratio) = match (model, data) {
        (Some(model), Some(data)) => {
            let doc = ModelDocument::load(&model)?;
            if doc.marginals.is_some() && !scale {
                return Err(CliError::Argument("the reference lives on the original scale; drop --scale model".into()));
            }
            let ds = read_dataset(&data, label.as_deref())?;
            let rows_col = column(&preds, "row")?;
            let rows: Vec<usize> = keep.iter().map(|&i| rows_col[i] as usize).collect();
            let refs = gaussian_reference(&doc, &ds, &rows, level)?;
            let ref_intervals: Vec<(f64, f64)> = refs.iter().map(|g| (g.lo, g.hi)).collect();
            let ratio = mean(widths.iter().zip(&refs).filter(|(_, g)| g.hi > g.lo).map(|(w, g)| w / (g.hi - g.lo)));
            let report = ReferenceReport {
                level,
                coverage: coverage_rate(&ref_intervals, &truths),
                mean_width: mean(refs.iter().map(|g| g.hi - g.lo)),
            };
            (Some(report), Some(ratio))
        }
        _ => (None, None),
    };
    let report = AssessReport {
        scale: if scale { "original" } else { "model" },
        n_rows: preds.nrows(),
        n_retained: keep.len(),
        coverage: coverage_rate(&intervals, &truths),
        mean_width: mean(widths.iter().cloned()),
        reference,
        width_ratio,
    };
    write_json(output.as_deref(), &report)
}

#[derive(Debug, Serialize)]
struct ReplicateReport {
    config: StudyConfig,
    seeds: Vec<u64>,
    mean_coverage: f64,
    mean_joint_fraction: f64,
    runs: Vec<StudyReport>,
}

pub fn replicate(a: ReplicateArgs) -> Result<()> {
    let cfg = Config::load(a.common.config.as_deref())?;
    let seeds = match a.seeds {
        Some(s) => parse_seeds(&s).map_err(CliError::Argument)?,
        None => match cfg.get::<toml::Value>("seeds")? {
            Some(toml::Value::String(s)) => parse_seeds(&s).map_err(CliError::Argument)?,
            Some(_) => cfg.get::<Vec<u64>>("seeds")?.unwrap_or_default(),
            None => return Err(CliError::Argument("--seeds is required".into())),
        },
    };
    if seeds.is_empty() {
        return Err(CliError::Argument("--seeds is empty".into()));
    }
    let d = StudyConfig::default();
    let study = StudyConfig {
        p: cfg.or(a.p, "p")?.unwrap_or(d.p),
        q: cfg.or(a.q, "q")?.unwrap_or(d.q),
        n: cfg.or(a.n, "n")?.unwrap_or(d.n),
        n_train: cfg.or(a.n_train, "n-train")?.unwrap_or(d.n_train),
        tpdm_quantile: cfg.or(a.quantile, "quantile")?.unwrap_or(d.tpdm_quantile),
        qstar: cfg.or(a.qstar, "qstar")?.unwrap_or(d.qstar),
        n_decomp: cfg.or(a.ndecomp, "ndecomp")?.unwrap_or(d.n_decomp),
        bandwidth: cfg.bandwidth(a.bandwidth)?,
        level: cfg.or(a.level, "level")?.unwrap_or(d.level),
        ..d
    };
    let output: Option<PathBuf> = cfg.or(a.output, "output")?;
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        let r = run_study(&StudyConfig { seed, ..study })?;
        eprintln!(
            "seed {seed}: coverage {:.4} ({} rows), joint fraction {:.4}, gaussian {:.4}",
            r.coverage, r.n_retained, r.joint_fraction, r.gaussian_coverage
        );
        runs.push(r);
    }
    let report = ReplicateReport {
        config: study,
        mean_coverage: mean(runs.iter().map(|r| r.coverage)),
        mean_joint_fraction: mean(runs.iter().map(|r| r.joint_fraction)),
        seeds,
        runs,
    };
    write_json(output.as_deref(), &report)
}
