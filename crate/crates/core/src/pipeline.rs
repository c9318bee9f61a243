//! End-to-end stages. Each stage reads and writes only declared files so it
//! can be rerun on its own.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::anomaly::{classify, detect, load_verdicts, save_verdicts, score_matrix, Detection, ScoreSeries, ThresholdModel, VerdictRow};
use crate::autoencoder::{build, check_gradients, train, ModelConfig, ModelWeights, TrainReport};
use crate::error::{Error, Result};
use crate::eval::{emit_report, roc_points, write_roc_points, MetricsReport, ReportFormat, RunMetadata};
use crate::ingest::{assemble_test_set, load_dataset, save_flows, split_benign, Dataset, FeatureSpec, Scaler};
use crate::lstm::GradCheckReport;
use crate::matrix::Matrix;
use crate::windowing::{make_windows, WindowConfig};

/// Attack label written into preprocessed test files.
pub const ATTACK_LABEL: &str = "ATTACK";

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub features: FeatureSpec,
    pub train_fraction: f64,
    pub attack_fraction: f64,
    pub seed: u64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            features: FeatureSpec::default(),
            train_fraction: 0.8,
            attack_fraction: 0.005,
            seed: 0,
        }
    }
}

/// Raw training and test splits plus the scaler fitted on the training split.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub train: Dataset,
    pub test: Dataset,
    pub scaler: Scaler,
    pub skipped: usize,
    pub warnings: Vec<String>,
}

pub struct PreprocessPaths {
    pub train: PathBuf,
    pub test: PathBuf,
    pub scaler: PathBuf,
}

/// Pools benign and attack rows from every input, takes the benign training
/// split, and builds the test set from the held-out benign rows and an
/// attack sample.
pub fn preprocess<P: AsRef<Path>>(inputs: &[P], cfg: &PreprocessConfig) -> Result<Preprocessed> {
    if inputs.is_empty() {
        return Err(Error::Parameter("no input files".into()));
    }
    let m = cfg.features.len();
    let mut benign = Dataset::new(Matrix::zeros(0, m), vec![])?;
    let mut attack = benign.clone();
    let mut skipped = 0;
    for path in inputs {
        let (ds, parsed) = load_dataset(path, &cfg.features)?;
        skipped += parsed.skipped();
        benign = benign.concat(&ds.with_label(0))?;
        attack = attack.concat(&ds.with_label(1))?;
    }
    let (train_raw, held_out) = split_benign(&benign, cfg.train_fraction, cfg.seed)?;
    let (test, warnings) = assemble_test_set(&held_out, &attack, cfg.attack_fraction, cfg.seed)?;
    let scaler = Scaler::fit(&train_raw.matrix)?;
    Ok(Preprocessed {
        train: train_raw,
        test,
        scaler,
        skipped,
        warnings,
    })
}

impl Preprocessed {
    /// Writes `train.csv`, `test.csv` and `scaler.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, features: &FeatureSpec) -> Result<PreprocessPaths> {
        let dir = dir.as_ref();
        let paths = PreprocessPaths {
            train: dir.join("train.csv"),
            test: dir.join("test.csv"),
            scaler: dir.join("scaler.json"),
        };
        save_flows(&paths.train, features, &self.train, ATTACK_LABEL)?;
        save_flows(&paths.test, features, &self.test, ATTACK_LABEL)?;
        self.scaler.save(&features.names, &paths.scaler)?;
        Ok(paths)
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub weights: ModelWeights,
    pub scaler: Scaler,
    pub report: TrainReport,
}

/// Fits the scaler on `train_raw` (unless one is supplied), windows the
/// scaled rows and trains a freshly built model.
pub fn train_model(
    train_raw: &Matrix,
    config: &ModelConfig,
    scaler: Option<&Scaler>,
    validation_raw: Option<&Matrix>,
) -> Result<Trained> {
    if train_raw.cols() != config.features {
        return Err(Error::Shape(format!(
            "training data has {} features, model config says {}",
            train_raw.cols(),
            config.features
        )));
    }
    let scaler = match scaler {
        Some(s) => s.clone(),
        None => Scaler::fit(train_raw)?,
    };
    let window = WindowConfig::new(config.timesteps)?;
    let windows = make_windows(&scaler.apply(train_raw)?, window)?;
    let validation = match validation_raw {
        Some(v) => Some(make_windows(&scaler.apply(v)?, window)?),
        None => None,
    };
    let initial = build(config)?;
    let (weights, report) = train(&initial, &windows, validation.as_ref())?;
    Ok(Trained {
        weights,
        scaler,
        report,
    })
}

/// Scores raw rows with the stored scaler and threshold.
pub fn score_raw(raw: &Matrix, tm: &ThresholdModel, weights: &ModelWeights) -> Result<(ScoreSeries, Vec<u8>)> {
    if raw.rows() < tm.window.timesteps {
        return Err(Error::InsufficientData {
            n: raw.rows(),
            t: tm.window.timesteps,
        });
    }
    let scores = score_matrix(weights, &tm.scaler.apply(raw)?)?;
    let verdicts = classify(&scores, tm.threshold);
    Ok((scores, verdicts))
}

/// Builds a report from a verdicts file. Every row must carry a label.
pub fn evaluate_verdicts(rows: &[VerdictRow], run: RunMetadata) -> Result<MetricsReport> {
    let labels = rows
        .iter()
        .map(|r| {
            r.label.ok_or_else(|| {
                Error::Contract(format!("verdict row {} has no ground-truth label", r.row_index))
            })
        })
        .collect::<Result<Vec<u8>>>()?;
    let verdicts: Vec<u8> = rows.iter().map(|r| r.verdict).collect();
    let scores: Vec<f64> = rows.iter().map(|r| r.score).collect();
    MetricsReport::new(&verdicts, &labels, &scores, run)
}

/// File-level training: reads `train_csv`, writes the model and the scaler.
///
/// An existing scaler file is reused instead of refitting when given.
pub fn train_stage(
    train_csv: &Path,
    features: &FeatureSpec,
    config: &ModelConfig,
    scaler_in: Option<&Path>,
    validation_csv: Option<&Path>,
    model_out: &Path,
    scaler_out: &Path,
) -> Result<Trained> {
    let (train_raw, _) = load_dataset(train_csv, features)?;
    let scaler = match scaler_in {
        Some(p) => Some(load_scaler(p, features)?),
        None => None,
    };
    let validation = match validation_csv {
        Some(p) => Some(load_dataset(p, features)?.0.matrix),
        None => None,
    };
    let trained = train_model(&train_raw.matrix, config, scaler.as_ref(), validation.as_ref())?;
    trained.weights.save(model_out)?;
    trained.scaler.save(&features.names, scaler_out)?;
    Ok(trained)
}

/// Loads a scaler file and checks it was fitted on `features`.
pub fn load_scaler(path: &Path, features: &FeatureSpec) -> Result<Scaler> {
    let (scaler, names) = Scaler::load(path)?;
    if names != features.names {
        return Err(Error::Schema {
            column: format!("scaler features {names:?} differ from {:?}", features.names),
        });
    }
    Ok(scaler)
}

/// Path recorded in a thresholds file: the bare file name when the model sits
/// next to the thresholds file, otherwise the path as given.
fn recorded_model_path(model: &Path, thresholds: &Path) -> String {
    let same_dir = match (model.parent(), thresholds.parent()) {
        (Some(a), Some(b)) => a == b,
        _ => false,
    };
    match model.file_name() {
        Some(name) if same_dir => name.to_string_lossy().into_owned(),
        _ => model.display().to_string(),
    }
}

/// Scores the training rows with the saved model and writes the threshold file.
pub fn calibrate_stage(
    model: &Path,
    scaler: &Path,
    train_csv: &Path,
    features: &FeatureSpec,
    out: &Path,
) -> Result<(ThresholdModel, ScoreSeries)> {
    let weights = ModelWeights::load(model)?;
    let scaler = load_scaler(scaler, features)?;
    let (train_raw, _) = load_dataset(train_csv, features)?;
    let (tm, scores) = ThresholdModel::calibrate(
        &weights,
        &scaler,
        features,
        &train_raw.matrix,
        Some(recorded_model_path(model, out)),
    )?;
    tm.save(out)?;
    Ok((tm, scores))
}

/// Scores `input` and writes one verdict per surviving row.
pub fn detect_stage(model: &Path, thresholds: &Path, input: &Path, out: &Path) -> Result<Detection> {
    let weights = ModelWeights::load(model)?;
    let tm = ThresholdModel::load(thresholds)?;
    tm.check_model(&weights)?;
    let detection = detect(input, &tm, &weights)?;
    save_verdicts(out, &detection.rows())?;
    Ok(detection)
}

/// Reads a verdicts file and writes the report, plus ROC points when asked.
pub fn evaluate_stage(
    verdicts: &Path,
    run: RunMetadata,
    format: ReportFormat,
    out: &Path,
    roc_out: Option<&Path>,
) -> Result<MetricsReport> {
    let rows = load_verdicts(verdicts)?;
    let report = evaluate_verdicts(&rows, run)?;
    emit_report(&report, format, out)?;
    if let Some(p) = roc_out {
        let labels: Vec<u8> = rows.iter().map(|r| r.label.unwrap_or(0)).collect();
        let scores: Vec<f64> = rows.iter().map(|r| r.score).collect();
        write_roc_points(p, &roc_points(&scores, &labels)?)?;
    }
    Ok(report)
}

/// One hyperparameter cell of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub window: usize,
    pub batch: usize,
    pub lr: f64,
}

pub fn sweep_grid(windows: &[usize], batches: &[usize], lrs: &[f64]) -> Vec<SweepCell> {
    let mut cells = Vec::new();
    for &window in windows {
        for &batch in batches {
            for &lr in lrs {
                cells.push(SweepCell { window, batch, lr });
            }
        }
    }
    cells
}

/// Trains, calibrates and evaluates every cell. Cells run in parallel when
/// `parallel` is set; each is single-threaded and results keep grid order.
pub fn sweep(
    train_raw: &Dataset,
    test_raw: &Dataset,
    features: &FeatureSpec,
    base: &ModelConfig,
    cells: &[SweepCell],
    parallel: bool,
) -> Result<Vec<MetricsReport>> {
    let run_cell = |cell: &SweepCell| -> Result<MetricsReport> {
        let config = ModelConfig {
            timesteps: cell.window,
            batch_size: cell.batch,
            learning_rate: cell.lr,
            ..base.clone()
        };
        let trained = train_model(&train_raw.matrix, &config, None, None)?;
        let (tm, _) = ThresholdModel::calibrate(&trained.weights, &trained.scaler, features, &train_raw.matrix, None)?;
        let (scores, verdicts) = score_raw(&test_raw.matrix, &tm, &trained.weights)?;
        let (mean, std) = trained.report.epoch_time_mean_std();
        let run = RunMetadata {
            window: Some(cell.window),
            batch: Some(cell.batch),
            lr: Some(cell.lr),
            seed: Some(config.seed),
            epochs: Some(config.epochs),
            epoch_time_mean: Some(mean),
            epoch_time_std: Some(std),
            config: None,
        };
        MetricsReport::new(&verdicts, &test_raw.labels, &scores.scores, run)
    };
    if parallel {
        cells.par_iter().map(run_cell).collect()
    } else {
        cells.iter().map(run_cell).collect()
    }
}

/// Finite-difference check of the full autoencoder with dropout off.
///
/// Parameters are the seeded initialization plus a small seeded perturbation
/// of every value, biases included, so that no gradient is structurally zero.
/// The batch is `windows` random windows of uniform [0, 1) values.
pub fn gradcheck(config: &ModelConfig, windows: usize, samples: usize, tolerance: f64) -> Result<GradCheckReport> {
    let config = ModelConfig {
        dropout: 0.0,
        ..config.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(2);
    let base = build(&config)?;
    let perturbed: Vec<f64> = base.to_flat().iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
    let weights = base.with_flat(&perturbed)?;
    let rows = windows + config.timesteps - 1;
    let data = (0..rows * config.features).map(|_| rng.random_range(0.0..1.0)).collect();
    let batch = make_windows(&Matrix::new(rows, config.features, data)?, WindowConfig::new(config.timesteps)?)?;
    check_gradients(&weights, &batch, samples, config.seed, tolerance)
}
