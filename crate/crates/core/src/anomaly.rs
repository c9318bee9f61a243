//! Per-sample reconstruction scores, threshold calibration and classification.
//!
//! A sample's score is the mean over features of its absolute reconstruction
//! error, where each feature error is first averaged over every window that
//! contains the sample. Samples near the ends of a file appear in fewer than
//! `t` windows and are averaged over the windows that do contain them.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autoencoder::{reconstruct, ModelWeights};
use crate::error::{Error, Result};
use crate::ingest::{self, read_file, write_file, Dataset, FeatureSpec, Scaler};
use crate::matrix::Matrix;
use crate::windowing::{make_windows, SequenceBatch, WindowConfig};

const THRESHOLD_VERSION: u32 = 1;

/// Score and window coverage for each source row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub scores: Vec<f64>,
    pub coverage: Vec<usize>,
}

impl ScoreSeries {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Aggregates window reconstructions back onto the source rows of `x`.
pub fn per_sample_errors(x: &Matrix, reconstructed: &SequenceBatch, batch: &SequenceBatch) -> Result<ScoreSeries> {
    if reconstructed.len() != batch.len()
        || reconstructed.timesteps() != batch.timesteps()
        || reconstructed.features() != batch.features()
    {
        return Err(Error::Shape("reconstruction does not match the window batch".into()));
    }
    let (n, m, t) = (x.rows(), x.cols(), batch.timesteps());
    if batch.features() != m {
        return Err(Error::Shape(format!(
            "windows carry {} features, source has {m}",
            batch.features()
        )));
    }
    let mut err = vec![0.0; n * m];
    let mut coverage = vec![0usize; n];
    for k in 0..batch.len() {
        let start = batch.origin[k];
        if start + t > n {
            return Err(Error::Shape(format!("window {k} runs past the end of the source")));
        }
        for step in 0..t {
            let i = start + step;
            coverage[i] += 1;
            let src = x.row(i);
            for j in 0..m {
                err[i * m + j] += (reconstructed.get(k, step, j) - src[j]).abs();
            }
        }
    }
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        if coverage[i] == 0 {
            return Err(Error::Contract(format!("sample {i} is not covered by any window")));
        }
        let c = coverage[i] as f64;
        scores.push(err[i * m..(i + 1) * m].iter().map(|e| e / c).sum::<f64>() / m as f64);
    }
    Ok(ScoreSeries { scores, coverage })
}

/// Threshold = largest training score.
pub fn calibrate(training: &ScoreSeries) -> Result<f64> {
    if training.is_empty() {
        return Err(Error::Calibration("no training scores".into()));
    }
    if training.scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Calibration("training scores are not finite".into()));
    }
    Ok(training.scores.iter().copied().fold(0.0, f64::max))
}

/// 1 where the score is strictly greater than `threshold`.
pub fn classify(scores: &ScoreSeries, threshold: f64) -> Vec<u8> {
    scores.scores.iter().map(|&s| u8::from(s > threshold)).collect()
}

/// Windows `scaled`, reconstructs them and aggregates per-sample scores.
pub fn score_matrix(weights: &ModelWeights, scaled: &Matrix) -> Result<ScoreSeries> {
    let window = WindowConfig::new(weights.config.timesteps)?;
    let batch = make_windows(scaled, window)?;
    let recon = reconstruct(weights, &batch)?;
    per_sample_errors(scaled, &recon, &batch)
}

/// Everything needed to score new traffic with a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdModel {
    pub version: u32,
    pub threshold: f64,
    pub features: FeatureSpec,
    pub scaler: Scaler,
    pub window: WindowConfig,
    /// Model file the threshold was calibrated with.
    pub model_path: Option<String>,
    pub model_sha256: String,
    /// SHA-256 of the scaled training matrix.
    pub training_fingerprint: String,
    pub training_samples: usize,
    /// Calibration date, `SOURCE_DATE_EPOCH` when set.
    pub created: String,
}

impl ThresholdModel {
    /// Scores the raw training rows with `weights` and takes the maximum.
    pub fn calibrate(
        weights: &ModelWeights,
        scaler: &Scaler,
        features: &FeatureSpec,
        training_raw: &Matrix,
        model_path: Option<String>,
    ) -> Result<(Self, ScoreSeries)> {
        if features.len() != weights.config.features || scaler.len() != weights.config.features {
            return Err(Error::Shape("feature count differs between spec, scaler and model".into()));
        }
        let scaled = scaler.apply(training_raw)?;
        let scores = score_matrix(weights, &scaled)?;
        let threshold = calibrate(&scores)?;
        let model = Self {
            version: THRESHOLD_VERSION,
            threshold,
            features: features.clone(),
            scaler: scaler.clone(),
            window: WindowConfig::new(weights.config.timesteps)?,
            model_path,
            model_sha256: sha256_hex(weights.to_json()?.as_bytes()),
            training_fingerprint: matrix_fingerprint(&scaled),
            training_samples: scaled.rows(),
            created: build_date(),
        };
        Ok((model, scores))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let tm: ThresholdModel = serde_json::from_str(json)?;
        if tm.version != THRESHOLD_VERSION {
            return Err(Error::Version {
                kind: "threshold",
                found: tm.version,
                expected: THRESHOLD_VERSION,
            });
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // also rejects NaN
        if !(tm.threshold >= 0.0) {
            return Err(Error::Contract(format!("threshold {} is negative", tm.threshold)));
        }
        Ok(tm)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&read_file(path)?)
    }

    /// Rejects model files other than the one this threshold was calibrated with.
    pub fn check_model(&self, weights: &ModelWeights) -> Result<()> {
        let digest = sha256_hex(weights.to_json()?.as_bytes());
        if digest != self.model_sha256 {
            return Err(Error::Contract(
                "model file does not match the one used for calibration".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn matrix_fingerprint(m: &Matrix) -> String {
    let mut h = Sha256::new();
    h.update((m.rows() as u64).to_le_bytes());
    h.update((m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn build_date() -> String {
    let epoch = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|s| chrono::DateTime::from_timestamp(s, 0));
    epoch
        .unwrap_or_else(chrono::Utc::now)
        .format("%Y-%m-%d")
        .to_string()
}

/// Per-row outcome of [`detect`].
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// Source data-row index of each scored sample.
    pub rows: Vec<usize>,
    pub scores: ScoreSeries,
    pub verdicts: Vec<u8>,
    /// Ground truth, when the input carried a label column.
    pub labels: Option<Vec<u8>>,
    pub skipped: usize,
}

/// Scores a raw flow CSV: parse, clean, scale with the stored scaler, window,
/// reconstruct, aggregate and threshold.
pub fn detect(raw_csv: impl AsRef<Path>, tm: &ThresholdModel, weights: &ModelWeights) -> Result<Detection> {
    let path = raw_csv.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    detect_reader(file, tm, weights)
}

pub fn detect_reader<R: Read>(reader: R, tm: &ThresholdModel, weights: &ModelWeights) -> Result<Detection> {
    if tm.window.timesteps != weights.config.timesteps {
        return Err(Error::Contract(format!(
            "threshold was calibrated for windows of {}, model uses {}",
            tm.window.timesteps, weights.config.timesteps
        )));
    }
    let (parsed, labelled) = ingest::parse_reader_optional_label(reader, &tm.features)?;
    let ds = Dataset::from_records(&parsed.records, tm.features.len())?;
    if ds.len() < tm.window.timesteps {
        return Err(Error::InsufficientData {
            n: ds.len(),
            t: tm.window.timesteps,
        });
    }
    let scaled = tm.scaler.apply(&ds.matrix)?;
    let scores = score_matrix(weights, &scaled)?;
    let verdicts = classify(&scores, tm.threshold);
    Ok(Detection {
        rows: parsed.records.iter().map(|r| r.row).collect(),
        scores,
        verdicts,
        labels: labelled.then_some(ds.labels),
        skipped: parsed.skipped(),
    })
}

/// One line of a verdicts file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub row_index: usize,
    pub score: f64,
    pub verdict: u8,
    pub label: Option<u8>,
}

impl Detection {
    pub fn rows(&self) -> Vec<VerdictRow> {
        (0..self.verdicts.len())
            .map(|k| VerdictRow {
                row_index: self.rows[k],
                score: self.scores.scores[k],
                verdict: self.verdicts[k],
                label: self.labels.as_ref().map(|l| l[k]),
            })
            .collect()
    }
}

/// Writes `row_index,score,verdict,label`; the label cell is empty when unknown.
pub fn write_verdicts<W: Write>(writer: W, rows: &[VerdictRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["row_index", "score", "verdict", "label"])?;
    for r in rows {
        w.write_record([
            r.row_index.to_string(),
            format!("{:?}", r.score),
            r.verdict.to_string(),
            r.label.map(|l| l.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<verdicts>", e))?;
    Ok(())
}

pub fn save_verdicts(path: impl AsRef<Path>, rows: &[VerdictRow]) -> Result<()> {
    let mut buf = Vec::new();
    write_verdicts(&mut buf, rows)?;
    write_file(path, &buf)
}

pub fn read_verdicts<R: Read>(reader: R) -> Result<Vec<VerdictRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

pub fn load_verdicts(path: impl AsRef<Path>) -> Result<Vec<VerdictRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_verdicts(file)
}
