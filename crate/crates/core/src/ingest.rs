//! Flow CSV ingestion: column selection, cleaning, label encoding and
//! min-max scaling.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Label string that encodes to 0. Everything else is an attack.
pub const BENIGN_LABEL: &str = "BENIGN";

/// Top-five CICDDoS2019 features shared by the DNS, LDAP and SNMP captures.
pub const DEFAULT_FEATURES: [&str; 5] = [
    "Max Packet Length",
    "Fwd Packet Length Max",
    "Fwd Packet Length Min",
    "Average Packet Size",
    "Min Packet Length",
];

pub const DEFAULT_LABEL_COLUMN: &str = "Label";

const SCALER_VERSION: u32 = 1;

/// Ordered feature columns plus the class column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub names: Vec<String>,
    pub label_column: String,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            names: DEFAULT_FEATURES.iter().map(|s| s.to_string()).collect(),
            label_column: DEFAULT_LABEL_COLUMN.to_string(),
        }
    }
}

impl FeatureSpec {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>, label_column: impl Into<String>) -> Result<Self> {
        let spec = Self {
            names: names.into_iter().map(|s| s.into().trim().to_string()).collect(),
            label_column: label_column.into().trim().to_string(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.names.is_empty() {
            return Err(Error::Parameter("feature list is empty".into()));
        }
        let mut seen = HashSet::new();
        for name in &self.names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Parameter(format!("duplicate feature {name:?}")));
            }
        }
        if self.label_column.is_empty() {
            return Err(Error::Parameter("label column name is empty".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// One flow row after column selection and label encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    /// Zero-based data-row index in the source file.
    pub row: usize,
    pub features: Vec<f64>,
    /// 0 benign, 1 attack.
    pub label: u8,
}

impl FlowRecord {
    pub fn is_finite(&self) -> bool {
        self.features.iter().all(|v| v.is_finite())
    }
}

/// Result of [`parse_csv`]: surviving records and what was dropped.
#[derive(Debug, Clone, Default)]
pub struct ParsedFlows {
    pub records: Vec<FlowRecord>,
    /// Rows with a cell that is not a number at all.
    pub malformed: usize,
    /// Rows that parsed but carried NaN or an infinity.
    pub non_finite: usize,
}

impl ParsedFlows {
    pub fn skipped(&self) -> usize {
        self.malformed + self.non_finite
    }
}

pub fn encode_label(raw: &str) -> u8 {
    if raw.trim().eq_ignore_ascii_case(BENIGN_LABEL) {
        0
    } else {
        1
    }
}

/// Reads a flow CSV, keeping only the columns named in `spec`.
///
/// Header names are compared after trimming, since CICDDoS2019 headers carry
/// leading spaces. Rows with unparseable or non-finite feature cells are
/// counted and skipped.
pub fn parse_csv(path: impl AsRef<Path>, spec: &FeatureSpec) -> Result<ParsedFlows> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_reader(file, spec)
}

pub fn parse_reader<R: Read>(reader: R, spec: &FeatureSpec) -> Result<ParsedFlows> {
    parse_inner(reader, spec, true).map(|(p, _)| p)
}

/// Like [`parse_reader`], but a missing label column is allowed. The flag
/// reports whether labels were read; without them every label is 0.
pub fn parse_reader_optional_label<R: Read>(reader: R, spec: &FeatureSpec) -> Result<(ParsedFlows, bool)> {
    parse_inner(reader, spec, false)
}

fn parse_inner<R: Read>(reader: R, spec: &FeatureSpec, require_label: bool) -> Result<(ParsedFlows, bool)> {
    spec.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema {
                column: name.to_string(),
            })
    };
    let feature_idx = spec
        .names
        .iter()
        .map(|n| find(n))
        .collect::<Result<Vec<_>>>()?;
    let label_idx = match find(&spec.label_column) {
        Ok(i) => Some(i),
        Err(e) if require_label => return Err(e),
        Err(_) => None,
    };

    let mut out = ParsedFlows::default();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let label = match label_idx.map(|i| rec.get(i)) {
            None => 0,
            Some(Some(raw)) => encode_label(raw),
            Some(None) => {
                out.malformed += 1;
                continue;
            }
        };
        let features: Option<Vec<f64>> = feature_idx
            .iter()
            .map(|&j| rec.get(j).and_then(|c| c.trim().parse::<f64>().ok()))
            .collect();
        match features {
            None => out.malformed += 1,
            Some(features) => {
                let record = FlowRecord {
                    row,
                    features,
                    label,
                };
                if record.is_finite() {
                    out.records.push(record);
                } else {
                    out.non_finite += 1;
                }
            }
        }
    }
    Ok((out, label_idx.is_some()))
}

/// Drops records carrying NaN or infinite features. Survivors keep their order.
pub fn clean(records: Vec<FlowRecord>) -> (Vec<FlowRecord>, usize) {
    let before = records.len();
    let kept: Vec<FlowRecord> = records.into_iter().filter(FlowRecord::is_finite).collect();
    let removed = before - kept.len();
    (kept, removed)
}

/// Per-feature min/max fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ScalerFile {
    version: u32,
    feature_names: Vec<String>,
    min: Vec<f64>,
    max: Vec<f64>,
}

impl Scaler {
    pub fn fit(matrix: &Matrix) -> Result<Self> {
        if matrix.is_empty() {
            return Err(Error::EmptyData("cannot fit a scaler on zero rows".into()));
        }
        let m = matrix.cols();
        let mut min = vec![f64::INFINITY; m];
        let mut max = vec![f64::NEG_INFINITY; m];
        for row in matrix.iter_rows() {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(Self { min, max })
    }

    pub fn len(&self) -> usize {
        self.min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.min.is_empty()
    }

    /// Maps each column onto [0, 1]. Zero-range columns map to 0 and values
    /// outside the fitted range are clamped.
    pub fn apply(&self, matrix: &Matrix) -> Result<Matrix> {
        self.check_cols(matrix)?;
        let mut out = matrix.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                let range = self.max[j] - self.min[j];
                *v = if range > 0.0 {
                    ((*v - self.min[j]) / range).clamp(0.0, 1.0)
                } else {
                    0.0
                };
            }
        }
        Ok(out)
    }

    pub fn inverse(&self, matrix: &Matrix) -> Result<Matrix> {
        self.check_cols(matrix)?;
        let mut out = matrix.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = *v * (self.max[j] - self.min[j]) + self.min[j];
            }
        }
        Ok(out)
    }

    fn check_cols(&self, matrix: &Matrix) -> Result<()> {
        if matrix.rows() > 0 && matrix.cols() != self.len() {
            return Err(Error::Shape(format!(
                "matrix has {} columns, scaler was fitted on {}",
                matrix.cols(),
                self.len()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self, feature_names: &[String]) -> Result<String> {
        if feature_names.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} feature names for a {}-feature scaler",
                feature_names.len(),
                self.len()
            )));
        }
        let file = ScalerFile {
            version: SCALER_VERSION,
            feature_names: feature_names.to_vec(),
            min: self.min.clone(),
            max: self.max.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Returns the scaler and the feature names it was fitted on.
    pub fn from_json(json: &str) -> Result<(Self, Vec<String>)> {
        let file: ScalerFile = serde_json::from_str(json)?;
        if file.version != SCALER_VERSION {
            return Err(Error::Version {
                kind: "scaler",
                found: file.version,
                expected: SCALER_VERSION,
            });
        }
        if file.min.len() != file.max.len() || file.min.len() != file.feature_names.len() {
            return Err(Error::Shape("scaler arrays differ in length".into()));
        }
        if file.min.iter().zip(&file.max).any(|(lo, hi)| lo.partial_cmp(hi).is_none_or(|o| o.is_gt())) {
            return Err(Error::Contract("scaler min exceeds max".into()));
        }
        Ok((
            Self {
                min: file.min,
                max: file.max,
            },
            file.feature_names,
        ))
    }

    pub fn save(&self, feature_names: &[String], path: impl AsRef<Path>) -> Result<()> {
        write_file(path, self.to_json(feature_names)?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Vec<String>)> {
        Self::from_json(&read_file(path)?)
    }
}

/// Feature matrix with per-row binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub matrix: Matrix,
    pub labels: Vec<u8>,
    /// Present once the matrix has been scaled.
    pub scaler: Option<Scaler>,
}

impl Dataset {
    pub fn new(matrix: Matrix, labels: Vec<u8>) -> Result<Self> {
        if matrix.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} rows but {} labels",
                matrix.rows(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Contract(format!("label {bad} is not binary")));
        }
        Ok(Self {
            matrix,
            labels,
            scaler: None,
        })
    }

    pub fn from_records(records: &[FlowRecord], features: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(records.len() * features);
        for r in records {
            if r.features.len() != features {
                return Err(Error::Shape(format!(
                    "record at row {} has {} features, expected {features}",
                    r.row,
                    r.features.len()
                )));
            }
            data.extend_from_slice(&r.features);
        }
        let matrix = Matrix::new(records.len(), features, data)?;
        Self::new(matrix, records.iter().map(|r| r.label).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            matrix: self.matrix.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            scaler: self.scaler.clone(),
        }
    }

    /// Rows with the given label, in source order.
    pub fn with_label(&self, label: u8) -> Dataset {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == label).collect();
        self.select(&idx)
    }

    pub fn scaled(&self, scaler: &Scaler) -> Result<Dataset> {
        Ok(Dataset {
            matrix: scaler.apply(&self.matrix)?,
            labels: self.labels.clone(),
            scaler: Some(scaler.clone()),
        })
    }

    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(Dataset {
            matrix: self.matrix.vstack(&other.matrix)?,
            labels,
            scaler: self.scaler.clone(),
        })
    }
}

fn fraction_count(n: usize, fraction: f64) -> usize {
    // tolerate representation error such as 0.05 * 100 = 4.999..
    (((n as f64) * fraction) + 1e-9).floor() as usize
}

fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Splits benign data into a training part of `floor(n * train_fraction)` rows
/// and a held-out remainder.
///
/// Membership is decided by a seeded shuffle; each part keeps source order so
/// windows over it still follow time.
pub fn split_benign(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if let Some(i) = ds.labels.iter().position(|&l| l != 0) {
        return Err(Error::Contract(format!(
            "benign split received an attack row at index {i}"
        )));
    }
    let idx = shuffled_indices(ds.len(), seed);
    let cut = fraction_count(ds.len(), train_fraction);
    let mut train = idx[..cut].to_vec();
    let mut held = idx[cut..].to_vec();
    train.sort_unstable();
    held.sort_unstable();
    Ok((ds.select(&train), ds.select(&held)))
}

/// Held-out benign rows followed by a seeded `attack_fraction` sample of attacks.
///
/// Returns the test set and any warnings (empty inputs are reported, not rejected).
pub fn assemble_test_set(
    held_out_benign: &Dataset,
    attacks: &Dataset,
    attack_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Vec<String>)> {
    if !(attack_fraction > 0.0 && attack_fraction <= 1.0) {
        return Err(Error::Parameter(format!(
            "attack fraction must lie in (0, 1], got {attack_fraction}"
        )));
    }
    if let Some(i) = attacks.labels.iter().position(|&l| l != 1) {
        return Err(Error::Contract(format!(
            "attack sample received a benign row at index {i}"
        )));
    }
    let mut warnings = Vec::new();
    if held_out_benign.is_empty() {
        warnings.push("test set has no benign rows".to_string());
    }
    let take = fraction_count(attacks.len(), attack_fraction);
    if take == 0 {
        warnings.push(format!(
            "attack fraction {attack_fraction} of {} rows selects no attacks",
            attacks.len()
        ));
    }
    let mut idx = shuffled_indices(attacks.len(), seed);
    idx.truncate(take);
    idx.sort_unstable();
    let sample = attacks.select(&idx);
    Ok((held_out_benign.concat(&sample)?, warnings))
}

/// Writes a raw dataset as a flow CSV that [`parse_csv`] reads back bit-exactly.
///
/// `columns` is the full header. Columns named in `spec` are filled from the
/// matrix, the label column gets `BENIGN` or `attack_label`, and any other
/// column receives the value returned by `filler(row, column_name)`.
pub fn write_flows<W: Write>(
    writer: W,
    spec: &FeatureSpec,
    columns: &[&str],
    ds: &Dataset,
    attack_label: &str,
    mut filler: impl FnMut(usize, &str) -> String,
) -> Result<()> {
    let position: Vec<Option<usize>> = columns
        .iter()
        .map(|c| spec.names.iter().position(|n| n == c.trim()))
        .collect();
    for name in spec.names.iter().chain(std::iter::once(&spec.label_column)) {
        if !columns.iter().any(|c| c.trim() == name) {
            return Err(Error::Schema {
                column: name.clone(),
            });
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(columns)?;
    let mut cells = Vec::with_capacity(columns.len());
    for i in 0..ds.len() {
        cells.clear();
        for (c, pos) in columns.iter().zip(&position) {
            let cell = match pos {
                Some(j) => format!("{:?}", ds.matrix.get(i, *j)),
                None if c.trim() == spec.label_column => {
                    if ds.labels[i] == 0 {
                        BENIGN_LABEL.to_string()
                    } else {
                        attack_label.to_string()
                    }
                }
                None => filler(i, c.trim()),
            };
            cells.push(cell);
        }
        w.write_record(&cells)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Writes `ds` with just the spec's feature columns and the label column.
pub fn save_flows(path: impl AsRef<Path>, spec: &FeatureSpec, ds: &Dataset, attack_label: &str) -> Result<()> {
    let path = path.as_ref();
    let columns: Vec<&str> = spec
        .names
        .iter()
        .map(String::as_str)
        .chain(std::iter::once(spec.label_column.as_str()))
        .collect();
    let mut buf = Vec::new();
    write_flows(&mut buf, spec, &columns, ds, attack_label, |_, _| String::new())?;
    write_file(path, &buf)
}

/// Parses `path` and returns it as a raw dataset along with the source row indices.
pub fn load_dataset(path: impl AsRef<Path>, spec: &FeatureSpec) -> Result<(Dataset, ParsedFlows)> {
    let parsed = parse_csv(path, spec)?;
    let ds = Dataset::from_records(&parsed.records, spec.len())?;
    Ok((ds, parsed))
}

/// Writes `bytes` to `path`, creating parent directories.
pub fn write_file(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
