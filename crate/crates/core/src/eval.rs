//! Confusion counts, scalar detection metrics, rank-based ROC AUC and report files.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::write_file;

const REPORT_VERSION: u32 = 1;

/// Anomaly (label 1) is the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

pub fn confusion(verdicts: &[u8], labels: &[u8]) -> Result<ConfusionCounts> {
    if verdicts.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} verdicts for {} labels",
            verdicts.len(),
            labels.len()
        )));
    }
    if verdicts.is_empty() {
        return Err(Error::EmptyEval);
    }
    let mut c = ConfusionCounts::default();
    for (&v, &l) in verdicts.iter().zip(labels) {
        match (v != 0, l != 0) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Scalar metrics. A ratio with a zero denominator is reported as 0 and its
/// name is listed in `degenerate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub fpr: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<String>,
}

pub fn metrics(c: &ConfusionCounts) -> Result<Metrics> {
    if c.total() == 0 {
        return Err(Error::EmptyEval);
    }
    let mut degenerate = Vec::new();
    let mut ratio = |name: &str, num: u64, den: u64| {
        if den == 0 {
            degenerate.push(name.to_string());
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let accuracy = ratio("accuracy", c.tp + c.tn, c.total());
    let precision = ratio("precision", c.tp, c.tp + c.fp);
    let recall = ratio("recall", c.tp, c.tp + c.fn_);
    let fpr = ratio("fpr", c.fp, c.fp + c.tn);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        degenerate.push("f1".to_string());
        0.0
    };
    Ok(Metrics {
        accuracy,
        precision,
        recall,
        fpr,
        f1,
        degenerate,
    })
}

/// Probability that a random positive outscores a random negative, ties
/// counting half (the normalized Mann-Whitney U statistic).
pub fn auc_roc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l != 0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedAuc(format!("{pos} positives and {neg} negatives")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks over tie groups, 1-based
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + 1 + end) as f64 / 2.0;
        let group_pos = order[start..end].iter().filter(|&&i| labels[i] != 0).count();
        rank_sum_pos += midrank * group_pos as f64;
        start = end;
    }
    let (p, n) = (pos as f64, neg as f64);
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    Ok(u / (p * n))
}

/// ROC curve vertices `(fpr, tpr, threshold)`, thresholds descending. The first
/// point is `(0, 0, +inf)`.
pub fn roc_points(scores: &[f64], labels: &[u8]) -> Result<Vec<(f64, f64, f64)>> {
    auc_roc(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l != 0).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0, f64::INFINITY)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] != 0 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            k += 1;
        }
        points.push((fp / neg, tp / pos, s));
    }
    Ok(points)
}

/// Hyperparameters and provenance attached to a report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub window: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub epoch_time_mean: Option<f64>,
    pub epoch_time_std: Option<f64>,
    /// Fully resolved run configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub version: u32,
    pub counts: ConfusionCounts,
    #[serde(flatten)]
    pub metrics: Metrics,
    /// Absent when only one class was evaluated.
    pub auc: Option<f64>,
    pub run: RunMetadata,
}

impl MetricsReport {
    pub fn new(verdicts: &[u8], labels: &[u8], scores: &[f64], run: RunMetadata) -> Result<Self> {
        let counts = confusion(verdicts, labels)?;
        let metrics = metrics(&counts)?;
        let auc = match auc_roc(scores, labels) {
            Ok(a) => Some(a),
            Err(Error::UndefinedAuc(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            version: REPORT_VERSION,
            counts,
            metrics,
            auc,
            run,
        })
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let r: MetricsReport = serde_json::from_str(json)?;
        if r.version != REPORT_VERSION {
            return Err(Error::Version {
                kind: "report",
                found: r.version,
                expected: REPORT_VERSION,
            });
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(Error::Parameter(format!("unknown report format {other:?}"))),
        }
    }
}

pub const CSV_HEADER: &str =
    "window,batch,lr,seed,epochs,tp,tn,fp,fn,accuracy,precision,recall,fpr,f1,auc,epoch_time_mean,epoch_time_std";

fn opt<T: std::fmt::Debug>(v: Option<T>) -> String {
    v.map(|v| format!("{v:?}")).unwrap_or_default()
}

pub fn csv_table(reports: &[MetricsReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        let m = &r.metrics;
        let c = &r.counts;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{:?},{:?},{:?},{:?},{:?},{},{},{}",
            opt(r.run.window),
            opt(r.run.batch),
            opt(r.run.lr),
            opt(r.run.seed),
            opt(r.run.epochs),
            c.tp,
            c.tn,
            c.fp,
            c.fn_,
            m.accuracy,
            m.precision,
            m.recall,
            m.fpr,
            m.f1,
            opt(r.auc),
            opt(r.run.epoch_time_mean),
            opt(r.run.epoch_time_std),
        );
    }
    out
}

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

/// Markdown table: window, batch and learning rate, then Acc, Pre, Re and F1
/// in percent, then AUC and seconds per epoch.
pub fn markdown_table(reports: &[MetricsReport]) -> String {
    let mut out = String::from("| Window | Batch | LR | Acc | Pre | Re | F1 | AUC | Time (s)/epoch |\n");
    out.push_str("|---|---|---|---|---|---|---|---|---|\n");
    for r in reports {
        let m = &r.metrics;
        let time = match (r.run.epoch_time_mean, r.run.epoch_time_std) {
            (Some(mu), Some(sd)) => format!("{mu:.2} ± {sd:.2}"),
            _ => String::new(),
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            r.run.window.map(|w| w.to_string()).unwrap_or_default(),
            r.run.batch.map(|w| w.to_string()).unwrap_or_default(),
            r.run.lr.map(|w| w.to_string()).unwrap_or_default(),
            pct(m.accuracy),
            pct(m.precision),
            pct(m.recall),
            pct(m.f1),
            r.auc.map(pct).unwrap_or_default(),
            time,
        );
    }
    out
}

pub fn render(report: &MetricsReport, format: ReportFormat) -> Result<String> {
    Ok(match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            s
        }
        ReportFormat::Csv => csv_table(std::slice::from_ref(report)),
        ReportFormat::Markdown => markdown_table(std::slice::from_ref(report)),
    })
}

pub fn emit_report(report: &MetricsReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    write_file(path, render(report, format)?.as_bytes())
}

pub fn write_roc_points(path: impl AsRef<Path>, points: &[(f64, f64, f64)]) -> Result<()> {
    let mut out = String::from("fpr,tpr,threshold\n");
    for (f, t, th) in points {
        let _ = writeln!(out, "{f:?},{t:?},{th:?}");
    }
    write_file(path, out.as_bytes())
}
