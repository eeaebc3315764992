//! File names inside the output directory and the CLI-owned CSV formats.

use std::fs;
use std::path::Path;

use marstag::calibration::{ClassMetrics, ConfusionMatrix};
use marstag::datasets::{ClassCatalog, Split};

use crate::error::{CliError, Result};

pub const SPLIT: &str = "split.csv";
pub const AUGMENTED: &str = "augmented.csv";
pub const LANDMARKS: &str = "landmarks.csv";
pub const CROPS_DIR: &str = "crops";
pub const FEATURES: &str = "features.csv";
pub const MODEL: &str = "model.txt";
pub const LOGITS_VAL: &str = "logits_val.csv";
pub const LABELS_VAL: &str = "labels_val.csv";
pub const LOGITS_TEST: &str = "logits_test.csv";
pub const LABELS_TEST: &str = "labels_test.csv";
pub const CALIBRATOR: &str = "calibrator.txt";
pub const CALIBRATION_FIT: &str = "calibration_fit.csv";
pub const METRICS: &str = "metrics.csv";
pub const RELIABILITY_UNCAL: &str = "reliability_uncalibrated.csv";
pub const RELIABILITY: &str = "reliability.csv";
pub const PER_CLASS: &str = "per_class.csv";
pub const CONFUSION: &str = "confusion.csv";
pub const TAGS: &str = "tags.csv";
pub const TAG_FAILURES: &str = "tag_failures.csv";
pub const SHIFT: &str = "shift.csv";
pub const INDEX: &str = "index.txt";
pub const QUERY_LOG: &str = "query_log.csv";
pub const REPORT_DIR: &str = "report";

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::data(format!("{}: {e}", path.display()))
}

pub fn write_rows<S: AsRef<[u8]>>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<S>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_err(path, e))?;
    }
    w.flush()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Data rows of a CSV whose header must equal `header`. A missing file is
/// `MISSING_INPUT`.
pub fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<Vec<String>>> {
    if !path.is_file() {
        return Err(CliError::missing(format!("{} not found", path.display())));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let got: Vec<String> = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if got.len() < header.len() || got[..header.len()] != *header {
        return Err(CliError::data(format!(
            "{}: expected header {}",
            path.display(),
            header.join(",")
        )));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        out.push(rec.iter().map(str::to_string).collect());
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(s: &str, path: &Path, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| CliError::data(format!("{}: {what} {s:?} is not a number", path.display())))
}

/// Ordered `metric,value` pairs.
pub type Metrics = Vec<(String, String)>;

pub fn write_metrics(path: &Path, metrics: &Metrics) -> Result<()> {
    write_rows(
        path,
        &["metric", "value"],
        metrics.iter().map(|(k, v)| vec![k.as_str(), v.as_str()]),
    )
}

pub fn read_metrics(path: &Path) -> Result<Metrics> {
    Ok(read_rows(path, &["metric", "value"])?
        .into_iter()
        .map(|r| (r[0].clone(), r.get(1).cloned().unwrap_or_default()))
        .collect())
}

/// One feature row of the training pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub sample_id: String,
    pub split: Split,
    pub copy: usize,
    pub augmentation: Option<usize>,
    pub x: Vec<f64>,
}

const FEATURE_HEADER: [&str; 4] = ["sample_id", "split", "copy", "augmentation"];

pub fn write_features(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    let d = rows.first().map_or(0, |r| r.x.len());
    let names: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
    let mut header: Vec<&str> = FEATURE_HEADER.to_vec();
    header.extend(names.iter().map(String::as_str));
    write_rows(
        path,
        &header,
        rows.iter().map(|r| {
            let mut v = vec![
                r.sample_id.clone(),
                r.split.to_string(),
                r.copy.to_string(),
                r.augmentation.map(|a| a.to_string()).unwrap_or_default(),
            ];
            v.extend(r.x.iter().map(|f| format!("{f:.16e}")));
            v
        }),
    )
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureRow>> {
    read_rows(path, &FEATURE_HEADER)?
        .into_iter()
        .map(|r| {
            Ok(FeatureRow {
                sample_id: r[0].clone(),
                split: r[1].parse().map_err(CliError::data)?,
                copy: num(&r[2], path, "copy")?,
                augmentation: if r[3].is_empty() {
                    None
                } else {
                    Some(num(&r[3], path, "augmentation")?)
                },
                x: r[4..].iter().map(|s| num(s, path, "feature")).collect::<Result<_>>()?,
            })
        })
        .collect()
}

/// Per-class precision and recall as read back by the report.
#[derive(Debug, Clone, PartialEq)]
pub struct PrRow {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

const PER_CLASS_HEADER: [&str; 8] = [
    "class",
    "precision",
    "recall",
    "f1",
    "support",
    "predicted",
    "defined",
    "f1_group",
];

pub fn write_per_class(path: &Path, rows: &[ClassMetrics], catalog: &ClassCatalog) -> Result<()> {
    write_rows(
        path,
        &PER_CLASS_HEADER,
        rows.iter().map(|m| {
            vec![
                catalog.name(m.class).to_string(),
                format!("{:.6}", m.precision),
                format!("{:.6}", m.recall),
                format!("{:.6}", m.f1),
                m.support.to_string(),
                m.predicted.to_string(),
                m.defined.to_string(),
                m.group.as_str().to_string(),
            ]
        }),
    )
}

pub fn read_per_class(path: &Path) -> Result<Vec<PrRow>> {
    read_rows(path, &PER_CLASS_HEADER[..5])?
        .into_iter()
        .map(|r| {
            Ok(PrRow {
                class: r[0].clone(),
                precision: num(&r[1], path, "precision")?,
                recall: num(&r[2], path, "recall")?,
                f1: num(&r[3], path, "f1")?,
                support: num(&r[4], path, "support")?,
            })
        })
        .collect()
}

/// Confusion counts keyed by class name; the last column is abstentions.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionTable {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionTable {
    pub fn from_matrix(cm: &ConfusionMatrix, catalog: &ClassCatalog) -> Self {
        Self {
            classes: catalog.classes().iter().map(|c| c.name.clone()).collect(),
            counts: cm.counts.clone(),
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

pub fn write_confusion(path: &Path, t: &ConfusionTable) -> Result<()> {
    let mut header = vec!["actual"];
    header.extend(t.classes.iter().map(String::as_str));
    header.push("abstain");
    write_rows(
        path,
        &header,
        t.classes.iter().zip(&t.counts).map(|(name, row)| {
            std::iter::once(name.clone())
                .chain(row.iter().map(usize::to_string))
                .collect()
        }),
    )
}

pub fn read_confusion(path: &Path) -> Result<ConfusionTable> {
    let rows = read_rows(path, &["actual"])?;
    let mut t = ConfusionTable {
        classes: Vec::new(),
        counts: Vec::new(),
    };
    for r in rows {
        t.classes.push(r[0].clone());
        t.counts
            .push(r[1..].iter().map(|s| num(s, path, "count")).collect::<Result<_>>()?);
    }
    let k = t.classes.len();
    if t.counts.iter().any(|r| r.len() != k + 1) {
        return Err(CliError::data(format!(
            "{}: confusion matrix is not K x (K+1)",
            path.display()
        )));
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftTableRow {
    pub class: String,
    pub labeled_percent: f64,
    pub archive_percent: f64,
    pub ratio: String,
}

const SHIFT_HEADER: [&str; 4] = ["class", "labeled_percent", "archive_percent", "ratio"];

pub fn write_shift(path: &Path, rows: &[ShiftTableRow]) -> Result<()> {
    write_rows(
        path,
        &SHIFT_HEADER,
        rows.iter().map(|r| {
            vec![
                r.class.clone(),
                format!("{:.4}", r.labeled_percent),
                format!("{:.4}", r.archive_percent),
                r.ratio.clone(),
            ]
        }),
    )
}

pub fn read_shift(path: &Path) -> Result<Vec<ShiftTableRow>> {
    read_rows(path, &SHIFT_HEADER)?
        .into_iter()
        .map(|r| {
            Ok(ShiftTableRow {
                class: r[0].clone(),
                labeled_percent: num(&r[1], path, "labeled_percent")?,
                archive_percent: num(&r[2], path, "archive_percent")?,
                ratio: r[3].clone(),
            })
        })
        .collect()
}

/// Creates `dir` and returns it; fails if a file is in the way.
pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))
}
