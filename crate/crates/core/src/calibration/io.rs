use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{CalibrationError, Calibrator, Method, ReliabilityBins, Result};
use crate::datasets::ClassCatalog;

fn io_err(path: &Path, source: std::io::Error) -> CalibrationError {
    CalibrationError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> CalibrationError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(path, source),
        kind => CalibrationError::Parse {
            line,
            reason: format!("{kind:?}"),
        },
    }
}

fn num(s: &str, line: usize, what: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| CalibrationError::Parse {
        line,
        reason: format!("{what}: not a number: {s:?}"),
    })
}

fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// `sample_id, z_0, ..., z_{K-1}`.
pub fn write_logits_csv(path: impl AsRef<Path>, ids: &[String], logits: &[Vec<f64>]) -> Result<()> {
    let path = path.as_ref();
    if ids.len() != logits.len() {
        return Err(CalibrationError::ShapeMismatch(format!(
            "{} ids vs {} rows",
            ids.len(),
            logits.len()
        )));
    }
    let k = logits.first().map(Vec::len).unwrap_or(0);
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = std::iter::once("sample_id".to_string())
        .chain((0..k).map(|i| format!("z{i}")))
        .collect();
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (id, row) in ids.iter().zip(logits) {
        if row.len() != k {
            return Err(CalibrationError::DimensionMismatch {
                expected: k,
                got: row.len(),
            });
        }
        let rec: Vec<String> = std::iter::once(id.clone())
            .chain(row.iter().map(|&v| fmt_real(v)))
            .collect();
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_logits_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let k = r.headers().map_err(|e| csv_err(path, e))?.len().saturating_sub(1);
    let (mut ids, mut rows) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        ids.push(rec[0].to_string());
        rows.push(
            (1..=k)
                .map(|i| num(&rec[i], line, "logit"))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok((ids, rows))
}

/// `sample_id, label` with labels written as class names.
pub fn write_labels_csv(
    path: impl AsRef<Path>,
    ids: &[String],
    labels: &[usize],
    catalog: &ClassCatalog,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["sample_id", "label"]).map_err(|e| csv_err(path, e))?;
    for (id, &y) in ids.iter().zip(labels) {
        let name = catalog
            .classes()
            .get(y)
            .map(|c| c.name.as_str())
            .ok_or_else(|| CalibrationError::ShapeMismatch(format!("label {y} outside catalog")))?;
        w.write_record([id.as_str(), name]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_labels_csv(path: impl AsRef<Path>, catalog: &ClassCatalog) -> Result<(Vec<String>, Vec<usize>)> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let (mut ids, mut labels) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 2 {
            return Err(CalibrationError::Parse {
                line,
                reason: "expected sample_id,label".into(),
            });
        }
        let id = catalog.id_of(&rec[1]).ok_or_else(|| CalibrationError::Parse {
            line,
            reason: format!("unknown class {:?}", &rec[1]),
        })?;
        ids.push(rec[0].to_string());
        labels.push(id.0);
    }
    Ok((ids, labels))
}

/// Method name on the first line, then one `key values...` line per parameter.
pub fn write_calibrator(path: impl AsRef<Path>, c: &Calibrator) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("{}\n", c.method());
    let vec_line = |out: &mut String, key: &str, v: &[f64]| {
        let vals: Vec<String> = v.iter().map(|&x| fmt_real(x)).collect();
        writeln!(out, "{key} {}", vals.join(" ")).expect("string write");
    };
    match c {
        Calibrator::Temperature { t } => vec_line(&mut out, "T", &[*t]),
        Calibrator::Bcts { t, b } => {
            vec_line(&mut out, "T", &[*t]);
            vec_line(&mut out, "b", b);
        }
        Calibrator::Vector { w, b } => {
            vec_line(&mut out, "w", w);
            vec_line(&mut out, "b", b);
        }
        Calibrator::Matrix { w, b } => {
            for row in w {
                vec_line(&mut out, "W", row);
            }
            vec_line(&mut out, "b", b);
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_calibrator(path: impl AsRef<Path>) -> Result<Calibrator> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or(CalibrationError::Parse {
        line: 1,
        reason: "empty calibrator file".into(),
    })?;
    let method: Method = first.parse()?;
    let (mut t, mut b, mut w) = (None, None, None);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in lines {
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default();
        let vals = parts.map(|s| num(s, i + 1, key)).collect::<Result<Vec<f64>>>()?;
        match key {
            "T" => t = vals.first().copied(),
            "b" => b = Some(vals),
            "w" => w = Some(vals),
            "W" => rows.push(vals),
            _ => {
                return Err(CalibrationError::Parse {
                    line: i + 1,
                    reason: format!("unknown key {key:?}"),
                })
            }
        }
    }
    let missing = |what: &str| CalibrationError::Parse {
        line: 0,
        reason: format!("{method} calibrator is missing {what}"),
    };
    let c = match method {
        Method::Temperature => Calibrator::Temperature {
            t: t.ok_or_else(|| missing("T"))?,
        },
        Method::Bcts => Calibrator::Bcts {
            t: t.ok_or_else(|| missing("T"))?,
            b: b.ok_or_else(|| missing("b"))?,
        },
        Method::Vector => Calibrator::Vector {
            w: w.ok_or_else(|| missing("w"))?,
            b: b.ok_or_else(|| missing("b"))?,
        },
        Method::Matrix => Calibrator::Matrix {
            w: rows,
            b: b.ok_or_else(|| missing("b"))?,
        },
    };
    validate(&c)?;
    Ok(c)
}

fn validate(c: &Calibrator) -> Result<()> {
    let bad = |m: &str| {
        Err(CalibrationError::Parse {
            line: 0,
            reason: m.into(),
        })
    };
    match c {
        Calibrator::Temperature { t } | Calibrator::Bcts { t, .. } if !(*t > 0.0 && t.is_finite()) => {
            bad("temperature must be positive and finite")
        }
        Calibrator::Vector { w, b } if w.len() != b.len() => bad("w and b lengths differ"),
        Calibrator::Matrix { w, b } if w.len() != b.len() || w.iter().any(|r| r.len() != b.len()) => {
            bad("W must be K x K with K = len(b)")
        }
        _ => Ok(()),
    }
}

/// `bin_lo, bin_hi, count, conf, acc`.
pub fn write_reliability_csv(path: impl AsRef<Path>, bins: &ReliabilityBins) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["bin_lo", "bin_hi", "count", "conf", "acc"])
        .map_err(|e| csv_err(path, e))?;
    for m in 0..bins.num_bins() {
        let (lo, hi) = bins.edges(m);
        w.write_record([
            format!("{lo:.6}"),
            format!("{hi:.6}"),
            bins.counts[m].to_string(),
            fmt_real(bins.confidence[m]),
            fmt_real(bins.accuracy[m]),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_reliability_csv(path: impl AsRef<Path>) -> Result<ReliabilityBins> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut bins = ReliabilityBins {
        counts: Vec::new(),
        confidence: Vec::new(),
        accuracy: Vec::new(),
    };
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 5 {
            return Err(CalibrationError::Parse {
                line,
                reason: "expected 5 columns".into(),
            });
        }
        bins.counts
            .push(rec[2].trim().parse().map_err(|_| CalibrationError::Parse {
                line,
                reason: format!("count: not an integer: {:?}", &rec[2]),
            })?);
        bins.confidence.push(num(&rec[3], line, "conf")?);
        bins.accuracy.push(num(&rec[4], line, "acc")?);
    }
    if bins.counts.is_empty() {
        return Err(CalibrationError::Parse {
            line: 1,
            reason: "no bins".into(),
        });
    }
    Ok(bins)
}
