//! Post-hoc multiclass calibration and the metrics used to judge it.
//!
//! Four logit rescalings are supported, from a single temperature up to a
//! full affine map. Each is fitted by minimizing validation negative log
//! likelihood. The metrics side covers expected calibration error,
//! reliability bins, confidence-threshold abstention, per-class scores and
//! confusion matrices.

mod fit;
mod io;
mod metrics;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use fit::{fit_calibrator, CalibrationFit, OptConfig};
pub use io::{
    read_calibrator, read_labels_csv, read_logits_csv, read_reliability_csv, write_calibrator, write_labels_csv,
    write_logits_csv, write_reliability_csv,
};
pub use metrics::{
    abstention_report, accuracy, confusion_matrix, ece, mce, per_class_metrics, reliability_bins, threshold_predict,
    ClassMetrics, ConfusionMatrix, F1Group, Prediction, ReliabilityBins, ThresholdReport, DEFAULT_BINS,
};

/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("expected {expected} classes, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("validation labels contain a single class")]
    DegenerateValidation,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown calibration method {0:?}")]
    UnknownMethod(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, CalibrationError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Temperature,
    Bcts,
    Vector,
    Matrix,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Temperature, Method::Bcts, Method::Vector, Method::Matrix];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Temperature => "temperature",
            Method::Bcts => "bcts",
            Method::Vector => "vector",
            Method::Matrix => "matrix",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = CalibrationError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| CalibrationError::UnknownMethod(s.to_string()))
    }
}

/// A fitted logit rescaling. Only the parameters of the active method exist.
#[derive(Debug, Clone, PartialEq)]
pub enum Calibrator {
    Temperature {
        t: f64,
    },
    Bcts {
        t: f64,
        b: Vec<f64>,
    },
    Vector {
        w: Vec<f64>,
        b: Vec<f64>,
    },
    /// `w` is row-major `K x K`.
    Matrix {
        w: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
}

impl Calibrator {
    /// The calibrator of `method` that leaves `softmax(z)` unchanged.
    pub fn identity(method: Method, k: usize) -> Self {
        match method {
            Method::Temperature => Calibrator::Temperature { t: 1.0 },
            Method::Bcts => Calibrator::Bcts {
                t: 1.0,
                b: vec![0.0; k],
            },
            Method::Vector => Calibrator::Vector {
                w: vec![1.0; k],
                b: vec![0.0; k],
            },
            Method::Matrix => Calibrator::Matrix {
                w: (0..k)
                    .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                    .collect(),
                b: vec![0.0; k],
            },
        }
    }

    pub fn method(&self) -> Method {
        match self {
            Calibrator::Temperature { .. } => Method::Temperature,
            Calibrator::Bcts { .. } => Method::Bcts,
            Calibrator::Vector { .. } => Method::Vector,
            Calibrator::Matrix { .. } => Method::Matrix,
        }
    }

    /// Class count fixed by the parameters; `None` for plain temperature.
    pub fn num_classes(&self) -> Option<usize> {
        match self {
            Calibrator::Temperature { .. } => None,
            Calibrator::Bcts { b, .. } | Calibrator::Vector { b, .. } | Calibrator::Matrix { b, .. } => Some(b.len()),
        }
    }

    /// Rescaled logits before the softmax.
    pub fn transform(&self, z: &[f64]) -> Result<Vec<f64>> {
        if let Some(k) = self.num_classes() {
            if z.len() != k {
                return Err(CalibrationError::DimensionMismatch {
                    expected: k,
                    got: z.len(),
                });
            }
        }
        Ok(match self {
            Calibrator::Temperature { t } => z.iter().map(|v| v / t).collect(),
            Calibrator::Bcts { t, b } => z.iter().zip(b).map(|(v, bk)| v / t + bk).collect(),
            Calibrator::Vector { w, b } => z.iter().zip(w).zip(b).map(|((v, wk), bk)| wk * v + bk).collect(),
            Calibrator::Matrix { w, b } => w
                .iter()
                .zip(b)
                .map(|(row, bk)| row.iter().zip(z).map(|(a, v)| a * v).sum::<f64>() + bk)
                .collect(),
        })
    }
}

/// Max-shifted softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn apply_calibrator(c: &Calibrator, z: &[f64]) -> Result<Vec<f64>> {
    Ok(softmax(&c.transform(z)?))
}

pub fn apply_calibrator_batch(c: &Calibrator, logits: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    logits.iter().map(|z| apply_calibrator(c, z)).collect()
}

/// Mean negative log likelihood of the labeled class.
pub fn nll(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(CalibrationError::ShapeMismatch(format!(
            "{} probability rows vs {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(CalibrationError::ShapeMismatch("no rows".into()));
    }
    let mut total = 0.0;
    for (row, &y) in probs.iter().zip(labels) {
        let p = *row
            .get(y)
            .ok_or_else(|| CalibrationError::ShapeMismatch(format!("label {y} outside {} classes", row.len())))?;
        total -= p.max(PROB_FLOOR).ln();
    }
    Ok(total / probs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let big = softmax(&[1000.0, 0.0]);
        assert!(big[0] > 1.0 - 1e-12 && big[1] < 1e-12);
        assert!(close(&softmax(&[1.0, 0.0]), &[0.731059, 0.268941], 1e-6));
    }

    #[test]
    fn calibrator_examples() {
        let t2 = Calibrator::Temperature { t: 2.0 };
        assert!(close(
            &apply_calibrator(&t2, &[2.0, 0.0]).unwrap(),
            &[0.731059, 0.268941],
            1e-6
        ));
        let bcts = Calibrator::Bcts {
            t: 1.0,
            b: vec![0.0, 2f64.ln()],
        };
        assert!(close(
            &apply_calibrator(&bcts, &[1.0, 1.0]).unwrap(),
            &[1.0 / 3.0, 2.0 / 3.0],
            1e-12
        ));
        let z = [0.3, -1.2, 2.5];
        for m in Method::ALL {
            let p = apply_calibrator(&Calibrator::identity(m, 3), &z).unwrap();
            assert!(close(&p, &softmax(&z), 1e-12), "{m}");
        }
        assert!(matches!(
            apply_calibrator(&Calibrator::identity(Method::Vector, 2), &z),
            Err(CalibrationError::DimensionMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn nll_examples() {
        assert!(nll(&[vec![1.0, 0.0]], &[0]).unwrap().abs() < 1e-15);
        assert!((nll(&[vec![0.5, 0.5]], &[0]).unwrap() - 2f64.ln()).abs() < 1e-12);
        let uniform = vec![vec![0.25; 4]; 5];
        assert!((nll(&uniform, &[0, 1, 2, 3, 1]).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!(nll(&uniform, &[0]).is_err());
    }

    #[test]
    fn method_parsing() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert_eq!("MATRIX".parse::<Method>().unwrap(), Method::Matrix);
        assert!("isotonic".parse::<Method>().is_err());
    }
}
