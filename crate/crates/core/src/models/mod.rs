//! Linear classification heads over fixed hand-crafted image features.

mod baseline;
mod chain;
mod features;
mod hybrid;
mod io;
mod multilabel;
mod softmax;

use thiserror::Error;

pub use baseline::MostCommonBaseline;
pub use chain::{chain_order, site_vocabulary, train_chain, ChainModel, UNKNOWN_SITE};
pub use features::{extract_features, FEATURE_DIM, HISTOGRAM_BINS};
pub use hybrid::{HybridClassifier, HybridOutput};
pub use io::{parse_model, read_model, write_model, Model};
pub use multilabel::{multilabel_logit_grad, multilabel_loss, train_multilabel, MultiLabelHead};
pub use softmax::{softmax_loss_grad, train_softmax, SoftmaxHead};

use crate::datasets::ClassId;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("unknown site {0:?}")]
    UnknownSite(String),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Mini-batch SGD settings shared by every head.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub l2: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 100,
            batch_size: 32,
            seed: 0,
            l2: 0.0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || !(self.l2 >= 0.0) {
            return Err(ModelError::Invalid(format!("bad SGD settings {self:?}")));
        }
        Ok(())
    }
}

/// A head producing one logit per class, aligned with `classes()`.
pub trait Scorer: Sync {
    fn classes(&self) -> &[ClassId];
    fn logits(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl Scorer for SoftmaxHead {
    fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.predict_logits(x)
    }
}

impl Scorer for MultiLabelHead {
    fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.predict_logits(x)
    }
}

/// Scores with the unknown-site indicator.
impl Scorer for ChainModel {
    fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.predict_logits(x, None)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Left-to-right dot product. Every head uses this so that heads sharing
/// weights produce bit-identical logits.
pub(crate) fn dot(w: &[f64], x: &[f64]) -> f64 {
    let mut s = 0.0;
    for (a, b) in w.iter().zip(x) {
        s += a * b;
    }
    s
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(ModelError::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub(crate) fn check_features(features: &[Vec<f64>]) -> Result<usize> {
    let d = features
        .first()
        .map(Vec::len)
        .ok_or_else(|| ModelError::ShapeMismatch("no training rows".into()))?;
    for f in features {
        check_dim(d, f.len())?;
    }
    Ok(d)
}

pub(crate) fn check_classes(classes: &[ClassId]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    if !classes.iter().all(|c| seen.insert(*c)) {
        return Err(ModelError::Invalid("duplicate class id".into()));
    }
    Ok(())
}
