use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_classes, check_dim, check_features, dot, ModelError, Result, SgdConfig};
use crate::calibration::{softmax, PROB_FLOOR};
use crate::datasets::ClassId;

/// `z = W x + bias` over `K` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxHead {
    pub classes: Vec<ClassId>,
    /// `K x D`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl SoftmaxHead {
    pub fn zeros(classes: Vec<ClassId>, dim: usize) -> Self {
        let k = classes.len();
        Self {
            classes,
            weights: vec![vec![0.0; dim]; k],
            bias: vec![0.0; k],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.first().map(Vec::len).unwrap_or(0)
    }

    pub fn predict_logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| dot(w, x) + b)
            .collect())
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.predict_logits(x)?))
    }

    /// Position of `class` in this head's output.
    pub fn index_of(&self, class: ClassId) -> Option<usize> {
        self.classes.iter().position(|&c| c == class)
    }
}

/// Mean cross-entropy plus `l2 * ||W||^2` over `rows`, with gradients in
/// the shape of the weights and bias.
pub fn softmax_loss_grad(
    head: &SoftmaxHead,
    features: &[Vec<f64>],
    labels: &[usize],
    rows: &[usize],
    l2: f64,
) -> Result<(f64, Vec<Vec<f64>>, Vec<f64>)> {
    let (k, d) = (head.num_classes(), head.dim());
    let mut gw = vec![vec![0.0; d]; k];
    let mut gb = vec![0.0; k];
    let mut loss = 0.0;
    let n = rows.len() as f64;
    for &i in rows {
        let p = head.predict_proba(&features[i])?;
        let y = labels[i];
        loss -= p[y].max(PROB_FLOOR).ln();
        for c in 0..k {
            let g = (p[c] - if c == y { 1.0 } else { 0.0 }) / n;
            gb[c] += g;
            for (gwj, xj) in gw[c].iter_mut().zip(&features[i]) {
                *gwj += g * xj;
            }
        }
    }
    loss /= n;
    if l2 > 0.0 {
        for (w, g) in head.weights.iter().zip(&mut gw) {
            for (wj, gj) in w.iter().zip(g.iter_mut()) {
                loss += l2 * wj * wj;
                *gj += 2.0 * l2 * wj;
            }
        }
    }
    Ok((loss, gw, gb))
}

/// Trains a zero-initialized head by mini-batch SGD. `labels[i]` indexes
/// into `classes`.
pub fn train_softmax(
    features: &[Vec<f64>],
    labels: &[usize],
    classes: Vec<ClassId>,
    cfg: &SgdConfig,
) -> Result<SoftmaxHead> {
    cfg.validate()?;
    check_classes(&classes)?;
    let d = check_features(features)?;
    if features.len() != labels.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "{} feature rows vs {} labels",
            features.len(),
            labels.len()
        )));
    }
    if classes.len() < 2 {
        return Err(ModelError::SingleClass);
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes.len()) {
        return Err(ModelError::ShapeMismatch(format!(
            "label {bad} outside {} classes",
            classes.len()
        )));
    }
    if labels.iter().all(|&y| y == labels[0]) {
        return Err(ModelError::SingleClass);
    }
    let mut head = SoftmaxHead::zeros(classes, d);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let (_, gw, gb) = softmax_loss_grad(&head, features, labels, batch, cfg.l2)?;
            for (w, g) in head.weights.iter_mut().zip(&gw) {
                for (wj, gj) in w.iter_mut().zip(g) {
                    *wj -= cfg.learning_rate * gj;
                }
            }
            for (b, g) in head.bias.iter_mut().zip(&gb) {
                *b -= cfg.learning_rate * g;
            }
        }
    }
    Ok(head)
}
