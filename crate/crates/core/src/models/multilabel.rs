use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_classes, check_dim, check_features, dot, sigmoid, ModelError, Result, SgdConfig};
use crate::calibration::PROB_FLOOR;
use crate::datasets::ClassId;

/// Independent one-vs-all sigmoid outputs (binary relevance).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLabelHead {
    pub classes: Vec<ClassId>,
    /// `N x D`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl MultiLabelHead {
    pub fn zeros(classes: Vec<ClassId>, dim: usize) -> Self {
        let n = classes.len();
        Self {
            classes,
            weights: vec![vec![0.0; dim]; n],
            bias: vec![0.0; n],
        }
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
        Ok(self.predict_logits(x)?.into_iter().map(sigmoid).collect())
    }
}

fn check_same_shape(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<()> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.len() != y.len()) {
        return Err(ModelError::ShapeMismatch(
            "targets and predictions differ in shape".into(),
        ));
    }
    if a.is_empty() || a[0].is_empty() {
        return Err(ModelError::ShapeMismatch("empty targets".into()));
    }
    Ok(())
}

/// Mean binary cross-entropy over all `n` rows and `N` classes, with
/// probabilities clamped to `[1e-12, 1 - 1e-12]`.
pub fn multilabel_loss(targets: &[Vec<f64>], probs: &[Vec<f64>]) -> Result<f64> {
    check_same_shape(targets, probs)?;
    let (n, classes) = (targets.len(), targets[0].len());
    let mut total = 0.0;
    for (yr, pr) in targets.iter().zip(probs) {
        for (&y, &p) in yr.iter().zip(pr) {
            let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            total += y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        }
    }
    Ok(-total / (classes * n) as f64)
}

/// Gradient of [`multilabel_loss`] with respect to the logits:
/// `(sigmoid(z) - y) / (N * n)`.
pub fn multilabel_logit_grad(targets: &[Vec<f64>], logits: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    check_same_shape(targets, logits)?;
    let scale = (targets.len() * targets[0].len()) as f64;
    Ok(targets
        .iter()
        .zip(logits)
        .map(|(yr, zr)| yr.iter().zip(zr).map(|(&y, &z)| (sigmoid(z) - y) / scale).collect())
        .collect())
}

pub(crate) fn to_targets(targets: &[Vec<bool>]) -> Vec<Vec<f64>> {
    targets
        .iter()
        .map(|r| r.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
        .collect()
}

pub fn train_multilabel(
    features: &[Vec<f64>],
    targets: &[Vec<bool>],
    classes: Vec<ClassId>,
    cfg: &SgdConfig,
) -> Result<MultiLabelHead> {
    cfg.validate()?;
    check_classes(&classes)?;
    let d = check_features(features)?;
    if classes.is_empty() {
        return Err(ModelError::ShapeMismatch("no classes".into()));
    }
    if targets.len() != features.len() || targets.iter().any(|t| t.len() != classes.len()) {
        return Err(ModelError::ShapeMismatch(format!(
            "targets must be {} x {}",
            features.len(),
            classes.len()
        )));
    }
    let y = to_targets(targets);
    let mut head = MultiLabelHead::zeros(classes, d);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let by: Vec<Vec<f64>> = batch.iter().map(|&i| y[i].clone()).collect();
            let bz = batch
                .iter()
                .map(|&i| head.predict_logits(&features[i]))
                .collect::<Result<Vec<_>>>()?;
            let g = multilabel_logit_grad(&by, &bz)?;
            for c in 0..head.classes.len() {
                let mut gb = 0.0;
                let mut gw = vec![0.0; d];
                for (row, &i) in g.iter().zip(batch) {
                    gb += row[c];
                    for (gj, xj) in gw.iter_mut().zip(&features[i]) {
                        *gj += row[c] * xj;
                    }
                }
                for (wj, gj) in head.weights[c].iter_mut().zip(&gw) {
                    *wj -= cfg.learning_rate * (gj + 2.0 * cfg.l2 * *wj);
                }
                head.bias[c] -= cfg.learning_rate * gb;
            }
        }
    }
    Ok(head)
}
