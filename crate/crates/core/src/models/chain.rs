use std::collections::BTreeSet;

use super::multilabel::train_multilabel;
use super::{check_dim, check_features, dot, sigmoid, ModelError, MultiLabelHead, Result, SgdConfig};
use crate::datasets::{
    ClassCatalog, ClassId, GROUP_ARTIFICIAL_GEOLOGY, GROUP_IMAGE_TYPE, GROUP_MISC, GROUP_NATURAL_GEOLOGY,
    GROUP_ROVER_HARDWARE,
};

/// Site token used for sites missing from the training vocabulary.
pub const UNKNOWN_SITE: &str = "<unknown>";

/// Classifier chain: step `t` sees the features, the raw logits of steps
/// `0..t`, and a one-hot site encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    /// Chain order.
    pub classes: Vec<ClassId>,
    pub feature_dim: usize,
    /// Site vocabulary; the last entry is always [`UNKNOWN_SITE`].
    pub sites: Vec<String>,
    /// Step `t` has `feature_dim + t + sites.len()` weights.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    /// Reject sites outside the vocabulary instead of mapping them to the unknown token.
    pub strict: bool,
}

/// Sorted, deduplicated vocabulary with the unknown token appended.
pub fn site_vocabulary<S: AsRef<str>>(sites: &[S]) -> Vec<String> {
    let set: BTreeSet<&str> = sites
        .iter()
        .map(|s| s.as_ref())
        .filter(|s| *s != UNKNOWN_SITE)
        .collect();
    set.into_iter()
        .map(str::to_string)
        .chain([UNKNOWN_SITE.to_string()])
        .collect()
}

fn group_rank(group: &str) -> usize {
    [
        GROUP_IMAGE_TYPE,
        GROUP_ROVER_HARDWARE,
        GROUP_ARTIFICIAL_GEOLOGY,
        GROUP_NATURAL_GEOLOGY,
        GROUP_MISC,
    ]
    .iter()
    .position(|g| g.eq_ignore_ascii_case(group))
    .unwrap_or(5)
}

/// Chain order for a catalog: image type, rover hardware, artificial
/// geology, natural geology, then anything else; alphabetical within a group.
pub fn chain_order(catalog: &ClassCatalog) -> Vec<ClassId> {
    let mut ids: Vec<ClassId> = catalog.ids().collect();
    ids.sort_by(|&a, &b| {
        (
            group_rank(catalog.group(a)),
            catalog.group(a),
            catalog.name(a).to_lowercase(),
            a,
        )
            .cmp(&(
                group_rank(catalog.group(b)),
                catalog.group(b),
                catalog.name(b).to_lowercase(),
                b,
            ))
    });
    ids
}

impl ChainModel {
    pub fn zeros(classes: Vec<ClassId>, feature_dim: usize, sites: Vec<String>) -> Self {
        let s = sites.len();
        let weights = (0..classes.len()).map(|t| vec![0.0; feature_dim + t + s]).collect();
        let bias = vec![0.0; classes.len()];
        Self {
            classes,
            feature_dim,
            sites,
            weights,
            bias,
            strict: false,
        }
    }

    /// Chain whose appended-logit weights are zero, built from a
    /// binary-relevance head over `[features ++ onehot(site)]`.
    pub fn from_binary_relevance(head: &MultiLabelHead, feature_dim: usize, sites: Vec<String>) -> Result<Self> {
        check_dim(feature_dim + sites.len(), head.dim())?;
        let mut chain = Self::zeros(head.classes.clone(), feature_dim, sites);
        for (t, (w, b)) in head.weights.iter().zip(&head.bias).enumerate() {
            let step = &mut chain.weights[t];
            step[..feature_dim].copy_from_slice(&w[..feature_dim]);
            step[feature_dim + t..].copy_from_slice(&w[feature_dim..]);
            chain.bias[t] = *b;
        }
        Ok(chain)
    }

    pub fn site_index(&self, site: Option<&str>) -> Result<usize> {
        let unknown = self.sites.len() - 1;
        match site {
            Some(s) => match self.sites[..unknown].iter().position(|v| v == s) {
                Some(i) => Ok(i),
                None if self.strict => Err(ModelError::UnknownSite(s.to_string())),
                None => Ok(unknown),
            },
            None if self.strict => Err(ModelError::UnknownSite(String::new())),
            None => Ok(unknown),
        }
    }

    pub fn site_onehot(&self, site: Option<&str>) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.sites.len()];
        v[self.site_index(site)?] = 1.0;
        Ok(v)
    }

    /// Raw logits in chain order.
    pub fn predict_logits(&self, x: &[f64], site: Option<&str>) -> Result<Vec<f64>> {
        check_dim(self.feature_dim, x.len())?;
        let onehot = self.site_onehot(site)?;
        let mut input: Vec<f64> = x.to_vec();
        let mut logits = Vec::with_capacity(self.classes.len());
        for (w, b) in self.weights.iter().zip(&self.bias) {
            let mut full = input.clone();
            full.extend_from_slice(&onehot);
            let z = dot(w, &full) + b;
            logits.push(z);
            input.push(z);
        }
        Ok(logits)
    }

    /// Sigmoid probabilities in chain order.
    pub fn predict_chain(&self, x: &[f64], site: Option<&str>) -> Result<Vec<f64>> {
        Ok(self.predict_logits(x, site)?.into_iter().map(sigmoid).collect())
    }
}

/// Trains the chain one step at a time; each step's inputs use the logits
/// predicted by the already-trained earlier steps. `targets[i][t]` is the
/// label of `classes[t]` for row `i`.
pub fn train_chain(
    features: &[Vec<f64>],
    targets: &[Vec<bool>],
    sites: &[String],
    classes: Vec<ClassId>,
    cfg: &SgdConfig,
) -> Result<ChainModel> {
    let d = check_features(features)?;
    if targets.len() != features.len() || sites.len() != features.len() {
        return Err(ModelError::ShapeMismatch(
            "features, targets and sites differ in length".into(),
        ));
    }
    if targets.iter().any(|t| t.len() != classes.len()) {
        return Err(ModelError::ShapeMismatch(format!(
            "targets must have {} columns",
            classes.len()
        )));
    }
    let mut model = ChainModel::zeros(classes.clone(), d, site_vocabulary(sites));
    let onehots = sites
        .iter()
        .map(|s| model.site_onehot(Some(s)))
        .collect::<Result<Vec<_>>>()?;
    let mut prev: Vec<Vec<f64>> = features.to_vec();
    for (t, &class) in classes.iter().enumerate() {
        let inputs: Vec<Vec<f64>> = prev
            .iter()
            .zip(&onehots)
            .map(|(p, o)| p.iter().chain(o).copied().collect())
            .collect();
        let column: Vec<Vec<bool>> = targets.iter().map(|r| vec![r[t]]).collect();
        let step = train_multilabel(&inputs, &column, vec![class], cfg)?;
        model.weights[t] = step.weights[0].clone();
        model.bias[t] = step.bias[0];
        for (p, full) in prev.iter_mut().zip(&inputs) {
            p.push(dot(&model.weights[t], full) + model.bias[t]);
        }
    }
    Ok(model)
}
