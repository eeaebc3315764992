use std::collections::BTreeSet;

use super::{ModelError, Result, SoftmaxHead};
use crate::datasets::ClassId;

/// Runs the coarse head and hands inputs landing on the trigger class to
/// the fine-grained head. Both heads use ids from one shared catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridClassifier {
    pub v2: SoftmaxHead,
    pub v1: SoftmaxHead,
    pub trigger: ClassId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridOutput {
    pub class: ClassId,
    /// Probabilities of the head that produced `class`.
    pub probs: Vec<f64>,
    pub used_v1: bool,
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

impl HybridClassifier {
    pub fn new(v2: SoftmaxHead, v1: SoftmaxHead, trigger: ClassId) -> Result<Self> {
        if v2.index_of(trigger).is_none() {
            return Err(ModelError::Invalid(format!(
                "trigger class {trigger} is not a v2 class"
            )));
        }
        if v1.index_of(trigger).is_some() {
            return Err(ModelError::Invalid(format!(
                "trigger class {trigger} must not be a v1 class"
            )));
        }
        Ok(Self { v2, v1, trigger })
    }

    pub fn classify(&self, x: &[f64]) -> Result<HybridOutput> {
        let p2 = self.v2.predict_proba(x)?;
        let top = self.v2.classes[argmax(&p2)];
        if top != self.trigger {
            return Ok(HybridOutput {
                class: top,
                probs: p2,
                used_v1: false,
            });
        }
        let p1 = self.v1.predict_proba(x)?;
        Ok(HybridOutput {
            class: self.v1.classes[argmax(&p1)],
            probs: p1,
            used_v1: true,
        })
    }

    /// Every class the classifier can emit.
    pub fn reachable_classes(&self) -> BTreeSet<ClassId> {
        self.v2
            .classes
            .iter()
            .copied()
            .filter(|&c| c != self.trigger)
            .chain(self.v1.classes.iter().copied())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn head(classes: &[usize], favored: usize) -> SoftmaxHead {
        let mut h = SoftmaxHead::zeros(classes.iter().map(|&c| ClassId(c)).collect(), 1);
        h.bias[favored] = 5.0;
        h
    }

    #[test]
    fn no_trigger_keeps_v2() {
        let h = HybridClassifier::new(head(&[0, 1, 2], 0), head(&[3, 4], 1), ClassId(2)).unwrap();
        let out = h.classify(&[0.0]).unwrap();
        assert_eq!((out.class, out.used_v1), (ClassId(0), false));
        assert_eq!(out.probs.len(), 3);
    }

    #[test]
    fn trigger_defers_to_v1() {
        let h = HybridClassifier::new(head(&[0, 1, 2], 2), head(&[3, 4], 1), ClassId(2)).unwrap();
        let out = h.classify(&[0.0]).unwrap();
        assert_eq!((out.class, out.used_v1), (ClassId(4), true));
        assert_eq!(out.probs.len(), 2);
    }

    #[test]
    fn reachable_set_size() {
        let v2: Vec<usize> = (0..19).collect();
        let v1: Vec<usize> = (19..36).collect();
        let h = HybridClassifier::new(head(&v2, 0), head(&v1, 0), ClassId(18)).unwrap();
        assert_eq!(h.reachable_classes().len(), 35);
    }

    #[test]
    fn invalid_trigger() {
        assert!(HybridClassifier::new(head(&[0, 1], 0), head(&[2, 3], 0), ClassId(5)).is_err());
        assert!(HybridClassifier::new(head(&[0, 1], 0), head(&[1, 3], 0), ClassId(1)).is_err());
    }
}
