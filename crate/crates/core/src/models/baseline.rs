use super::{ModelError, Result};
use crate::datasets::ClassId;

/// Always predicts the most frequent training class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MostCommonBaseline {
    pub class: ClassId,
}

impl MostCommonBaseline {
    /// Ties go to the class with the smaller id (catalog order).
    pub fn fit(labels: &[ClassId]) -> Result<Self> {
        let max = labels
            .iter()
            .map(|c| c.0)
            .max()
            .ok_or_else(|| ModelError::ShapeMismatch("no training labels".into()))?;
        let mut counts = vec![0usize; max + 1];
        for c in labels {
            counts[c.0] += 1;
        }
        let best = (0..counts.len()).fold(0, |b, i| if counts[i] > counts[b] { i } else { b });
        Ok(Self { class: ClassId(best) })
    }

    pub fn predict(&self) -> ClassId {
        self.class
    }

    pub fn accuracy(&self, labels: &[ClassId]) -> f64 {
        if labels.is_empty() {
            return 0.0;
        }
        labels.iter().filter(|&&c| c == self.class).count() as f64 / labels.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modal_class_and_ties() {
        let (a, b) = (ClassId(0), ClassId(1));
        assert_eq!(MostCommonBaseline::fit(&[a, a, b]).unwrap().predict(), a);
        assert_eq!(MostCommonBaseline::fit(&[b, a]).unwrap().predict(), a);
        assert!(MostCommonBaseline::fit(&[]).is_err());
    }

    #[test]
    fn accuracy_equals_majority_share() {
        let (a, b) = (ClassId(0), ClassId(3));
        let model = MostCommonBaseline::fit(&[a, a, b]).unwrap();
        let mut held = vec![a; 811];
        held.extend(vec![b; 189]);
        assert!((model.accuracy(&held) - 0.811).abs() < 1e-12);
    }
}
