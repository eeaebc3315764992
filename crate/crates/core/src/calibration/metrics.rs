use super::{CalibrationError, Result};
use crate::datasets::{ClassCatalog, ClassId};

pub const DEFAULT_BINS: usize = 10;

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn check_rows(probs: &[Vec<f64>], labels: &[usize]) -> Result<()> {
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
    Ok(())
}

/// Bin holding `conf`: bins are `(m/M, (m+1)/M]`, with `[0, 1/M]` first.
fn bin_index(conf: f64, m: usize) -> usize {
    let mf = m as f64;
    let mut idx = ((conf * mf).ceil() as isize - 1).clamp(0, m as isize - 1) as usize;
    while idx > 0 && conf <= idx as f64 / mf {
        idx -= 1;
    }
    while idx + 1 < m && conf > (idx + 1) as f64 / mf {
        idx += 1;
    }
    idx
}

/// Per-bin counts, mean confidences and accuracies. Empty bins report zero
/// confidence and accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityBins {
    pub counts: Vec<usize>,
    pub confidence: Vec<f64>,
    pub accuracy: Vec<f64>,
}

impl ReliabilityBins {
    pub fn num_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `(lo, hi)` edges of bin `m`.
    pub fn edges(&self, m: usize) -> (f64, f64) {
        let n = self.num_bins() as f64;
        (m as f64 / n, (m + 1) as f64 / n)
    }

    pub fn ece(&self) -> f64 {
        let n = self.total() as f64;
        self.counts
            .iter()
            .zip(self.confidence.iter().zip(&self.accuracy))
            .filter(|(&c, _)| c > 0)
            .map(|(&c, (conf, acc))| c as f64 / n * (acc - conf).abs())
            .sum()
    }

    /// Largest per-bin gap over nonempty bins.
    pub fn mce(&self) -> f64 {
        self.counts
            .iter()
            .zip(self.confidence.iter().zip(&self.accuracy))
            .filter(|(&c, _)| c > 0)
            .map(|(_, (conf, acc))| (acc - conf).abs())
            .fold(0.0, f64::max)
    }
}

pub fn reliability_bins(probs: &[Vec<f64>], labels: &[usize], m: usize) -> Result<ReliabilityBins> {
    check_rows(probs, labels)?;
    if m == 0 {
        return Err(CalibrationError::InvalidConfig("bin count must be positive".into()));
    }
    let mut counts = vec![0usize; m];
    let mut conf_sum = vec![0.0; m];
    let mut correct = vec![0usize; m];
    for (row, &y) in probs.iter().zip(labels) {
        let pred = argmax(row);
        let conf = row[pred];
        let b = bin_index(conf, m);
        counts[b] += 1;
        conf_sum[b] += conf;
        if pred == y {
            correct[b] += 1;
        }
    }
    let confidence = counts
        .iter()
        .zip(&conf_sum)
        .map(|(&c, &s)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let accuracy = counts
        .iter()
        .zip(&correct)
        .map(|(&c, &k)| if c > 0 { k as f64 / c as f64 } else { 0.0 })
        .collect();
    Ok(ReliabilityBins {
        counts,
        confidence,
        accuracy,
    })
}

/// Expected calibration error over `m` equal-width confidence bins.
pub fn ece(probs: &[Vec<f64>], labels: &[usize], m: usize) -> Result<f64> {
    Ok(reliability_bins(probs, labels, m)?.ece())
}

/// Maximum calibration error over `m` bins. Reported, not used for selection.
pub fn mce(probs: &[Vec<f64>], labels: &[usize], m: usize) -> Result<f64> {
    Ok(reliability_bins(probs, labels, m)?.mce())
}

/// Plain argmax accuracy.
pub fn accuracy(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    check_rows(probs, labels)?;
    let hits = probs.iter().zip(labels).filter(|(row, &y)| argmax(row) == y).count();
    Ok(hits as f64 / probs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Prediction {
    Class(usize),
    Abstain,
}

impl Prediction {
    pub fn class(self) -> Option<usize> {
        match self {
            Prediction::Class(k) => Some(k),
            Prediction::Abstain => None,
        }
    }
}

/// Emits the argmax class when its probability is at least `tau`.
pub fn threshold_predict(row: &[f64], tau: f64) -> Prediction {
    if row.is_empty() {
        return Prediction::Abstain;
    }
    let k = argmax(row);
    if row[k] >= tau {
        Prediction::Class(k)
    } else {
        Prediction::Abstain
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    pub tau: f64,
    /// Accuracy over retained rows; 0 when every row abstains.
    pub accuracy_at_tau: f64,
    pub accuracy_defined: bool,
    pub abstention_rate: f64,
    pub n_total: usize,
    pub n_abstained: usize,
}

pub fn abstention_report(probs: &[Vec<f64>], labels: &[usize], tau: f64) -> Result<ThresholdReport> {
    check_rows(probs, labels)?;
    let (mut kept, mut correct) = (0usize, 0usize);
    for (row, &y) in probs.iter().zip(labels) {
        if let Prediction::Class(k) = threshold_predict(row, tau) {
            kept += 1;
            if k == y {
                correct += 1;
            }
        }
    }
    let n = probs.len();
    Ok(ThresholdReport {
        tau,
        accuracy_at_tau: if kept > 0 { correct as f64 / kept as f64 } else { 0.0 },
        accuracy_defined: kept > 0,
        abstention_rate: (n - kept) as f64 / n as f64,
        n_total: n,
        n_abstained: n - kept,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum F1Group {
    /// F1 above 0.6.
    High,
    /// F1 in [0.2, 0.6].
    Mid,
    /// F1 below 0.2.
    Low,
}

impl F1Group {
    pub fn of(f1: f64) -> Self {
        if f1 > 0.6 {
            F1Group::High
        } else if f1 >= 0.2 {
            F1Group::Mid
        } else {
            F1Group::Low
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            F1Group::High => "high",
            F1Group::Mid => "mid",
            F1Group::Low => "low",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub class: ClassId,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub predicted: usize,
    /// False when precision or recall had an empty denominator and was set to 0.
    pub defined: bool,
    pub group: F1Group,
}

/// Per-class precision, recall and F1. Abstentions count as misses.
pub fn per_class_metrics(preds: &[Prediction], labels: &[usize], catalog: &ClassCatalog) -> Result<Vec<ClassMetrics>> {
    let cm = confusion_matrix(preds, labels, catalog)?;
    let k = catalog.len();
    Ok((0..k)
        .map(|c| {
            let tp = cm.counts[c][c];
            let support = cm.row_total(c);
            let predicted: usize = (0..k).map(|r| cm.counts[r][c]).sum();
            let precision = if predicted > 0 {
                tp as f64 / predicted as f64
            } else {
                0.0
            };
            let recall = if support > 0 { tp as f64 / support as f64 } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                class: ClassId(c),
                precision,
                recall,
                f1,
                support,
                predicted,
                defined: predicted > 0 && support > 0,
                group: F1Group::of(f1),
            }
        })
        .collect())
}

/// Rows are true classes; columns are predicted classes plus a final
/// abstain column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn abstained(&self, row: usize) -> usize {
        *self.counts[row].last().expect("abstain column")
    }

    pub fn row_total(&self, row: usize) -> usize {
        self.counts[row].iter().sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

pub fn confusion_matrix(preds: &[Prediction], labels: &[usize], catalog: &ClassCatalog) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(CalibrationError::ShapeMismatch(format!(
            "{} predictions vs {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let k = catalog.len();
    let mut counts = vec![vec![0usize; k + 1]; k];
    for (p, &y) in preds.iter().zip(labels) {
        if y >= k {
            return Err(CalibrationError::ShapeMismatch(format!(
                "label {y} outside {k} classes"
            )));
        }
        let col = match *p {
            Prediction::Class(c) if c < k => c,
            Prediction::Class(c) => {
                return Err(CalibrationError::ShapeMismatch(format!(
                    "prediction {c} outside {k} classes"
                )))
            }
            Prediction::Abstain => k,
        };
        counts[y][col] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn catalog(k: usize) -> ClassCatalog {
        let names: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
        ClassCatalog::from_names(&names).unwrap()
    }

    #[test]
    fn ece_hand_case() {
        let probs = vec![vec![0.6, 0.4], vec![0.9, 0.1]];
        let e = ece(&probs, &[1, 0], 2).unwrap();
        assert!((e - 0.25).abs() < 1e-12);
        let perfect = vec![vec![1.0, 0.0]; 3];
        assert_eq!(ece(&perfect, &[0, 0, 0], 10).unwrap(), 0.0);
    }

    #[test]
    fn bin_edges_are_right_closed() {
        assert_eq!(bin_index(0.5, 2), 0);
        assert_eq!(bin_index(0.5000001, 2), 1);
        assert_eq!(bin_index(1.0, 10), 9);
        assert_eq!(bin_index(0.1, 10), 0);
        assert_eq!(bin_index(0.7, 10), 6);
        assert_eq!(bin_index(0.3, 10), 2);
        assert_eq!(bin_index(0.0, 4), 0);
    }

    #[test]
    fn single_row_bins() {
        let bins = reliability_bins(&[vec![0.7, 0.3]], &[0], 10).unwrap();
        let b = bins.counts.iter().position(|&c| c == 1).unwrap();
        assert_eq!(bins.edges(b), (0.6, 0.7));
        assert_eq!((bins.confidence[b], bins.accuracy[b]), (0.7, 1.0));
        assert!(bins.counts.iter().enumerate().all(|(i, &c)| i == b || c == 0));
        assert!(bins.confidence.iter().enumerate().all(|(i, &v)| i == b || v == 0.0));
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(threshold_predict(&[0.95, 0.03, 0.02], 0.9), Prediction::Class(0));
        assert_eq!(threshold_predict(&[0.6, 0.3, 0.1], 0.9), Prediction::Abstain);
        assert_eq!(threshold_predict(&[0.9, 0.1], 0.9), Prediction::Class(0));
        assert_eq!(threshold_predict(&[0.5, 0.5], 0.5), Prediction::Class(0));
    }

    #[test]
    fn abstention_examples() {
        let probs = vec![vec![0.95, 0.05], vec![0.92, 0.08], vec![0.5, 0.5]];
        let r = abstention_report(&probs, &[0, 1, 0], 0.9).unwrap();
        assert!((r.abstention_rate - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.accuracy_at_tau, 0.5);
        let r0 = abstention_report(&probs, &[0, 1, 0], 0.0).unwrap();
        assert_eq!(r0.abstention_rate, 0.0);
        assert_eq!(r0.accuracy_at_tau, accuracy(&probs, &[0, 1, 0]).unwrap());
        let r1 = abstention_report(&[vec![1.0, 0.0], vec![0.99, 0.01]], &[0, 0], 1.0).unwrap();
        assert_eq!(r1.n_abstained, 1);
        let none = abstention_report(&[vec![0.5, 0.5]], &[0], 0.9).unwrap();
        assert!(!none.accuracy_defined);
    }

    #[test]
    fn per_class_and_confusion_examples() {
        let cat = catalog(3);
        let preds = [Prediction::Class(0), Prediction::Abstain, Prediction::Class(1)];
        let labels = [0, 0, 1];
        let m = per_class_metrics(&preds, &labels, &cat).unwrap();
        assert_eq!(m[0].recall, 0.5);
        assert_eq!(m[0].precision, 1.0);
        assert_eq!((m[1].precision, m[1].recall, m[1].f1), (1.0, 1.0, 1.0));
        assert_eq!((m[2].support, m[2].f1, m[2].defined), (0, 0.0, false));

        let cm = confusion_matrix(&[Prediction::Class(1), Prediction::Abstain], &[0, 0], &catalog(2)).unwrap();
        assert_eq!(cm.counts[0], vec![0, 1, 1]);
        assert_eq!(cm.total(), 2);
        let diag = confusion_matrix(&[Prediction::Class(0), Prediction::Class(1)], &[0, 1], &catalog(2)).unwrap();
        assert_eq!(diag.counts, vec![vec![1, 0, 0], vec![0, 1, 0]]);
    }

    #[test]
    fn f1_groups() {
        assert_eq!(F1Group::of(0.65), F1Group::High);
        assert_eq!(F1Group::of(0.6), F1Group::Mid);
        assert_eq!(F1Group::of(0.2), F1Group::Mid);
        assert_eq!(F1Group::of(0.1), F1Group::Low);
    }

    fn rows() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
        (2usize..6).prop_flat_map(|k| {
            prop::collection::vec((prop::collection::vec(0.01f64..1.0, k), 0..k), 1..60).prop_map(|v| {
                let (raw, labels): (Vec<Vec<f64>>, Vec<usize>) = v.into_iter().unzip();
                let probs = raw
                    .into_iter()
                    .map(|r| {
                        let s: f64 = r.iter().sum();
                        r.into_iter().map(|x| x / s).collect()
                    })
                    .collect();
                (probs, labels)
            })
        })
    }

    proptest! {
        #[test]
        fn bins_partition_rows((probs, labels) in rows(), m in 1usize..20) {
            let b = reliability_bins(&probs, &labels, m).unwrap();
            prop_assert_eq!(b.total(), probs.len());
            prop_assert!(b.accuracy.iter().chain(&b.confidence).all(|v| (0.0..=1.0).contains(v)));
            prop_assert_eq!(b.ece(), ece(&probs, &labels, m).unwrap());
        }

        #[test]
        fn abstention_is_monotone((probs, labels) in rows(), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let a = abstention_report(&probs, &labels, lo).unwrap();
            let b = abstention_report(&probs, &labels, hi).unwrap();
            prop_assert!(a.n_abstained <= b.n_abstained);
        }

        #[test]
        fn confusion_rows_match_support((probs, labels) in rows(), tau in 0.0f64..1.0) {
            let k = probs[0].len();
            let preds: Vec<Prediction> = probs.iter().map(|r| threshold_predict(r, tau)).collect();
            let cat = catalog(k);
            let cm = confusion_matrix(&preds, &labels, &cat).unwrap();
            let metrics = per_class_metrics(&preds, &labels, &cat).unwrap();
            prop_assert_eq!(cm.total(), labels.len());
            for (c, m) in metrics.iter().enumerate() {
                prop_assert_eq!(cm.row_total(c), m.support);
            }
        }
    }
}
