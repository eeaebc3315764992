use std::collections::{BTreeMap, BTreeSet};

use super::{ClassCatalog, ClassId, DatasetError, Result, SampleRecord};

/// Crowd labels collected for one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteSet {
    pub sample_id: String,
    pub votes: Vec<ClassId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoteOutcome {
    Resolved(ClassId),
    /// No strict majority; goes to expert review.
    NeedsReview,
}

/// Strict-majority vote. Ties, including even splits, need review.
pub fn merge_votes(votes: &VoteSet) -> VoteOutcome {
    let mut counts: BTreeMap<ClassId, usize> = BTreeMap::new();
    for &v in &votes.votes {
        *counts.entry(v).or_default() += 1;
    }
    let n = votes.votes.len();
    counts
        .into_iter()
        .find(|&(_, c)| 2 * c > n)
        .map_or(VoteOutcome::NeedsReview, |(class, _)| VoteOutcome::Resolved(class))
}

/// Picks the present class that comes first in the catalog's priority order.
pub fn resolve_priority(present: &BTreeSet<ClassId>, catalog: &ClassCatalog) -> Result<ClassId> {
    let order = catalog.priority_order();
    let mut best: Option<(usize, ClassId)> = None;
    for &class in present {
        let rank = order.iter().position(|&p| p == class).ok_or_else(|| {
            let name = if catalog.contains(class) {
                catalog.name(class).to_string()
            } else {
                format!("#{class}")
            };
            DatasetError::ClassNotInPriorityOrder(name)
        })?;
        if best.is_none_or(|(r, _)| rank < r) {
            best = Some((rank, class));
        }
    }
    best.map(|(_, c)| c).ok_or(DatasetError::EmptyDataset)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassShare {
    pub class: ClassId,
    pub count: usize,
    /// Percent of records carrying the class. Multi-label totals may exceed 100.
    pub percent: f64,
}

pub fn class_distribution(records: &[SampleRecord], catalog: &ClassCatalog) -> Vec<ClassShare> {
    let mut counts = vec![0usize; catalog.len()];
    for r in records {
        for c in r.label_set() {
            if c.0 < counts.len() {
                counts[c.0] += 1;
            }
        }
    }
    let n = records.len();
    catalog
        .ids()
        .map(|id| {
            let count = counts[id.0];
            let percent = if n == 0 { 0.0 } else { count as f64 / n as f64 * 100.0 };
            ClassShare {
                class: id,
                count,
                percent,
            }
        })
        .collect()
}
