use std::collections::BTreeMap;

use super::{ArchiveError, Result, TagRecord, OTHER_CLASS};
use crate::datasets::{ClassCatalog, ClassId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShiftRatio {
    Finite(f64),
    /// Class absent from the labeled set but present in the archive.
    Infinite,
    /// Class absent from both.
    Undefined,
}

impl ShiftRatio {
    pub fn label(&self) -> String {
        match self {
            ShiftRatio::Finite(r) => format!("{r:.4}"),
            ShiftRatio::Infinite => "INF".into(),
            ShiftRatio::Undefined => "NA".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftRow {
    pub class: ClassId,
    pub labeled_percent: f64,
    pub archive_percent: f64,
    pub ratio: ShiftRatio,
}

/// Compares class shares of the labeled set against archive predictions.
/// The catch-all class is excluded from both sides before normalizing.
pub fn distribution_shift_report(
    labeled_counts: &BTreeMap<ClassId, usize>,
    archive_tags: &[TagRecord],
    catalog: &ClassCatalog,
) -> Result<Vec<ShiftRow>> {
    let other = catalog.id_of(OTHER_CLASS);
    let mut archive_counts: BTreeMap<ClassId, usize> = BTreeMap::new();
    for t in archive_tags {
        *archive_counts.entry(t.class).or_insert(0) += 1;
    }
    let keep = |c: &ClassId| Some(*c) != other;
    let labeled_total: usize = labeled_counts.iter().filter(|(c, _)| keep(c)).map(|(_, n)| n).sum();
    let archive_total: usize = archive_counts.iter().filter(|(c, _)| keep(c)).map(|(_, n)| n).sum();
    if labeled_total == 0 || archive_total == 0 {
        return Err(ArchiveError::Invalid(
            "both distributions need at least one non-catch-all item".into(),
        ));
    }
    Ok(catalog
        .ids()
        .filter(keep)
        .map(|class| {
            let lp = *labeled_counts.get(&class).unwrap_or(&0) as f64 / labeled_total as f64 * 100.0;
            let ap = *archive_counts.get(&class).unwrap_or(&0) as f64 / archive_total as f64 * 100.0;
            let ratio = if lp > 0.0 {
                ShiftRatio::Finite(ap / lp)
            } else if ap > 0.0 {
                ShiftRatio::Infinite
            } else {
                ShiftRatio::Undefined
            };
            ShiftRow {
                class,
                labeled_percent: lp,
                archive_percent: ap,
                ratio,
            }
        })
        .collect())
}
