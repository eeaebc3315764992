use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Utc};

use super::{ArchiveError, QueryLog, Result, TagRecord};
use crate::datasets::{ClassCatalog, ClassId, Instrument};

#[derive(Debug, Clone, PartialEq)]
pub struct Posting {
    pub item_id: String,
    pub confidence: f64,
    pub instrument: Instrument,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
}

/// Class to postings, each list sorted by descending confidence then item id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ArchiveIndex {
    pub postings: BTreeMap<ClassId, Vec<Posting>>,
}

impl ArchiveIndex {
    pub fn is_empty(&self) -> bool {
        self.postings.is_empty()
    }

    pub fn postings_for(&self, class: ClassId) -> &[Posting] {
        self.postings.get(&class).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn total_postings(&self) -> usize {
        self.postings.values().map(Vec::len).sum()
    }
}

pub(crate) fn posting_order(a: &Posting, b: &Posting) -> std::cmp::Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| a.item_id.cmp(&b.item_id))
}

/// Builds the index, collapsing repeated `(item, class)` tags to the most
/// confident one.
pub fn build_index(tags: &[TagRecord]) -> ArchiveIndex {
    let mut best: HashMap<(ClassId, &str), &TagRecord> = HashMap::new();
    for t in tags {
        best.entry((t.class, t.item_id.as_str()))
            .and_modify(|cur| {
                if t.confidence > cur.confidence {
                    *cur = t;
                }
            })
            .or_insert(t);
    }
    let mut postings: BTreeMap<ClassId, Vec<Posting>> = BTreeMap::new();
    for ((class, _), t) in best {
        postings.entry(class).or_default().push(Posting {
            item_id: t.item_id.clone(),
            confidence: t.confidence,
            instrument: t.instrument,
            lat: t.lat,
            lon: t.lon,
        });
    }
    for list in postings.values_mut() {
        list.sort_by(posting_order);
    }
    ArchiveIndex { postings }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QueryFilter {
    pub min_conf: f64,
    pub instrument: Option<Instrument>,
    /// Inclusive latitude range; postings without a latitude never match.
    pub lat_range: Option<(f64, f64)>,
}

impl QueryFilter {
    pub fn matches(&self, p: &Posting) -> bool {
        p.confidence >= self.min_conf
            && self.instrument.is_none_or(|i| i == p.instrument)
            && self
                .lat_range
                .is_none_or(|(lo, hi)| p.lat.is_some_and(|lat| lat >= lo && lat <= hi))
    }
}

/// Item ids of `class` passing `filter`, in index order. Every query is
/// appended to `log`, including those with no results.
pub fn query(
    index: &ArchiveIndex,
    catalog: &ClassCatalog,
    class: ClassId,
    filter: &QueryFilter,
    log: &mut QueryLog,
    at: DateTime<Utc>,
) -> Result<Vec<String>> {
    if !catalog.contains(class) {
        return Err(ArchiveError::UnknownClass(class.to_string()));
    }
    let ids: Vec<String> = index
        .postings_for(class)
        .iter()
        .filter(|p| filter.matches(p))
        .map(|p| p.item_id.clone())
        .collect();
    log.record(at, class, ids.len());
    Ok(ids)
}
