//! Archive-wide tagging and search.
//!
//! A trained head plus calibrator labels every archive item. Only confident
//! predictions of real classes become tags. Tags carry coordinates when the
//! item is georeferenced, polar-only classes are dropped outside the south
//! polar region, and the remaining tags feed a class-to-items index that
//! answers filtered queries and records usage.

mod geo;
mod index;
mod io;
mod log;
mod protocol;
mod report;

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use thiserror::Error;

use crate::calibration::{apply_calibrator, threshold_predict, Calibrator, Prediction};
use crate::datasets::{ClassCatalog, ClassId, Instrument};
use crate::models::Scorer;

pub use geo::{normalize_lon, pixel_to_latlon, GeoRef};
pub use index::{build_index, query, ArchiveIndex, Posting, QueryFilter};
pub use io::{read_index, read_query_log, read_tags_csv, write_index, write_query_log, write_tags_csv};
pub use log::{usage_report, QueryLog, QueryLogEntry, UsageRow};
pub use protocol::{parse_query_line, serve_queries, QueryRequest};
pub use report::{distribution_shift_report, ShiftRatio, ShiftRow};

/// Name of the catch-all class that is never tagged.
pub const OTHER_CLASS: &str = "Other";
/// Default deployment confidence threshold.
pub const DEFAULT_TAU: f64 = 0.9;
/// Default northern boundary of the south polar region, in degrees.
pub const DEFAULT_POLAR_CUTOFF: f64 = -60.0;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("coordinates are not finite")]
    NonFinite,
    #[error("latitude {0} is outside [-90, 90]")]
    LatitudeOutOfRange(f64),
    #[error("unknown class {0:?}")]
    UnknownClass(String),
    #[error("tag for item {item_id} of polar class {class} has no latitude")]
    MissingLatitude { item_id: String, class: String },
    #[error("invalid input: {0}")]
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

pub type Result<T> = std::result::Result<T, ArchiveError>;

#[derive(Debug, Clone, PartialEq)]
pub struct TagRecord {
    pub item_id: String,
    pub class: ClassId,
    pub confidence: f64,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
    pub instrument: Instrument,
    pub tagged_at: DateTime<Utc>,
}

/// Pixel position of an item within a georeferenced product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItemLocation {
    pub georef: GeoRef,
    pub row: f64,
    pub col: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveItem {
    pub item_id: String,
    pub instrument: Instrument,
    pub features: Vec<f64>,
    pub location: Option<ItemLocation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemFailure {
    pub item_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TagOutcome {
    pub tags: Vec<TagRecord>,
    pub failures: Vec<ItemFailure>,
    /// Items that were processed but produced no tag.
    pub untagged: usize,
}

fn tag_one<S: Scorer + ?Sized>(
    item: &ArchiveItem,
    head: &S,
    calibrator: &Calibrator,
    tau: f64,
    other: Option<ClassId>,
    tagged_at: DateTime<Utc>,
) -> std::result::Result<Option<TagRecord>, String> {
    let z = head.logits(&item.features).map_err(|e| e.to_string())?;
    let probs = apply_calibrator(calibrator, &z).map_err(|e| e.to_string())?;
    if probs.iter().any(|p| !p.is_finite()) {
        return Err("non-finite probabilities".into());
    }
    let Prediction::Class(k) = threshold_predict(&probs, tau) else {
        return Ok(None);
    };
    let class = head.classes()[k];
    if Some(class) == other {
        return Ok(None);
    }
    let (lat, lon) = match &item.location {
        Some(loc) => {
            let (lat, lon) = pixel_to_latlon(&loc.georef, loc.row, loc.col).map_err(|e| e.to_string())?;
            (Some(lat), Some(lon))
        }
        None => (None, None),
    };
    Ok(Some(TagRecord {
        item_id: item.item_id.clone(),
        class,
        confidence: probs[k],
        lat,
        lon,
        instrument: item.instrument,
        tagged_at,
    }))
}

/// Tags every item whose calibrated top probability reaches `tau`, skipping
/// the catch-all class. Items are processed in parallel; output keeps input
/// order. Failing items are recorded and skipped.
pub fn tag_archive<S: Scorer + ?Sized>(
    items: &[ArchiveItem],
    head: &S,
    calibrator: &Calibrator,
    tau: f64,
    catalog: &ClassCatalog,
    tagged_at: DateTime<Utc>,
) -> Result<TagOutcome> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(ArchiveError::Invalid(format!("tau {tau} outside (0, 1]")));
    }
    if let Some(k) = calibrator.num_classes() {
        if k != head.classes().len() {
            return Err(ArchiveError::Invalid(format!(
                "calibrator has {k} classes, head has {}",
                head.classes().len()
            )));
        }
    }
    if let Some(bad) = head.classes().iter().find(|c| !catalog.contains(**c)) {
        return Err(ArchiveError::UnknownClass(bad.to_string()));
    }
    let other = catalog.id_of(OTHER_CLASS);
    let results: Vec<_> = items
        .par_iter()
        .map(|item| tag_one(item, head, calibrator, tau, other, tagged_at))
        .collect();
    let mut outcome = TagOutcome::default();
    for (item, r) in items.iter().zip(results) {
        match r {
            Ok(Some(tag)) => outcome.tags.push(tag),
            Ok(None) => outcome.untagged += 1,
            Err(reason) => outcome.failures.push(ItemFailure {
                item_id: item.item_id.clone(),
                reason,
            }),
        }
    }
    Ok(outcome)
}

/// Drops tags of polar-only classes located north of `lat_cutoff`.
pub fn polar_filter(
    tags: &[TagRecord],
    polar_classes: &BTreeSet<ClassId>,
    lat_cutoff: f64,
    catalog: &ClassCatalog,
) -> Result<Vec<TagRecord>> {
    let mut out = Vec::with_capacity(tags.len());
    for t in tags {
        if polar_classes.contains(&t.class) {
            let lat = t.lat.ok_or_else(|| ArchiveError::MissingLatitude {
                item_id: t.item_id.clone(),
                class: catalog.name(t.class).to_string(),
            })?;
            if lat > lat_cutoff {
                continue;
            }
        }
        out.push(t.clone());
    }
    Ok(out)
}

/// Resolves class names to ids, failing on names missing from the catalog.
pub fn class_set<S: AsRef<str>>(catalog: &ClassCatalog, names: &[S]) -> Result<BTreeSet<ClassId>> {
    names
        .iter()
        .map(|n| {
            catalog
                .id_of(n.as_ref())
                .ok_or_else(|| ArchiveError::UnknownClass(n.as_ref().to_string()))
        })
        .collect()
}
