//! Dataset ingestion and preparation.
//!
//! Manifests describe one image per row with its acquisition keys
//! (source image, sol, site) and labels. From there this module merges
//! crowd votes, resolves multi-class images to a single label, produces
//! group-disjoint splits, and expands the training set with augmentation.

mod augment;
mod catalog;
mod labels;
mod manifest;
mod preprocess;
mod split;

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::archive::GeoRef;
use crate::grid::GridError;

pub use augment::{
    augment, augment_seed, expand_dataset, retained_fraction, AugmentationSpec, ExpandedItem, Transform,
};
pub use catalog::{
    ClassCatalog, ClassId, ClassInfo, GROUP_ARTIFICIAL_GEOLOGY, GROUP_IMAGE_TYPE, GROUP_MISC, GROUP_NATURAL_GEOLOGY,
    GROUP_ROVER_HARDWARE,
};
pub use labels::{class_distribution, merge_votes, resolve_priority, ClassShare, VoteOutcome, VoteSet};
pub use manifest::{load_manifest, read_manifest, write_manifest};
pub use preprocess::{preprocess_resize, ResizeMode, DEFAULT_TARGET_SIZE};
pub use split::{read_split_csv, split_grouped, write_split_csv, GroupKey, Split, SplitAssignment, SplitFractions};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("unknown class {name:?} at line {line}")]
    UnknownClass { line: u64, name: String },
    #[error("duplicate sample id {id:?} at line {line}")]
    DuplicateSampleId { line: u64, id: String },
    #[error("class {0:?} is not in the priority order")]
    ClassNotInPriorityOrder(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sample {sample_id:?} has no {key} value")]
    MissingGroupKey { sample_id: String, key: GroupKey },
    #[error("invalid split fractions: {0}")]
    InvalidFractions(String),
    #[error("invalid augmentation spec: {0}")]
    InvalidSpec(String),
    #[error("invalid class catalog: {0}")]
    InvalidCatalog(String),
    #[error(transparent)]
    Image(#[from] GridError),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Instrument {
    Hirise,
    MastcamLeft,
    MastcamRight,
    Mahli,
    PancamL,
    PancamR,
}

impl Instrument {
    pub const ALL: [Instrument; 6] = [
        Instrument::Hirise,
        Instrument::MastcamLeft,
        Instrument::MastcamRight,
        Instrument::Mahli,
        Instrument::PancamL,
        Instrument::PancamR,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Instrument::Hirise => "HIRISE",
            Instrument::MastcamLeft => "MASTCAM_LEFT",
            Instrument::MastcamRight => "MASTCAM_RIGHT",
            Instrument::Mahli => "MAHLI",
            Instrument::PancamL => "PANCAM_L",
            Instrument::PancamR => "PANCAM_R",
        }
    }
}

impl fmt::Display for Instrument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Instrument {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Instrument::ALL
            .into_iter()
            .find(|i| i.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown instrument {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Campaign {
    #[default]
    Primary,
    SecondCampaign,
}

impl Campaign {
    pub fn as_str(self) -> &'static str {
        match self {
            Campaign::Primary => "PRIMARY",
            Campaign::SecondCampaign => "SECOND_CAMPAIGN",
        }
    }
}

impl fmt::Display for Campaign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Campaign {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "" | "PRIMARY" => Ok(Campaign::Primary),
            "SECOND_CAMPAIGN" => Ok(Campaign::SecondCampaign),
            other => Err(format!("unknown campaign {other:?}")),
        }
    }
}

/// One labeled (or unlabeled archive) image.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub sample_id: String,
    pub image_ref: PathBuf,
    pub instrument: Instrument,
    pub source_image_id: String,
    pub sol: Option<u32>,
    pub site_id: String,
    pub single_label: Option<ClassId>,
    pub multi_labels: BTreeSet<ClassId>,
    pub campaign: Campaign,
    pub georef: Option<GeoRef>,
}

impl SampleRecord {
    pub fn new(sample_id: impl Into<String>, instrument: Instrument) -> Self {
        Self {
            sample_id: sample_id.into(),
            image_ref: PathBuf::new(),
            instrument,
            source_image_id: String::new(),
            sol: None,
            site_id: String::new(),
            single_label: None,
            multi_labels: BTreeSet::new(),
            campaign: Campaign::Primary,
            georef: None,
        }
    }

    /// All classes attached to the record: the multi-label set when present,
    /// otherwise the single label.
    pub fn label_set(&self) -> BTreeSet<ClassId> {
        if !self.multi_labels.is_empty() {
            self.multi_labels.clone()
        } else {
            self.single_label.into_iter().collect()
        }
    }
}
