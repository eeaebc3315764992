//! Group-disjoint train/validation/test splits.
//!
//! Samples that share a group key (HiRISE source image, MSL sol, MER site)
//! always land in the same split. Source-image and site groups are shuffled
//! with the seed and dealt greedily to whichever split is furthest below its
//! target size. Sol groups are instead dealt in chronological order so that
//! validation and test hold later sols than training.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::catalog::csv_to_dataset;
use super::{DatasetError, Result, SampleRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "TRAIN",
            Split::Val => "VAL",
            Split::Test => "TEST",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "TRAIN" => Ok(Split::Train),
            "VAL" | "VALIDATION" => Ok(Split::Val),
            "TEST" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupKey {
    SourceImage,
    SolRange,
    Site,
}

impl GroupKey {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupKey::SourceImage => "SOURCE_IMAGE",
            GroupKey::SolRange => "SOL_RANGE",
            GroupKey::Site => "SITE",
        }
    }

    pub fn value_of(self, record: &SampleRecord) -> Option<String> {
        match self {
            GroupKey::SourceImage => Some(record.source_image_id.clone()).filter(|s| !s.is_empty()),
            GroupKey::SolRange => record.sol.map(|s| s.to_string()),
            GroupKey::Site => Some(record.site_id.clone()).filter(|s| !s.is_empty()),
        }
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GroupKey {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SOURCE_IMAGE" => Ok(GroupKey::SourceImage),
            "SOL_RANGE" | "SOL" => Ok(GroupKey::SolRange),
            "SITE" => Ok(GroupKey::Site),
            other => Err(format!("unknown group key {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let f = Self { train, val, test };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = self.as_array();
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(DatasetError::InvalidFractions(format!(
                "{parts:?} has an entry outside [0, 1]"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::InvalidFractions(format!("{parts:?} sums to {sum}")));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    entries: Vec<(String, Split)>,
    index: HashMap<String, usize>,
    pub fractions: SplitFractions,
    pub group_key: GroupKey,
}

impl SplitAssignment {
    pub fn from_entries(entries: Vec<(String, Split)>, fractions: SplitFractions, group_key: GroupKey) -> Self {
        let index = entries.iter().enumerate().map(|(i, (id, _))| (id.clone(), i)).collect();
        Self {
            entries,
            index,
            fractions,
            group_key,
        }
    }

    pub fn get(&self, sample_id: &str) -> Option<Split> {
        self.index.get(sample_id).map(|&i| self.entries[i].1)
    }

    /// Entries in input record order.
    pub fn entries(&self) -> &[(String, Split)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|(_, s)| *s == split).count()
    }
}

pub fn split_grouped(
    records: &[SampleRecord],
    group_key: GroupKey,
    fractions: SplitFractions,
    seed: u64,
) -> Result<SplitAssignment> {
    fractions.validate()?;
    if records.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let key = group_key.value_of(r).ok_or_else(|| DatasetError::MissingGroupKey {
            sample_id: r.sample_id.clone(),
            key: group_key,
        })?;
        groups.entry(key).or_default().push(i);
    }

    let n = records.len() as f64;
    let targets = fractions.as_array().map(|f| f * n);
    let mut groups: Vec<(String, Vec<usize>)> = groups.into_iter().collect();
    let mut split_of = vec![Split::Train; records.len()];

    if group_key == GroupKey::SolRange {
        groups.sort_by_key(|(k, _)| k.parse::<u32>().unwrap_or(u32::MAX));
        // A group goes to the split whose cumulative boundary its midpoint falls under.
        let bounds = [targets[0], targets[0] + targets[1]];
        let mut placed = 0usize;
        for (_, members) in &groups {
            let mid = placed as f64 + members.len() as f64 / 2.0;
            let split = if mid < bounds[0] {
                Split::Train
            } else if mid < bounds[1] {
                Split::Val
            } else {
                Split::Test
            };
            for &i in members {
                split_of[i] = split;
            }
            placed += members.len();
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        groups.shuffle(&mut rng);
        let mut filled = [0.0f64; 3];
        for (_, members) in &groups {
            let mut best = Split::Train;
            for s in Split::ALL {
                let deficit = targets[s.index()] - filled[s.index()];
                if deficit > targets[best.index()] - filled[best.index()] {
                    best = s;
                }
            }
            filled[best.index()] += members.len() as f64;
            for &i in members {
                split_of[i] = best;
            }
        }
    }

    let entries = records
        .iter()
        .zip(split_of)
        .map(|(r, s)| (r.sample_id.clone(), s))
        .collect();
    Ok(SplitAssignment::from_entries(entries, fractions, group_key))
}

/// Writes `sample_id,split` rows in assignment order.
pub fn write_split_csv(path: impl AsRef<Path>, split: &SplitAssignment) -> Result<()> {
    let path = path.as_ref();
    let err = |e: csv::Error| csv_to_dataset(path, e);
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["sample_id", "split"]).map_err(err)?;
    for (id, s) in split.entries() {
        w.write_record([id.as_str(), s.as_str()]).map_err(err)?;
    }
    w.flush().map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_split_csv(
    path: impl AsRef<Path>,
    fractions: SplitFractions,
    group_key: GroupKey,
) -> Result<SplitAssignment> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_to_dataset(path, e))?;
    let mut entries = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_to_dataset(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let split = row
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|reason| DatasetError::MalformedRow { line, reason })?;
        entries.push((row.get(0).unwrap_or("").to_string(), split));
    }
    Ok(SplitAssignment::from_entries(entries, fractions, group_key))
}
