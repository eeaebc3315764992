use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use super::{DatasetError, Result};

pub const GROUP_ROVER_HARDWARE: &str = "Rover hardware";
pub const GROUP_ARTIFICIAL_GEOLOGY: &str = "Artificial geology";
pub const GROUP_NATURAL_GEOLOGY: &str = "Natural geology";
pub const GROUP_IMAGE_TYPE: &str = "Image type";
pub const GROUP_MISC: &str = "Miscellaneous";

/// Index of a class within its [`ClassCatalog`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassId(pub usize);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassInfo {
    pub id: ClassId,
    pub name: String,
    pub group: String,
}

/// Ordered class list plus the priority order used to reduce a set of
/// present classes to one label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCatalog {
    classes: Vec<ClassInfo>,
    priority_order: Vec<ClassId>,
    by_name: HashMap<String, ClassId>,
}

impl ClassCatalog {
    /// `classes` are `(name, group)` pairs; ids follow list order.
    pub fn new<S: AsRef<str>>(classes: &[(S, S)], priority: &[S]) -> Result<Self> {
        let mut by_name = HashMap::new();
        let mut infos = Vec::with_capacity(classes.len());
        for (i, (name, group)) in classes.iter().enumerate() {
            let name = name.as_ref().trim().to_string();
            if name.is_empty() {
                return Err(DatasetError::InvalidCatalog(format!("class {i} has an empty name")));
            }
            if by_name.insert(name.clone(), ClassId(i)).is_some() {
                return Err(DatasetError::InvalidCatalog(format!("duplicate class {name:?}")));
            }
            infos.push(ClassInfo {
                id: ClassId(i),
                name,
                group: group.as_ref().trim().to_string(),
            });
        }
        let mut priority_order = Vec::with_capacity(priority.len());
        for name in priority {
            let id = *by_name.get(name.as_ref().trim()).ok_or_else(|| {
                DatasetError::InvalidCatalog(format!("priority entry {:?} is not a class", name.as_ref()))
            })?;
            if priority_order.contains(&id) {
                return Err(DatasetError::InvalidCatalog(format!(
                    "priority entry {:?} repeated",
                    name.as_ref()
                )));
            }
            priority_order.push(id);
        }
        Ok(Self {
            classes: infos,
            priority_order,
            by_name,
        })
    }

    /// Ungrouped catalog with no priority order.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let pairs: Vec<(&str, &str)> = names.iter().map(|n| (n.as_ref(), "")).collect();
        Self::new(&pairs, &[])
    }

    /// The orbital landmark classes, in alphabetical order, with the
    /// labeling priority used when several classes share a crop.
    pub fn hirise() -> Self {
        let names = [
            "Bright dune",
            "Crater",
            "Dark dune",
            "Impact ejecta",
            "Other",
            "Slope streak",
            "Spider",
            "Swiss cheese",
        ];
        let classes: Vec<(&str, &str)> = names.iter().map(|n| (*n, "")).collect();
        let priority = [
            "Impact ejecta",
            "Slope streak",
            "Spider",
            "Dark dune",
            "Bright dune",
            "Swiss cheese",
            "Crater",
            "Other",
        ];
        Self::new(&classes, &priority).expect("static catalog is valid")
    }

    /// The 24 Pancam surface classes in their five category groups.
    pub fn mer() -> Self {
        let classes = [
            ("Rover deck", GROUP_ROVER_HARDWARE),
            ("Pancam cal. target", GROUP_ROVER_HARDWARE),
            ("Rover arm", GROUP_ROVER_HARDWARE),
            ("Other hardware", GROUP_ROVER_HARDWARE),
            ("Rover tracks", GROUP_ARTIFICIAL_GEOLOGY),
            ("Soil trench", GROUP_ARTIFICIAL_GEOLOGY),
            ("RAT brushed target", GROUP_ARTIFICIAL_GEOLOGY),
            ("RAT hole", GROUP_ARTIFICIAL_GEOLOGY),
            ("Outcrop rock", GROUP_NATURAL_GEOLOGY),
            ("Float rock", GROUP_NATURAL_GEOLOGY),
            ("Clasts", GROUP_NATURAL_GEOLOGY),
            ("Bright soil", GROUP_NATURAL_GEOLOGY),
            ("Dunes/ripples", GROUP_NATURAL_GEOLOGY),
            ("Rock (linear features)", GROUP_NATURAL_GEOLOGY),
            ("Rock (rounded features)", GROUP_NATURAL_GEOLOGY),
            ("Soil", GROUP_NATURAL_GEOLOGY),
            ("Spherules", GROUP_NATURAL_GEOLOGY),
            ("Distant vista", GROUP_IMAGE_TYPE),
            ("Sky", GROUP_IMAGE_TYPE),
            ("Close-up rock", GROUP_IMAGE_TYPE),
            ("Nearby surface", GROUP_IMAGE_TYPE),
            ("Rover parts", GROUP_IMAGE_TYPE),
            ("Astronomy", GROUP_MISC),
            ("Artifacts", GROUP_MISC),
        ];
        Self::new(&classes, &[]).expect("static catalog is valid")
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ClassInfo] {
        &self.classes
    }

    pub fn ids(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.classes.iter().map(|c| c.id)
    }

    pub fn priority_order(&self) -> &[ClassId] {
        &self.priority_order
    }

    pub fn id_of(&self, name: &str) -> Option<ClassId> {
        self.by_name.get(name.trim()).copied()
    }

    pub fn name(&self, id: ClassId) -> &str {
        &self.classes[id.0].name
    }

    pub fn group(&self, id: ClassId) -> &str {
        &self.classes[id.0].group
    }

    pub fn contains(&self, id: ClassId) -> bool {
        id.0 < self.classes.len()
    }

    /// Reads a `class_name,category_group,priority` CSV. `priority` is a
    /// 1-based rank or empty for classes outside the priority order.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_to_dataset(path, e))?;
        let mut classes = Vec::new();
        let mut ranked = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| csv_to_dataset(path, e))?;
            let line = row.position().map_or(0, |p| p.line());
            let name = row.get(0).unwrap_or("").to_string();
            let group = row.get(1).unwrap_or("").to_string();
            let rank = row.get(2).unwrap_or("");
            if !rank.is_empty() {
                let rank: u32 = rank.parse().map_err(|_| DatasetError::MalformedRow {
                    line,
                    reason: format!("priority {rank:?} is not an integer"),
                })?;
                ranked.push((rank, name.clone()));
            }
            classes.push((name, group));
        }
        ranked.sort();
        let priority: Vec<String> = ranked.into_iter().map(|(_, n)| n).collect();
        Self::new(&classes, &priority)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_to_dataset(path, e))?;
        let io = |e: csv::Error| csv_to_dataset(path, e);
        w.write_record(["class_name", "category_group", "priority"])
            .map_err(io)?;
        for c in &self.classes {
            let rank = self
                .priority_order
                .iter()
                .position(|&p| p == c.id)
                .map(|r| (r + 1).to_string())
                .unwrap_or_default();
            w.write_record([c.name.as_str(), c.group.as_str(), rank.as_str()])
                .map_err(io)?;
        }
        w.flush().map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub(crate) fn csv_to_dataset(path: &Path, e: csv::Error) -> DatasetError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => DatasetError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => DatasetError::MalformedRow {
            line,
            reason: format!("{other:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hirise_priority_covers_every_class() {
        let cat = ClassCatalog::hirise();
        assert_eq!(cat.len(), 8);
        assert_eq!(cat.priority_order().len(), 8);
        assert_eq!(cat.name(cat.priority_order()[0]), "Impact ejecta");
    }

    #[test]
    fn mer_has_24_classes_in_five_groups() {
        let cat = ClassCatalog::mer();
        assert_eq!(cat.len(), 24);
        let groups: std::collections::BTreeSet<_> = cat.classes().iter().map(|c| c.group.as_str()).collect();
        assert_eq!(groups.len(), 5);
    }

    #[test]
    fn duplicate_names_rejected() {
        let err = ClassCatalog::from_names(&["A", "B", "A"]).unwrap_err();
        assert!(matches!(err, DatasetError::InvalidCatalog(_)));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.csv");
        let cat = ClassCatalog::hirise();
        cat.save(&path).unwrap();
        assert_eq!(ClassCatalog::load(&path).unwrap(), cat);
    }
}
