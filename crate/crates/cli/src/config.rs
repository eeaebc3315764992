//! Pipeline configuration: one TOML file plus command-line overrides.
//!
//! Relative paths in the file resolve against the file's directory. Every
//! section and key is optional.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use marstag::archive::{DEFAULT_POLAR_CUTOFF, DEFAULT_TAU};
use marstag::calibration::{Method, OptConfig, DEFAULT_BINS};
use marstag::datasets::{
    AugmentationSpec, ClassCatalog, GroupKey, Instrument, ResizeMode, Split, SplitFractions, DEFAULT_TARGET_SIZE,
};
use marstag::landmarking::{read_params, SalienceParams, DEFAULT_BORDER};
use marstag::models::SgdConfig;
use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Softmax,
    MultiLabel,
    Chain,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "softmax" => Ok(ModelKind::Softmax),
            "multilabel" | "multi_label" => Ok(ModelKind::MultiLabel),
            "chain" => Ok(ModelKind::Chain),
            "hybrid" => {
                Err("hybrid models are assembled from two softmax models with `marstag train --hybrid-v2`".into())
            }
            other => Err(format!("unknown model kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub manifest: Option<PathBuf>,
    pub images: Option<PathBuf>,
    /// `hirise`, `mer`, or a catalog CSV.
    pub catalog: Option<String>,
    pub archive: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub fractions: [f64; 3],
    pub group_key: String,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            fractions: [0.6, 0.2, 0.2],
            group_key: "SOURCE_IMAGE".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagesSection {
    pub size: usize,
    pub resize: String,
}

impl Default for ImagesSection {
    fn default() -> Self {
        Self {
            size: DEFAULT_TARGET_SIZE,
            resize: "direct".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationSection {
    /// `none`, `instrument`, `hirise`, `mer`, `msl_mahli` or `msl_mastcam`.
    pub recipe: String,
    pub splits: Vec<String>,
}

impl Default for AugmentationSection {
    fn default() -> Self {
        Self {
            recipe: "instrument".into(),
            splits: vec!["TRAIN".into()],
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StripEntry {
    pub image: PathBuf,
    pub id: String,
    pub instrument: Option<String>,
    pub lat0: Option<f64>,
    pub lon0: Option<f64>,
    pub dlat: Option<f64>,
    pub dlon: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandmarksSection {
    pub strips: Vec<StripEntry>,
    pub params: Option<PathBuf>,
    pub border: usize,
    pub tile: usize,
}

impl Default for LandmarksSection {
    fn default() -> Self {
        Self {
            strips: Vec::new(),
            params: None,
            border: DEFAULT_BORDER,
            tile: 1024,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: String,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let sgd = SgdConfig::default();
        Self {
            kind: "softmax".into(),
            epochs: sgd.epochs,
            learning_rate: sgd.learning_rate,
            batch_size: sgd.batch_size,
            l2: sgd.l2,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub method: String,
    pub bins: usize,
    pub max_iters: usize,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            method: "temperature".into(),
            bins: DEFAULT_BINS,
            max_iters: OptConfig::default().max_iters,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeploymentSection {
    pub tau: f64,
    pub polar_cutoff: f64,
    pub polar_classes: Vec<String>,
    pub tagged_at: String,
}

impl Default for DeploymentSection {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            polar_cutoff: DEFAULT_POLAR_CUTOFF,
            polar_classes: vec!["Spider".into(), "Swiss cheese".into()],
            tagged_at: "2000-01-01T00:00:00Z".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SeedsSection {
    pub split: u64,
    pub augment: u64,
    pub train: u64,
}

/// The file as written, before validation.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RawConfig {
    pub paths: PathsSection,
    pub split: SplitSection,
    pub images: ImagesSection,
    pub augmentation: AugmentationSection,
    pub landmarks: LandmarksSection,
    pub model: ModelSection,
    pub calibration: CalibrationSection,
    pub deployment: DeploymentSection,
    pub seeds: SeedsSection,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tau: Option<f64>,
    pub method: Option<String>,
    pub kind: Option<String>,
    pub bins: Option<usize>,
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone)]
pub enum Recipe {
    None,
    PerInstrument,
    Fixed(AugmentationSpec),
}

impl Recipe {
    pub fn spec_for(&self, instrument: Instrument) -> Option<AugmentationSpec> {
        match self {
            Recipe::None => None,
            Recipe::PerInstrument => Some(AugmentationSpec::for_instrument(instrument)),
            Recipe::Fixed(spec) => Some(spec.clone()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StripConfig {
    pub image: PathBuf,
    pub id: String,
    pub instrument: Instrument,
    pub georef: Option<marstag::archive::GeoRef>,
}

/// Validated configuration with absolute paths.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub images: PathBuf,
    pub catalog: ClassCatalog,
    pub archive: Option<PathBuf>,
    pub output: PathBuf,
    pub fractions: SplitFractions,
    pub group_key: GroupKey,
    pub image_size: usize,
    pub resize: ResizeMode,
    pub recipe: Recipe,
    pub augment_splits: Vec<Split>,
    pub strips: Vec<StripConfig>,
    pub salience: SalienceParams,
    pub border: usize,
    pub tile: usize,
    pub kind: ModelKind,
    pub sgd: SgdConfig,
    pub method: Method,
    pub bins: usize,
    pub opt: OptConfig,
    pub tau: f64,
    pub polar_cutoff: f64,
    pub polar_classes: Vec<String>,
    pub tagged_at: DateTime<Utc>,
    pub split_seed: u64,
    pub augment_seed: u64,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn bad<T>(msg: String) -> Result<T> {
    Err(CliError::config(msg))
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::config(format!("config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.output {
            self.paths.output = Some(out.clone());
        }
        if let Some(s) = o.seed {
            self.seeds = SeedsSection {
                split: s,
                augment: s,
                train: s,
            };
        }
        if let Some(t) = o.tau {
            self.deployment.tau = t;
        }
        if let Some(m) = &o.method {
            self.calibration.method = m.clone();
        }
        if let Some(k) = &o.kind {
            self.model.kind = k.clone();
        }
        if let Some(b) = o.bins {
            self.calibration.bins = b;
        }
        if let Some(e) = o.epochs {
            self.model.epochs = e;
        }
    }

    /// Checks every value and resolves paths against `base`. Only the
    /// catalog and salience parameter files are read here; data paths are
    /// checked by [`PipelineConfig::require`].
    pub fn validate(&self, base: &Path) -> Result<PipelineConfig> {
        let d = &self.deployment;
        if !(d.tau > 0.0 && d.tau <= 1.0) {
            return bad(format!("tau {} outside (0, 1]", d.tau));
        }
        if !d.polar_cutoff.is_finite() || d.polar_cutoff.abs() > 90.0 {
            return bad(format!("polar_cutoff {} is not a latitude", d.polar_cutoff));
        }
        let tagged_at = DateTime::parse_from_rfc3339(&d.tagged_at)
            .map_err(|e| CliError::config(format!("tagged_at {:?}: {e}", d.tagged_at)))?
            .with_timezone(&Utc);
        let [tr, va, te] = self.split.fractions;
        let fractions = SplitFractions::new(tr, va, te)?;
        let group_key: GroupKey = self.split.group_key.parse().map_err(CliError::config)?;
        let resize: ResizeMode = self.images.resize.parse().map_err(CliError::config)?;
        if self.images.size < 8 {
            return bad(format!("image size {} is below 8", self.images.size));
        }
        let recipe = match self.augmentation.recipe.to_ascii_lowercase().as_str() {
            "none" => Recipe::None,
            "instrument" => Recipe::PerInstrument,
            "hirise" => Recipe::Fixed(AugmentationSpec::hirise()),
            "mer" => Recipe::Fixed(AugmentationSpec::mer()),
            "msl_mahli" => Recipe::Fixed(AugmentationSpec::msl_mahli()),
            "msl_mastcam" => Recipe::Fixed(AugmentationSpec::msl_mastcam()),
            other => return bad(format!("unknown augmentation recipe {other:?}")),
        };
        let augment_splits = self
            .augmentation
            .splits
            .iter()
            .map(|s| s.parse::<Split>().map_err(CliError::config))
            .collect::<Result<Vec<_>>>()?;
        let kind: ModelKind = self.model.kind.parse().map_err(CliError::config)?;
        let sgd = SgdConfig {
            learning_rate: self.model.learning_rate,
            epochs: self.model.epochs,
            batch_size: self.model.batch_size,
            seed: self.seeds.train,
            l2: self.model.l2,
        };
        sgd.validate().map_err(|e| CliError::config(e.to_string()))?;
        let method: Method = self
            .calibration
            .method
            .parse()
            .map_err(|e: marstag::calibration::CalibrationError| CliError::config(e.to_string()))?;
        if self.calibration.bins == 0 {
            return bad("calibration bins must be positive".into());
        }
        let opt = OptConfig {
            max_iters: self.calibration.max_iters,
            ..OptConfig::default()
        };
        opt.validate().map_err(|e| CliError::config(e.to_string()))?;
        let catalog = match self.paths.catalog.as_deref().unwrap_or("hirise") {
            "hirise" => ClassCatalog::hirise(),
            "mer" => ClassCatalog::mer(),
            path => ClassCatalog::load(resolve(base, Path::new(path)))
                .map_err(|e| CliError::config(format!("catalog: {e}")))?,
        };
        for name in &d.polar_classes {
            if catalog.id_of(name).is_none() {
                return bad(format!("polar class {name:?} is not in the catalog"));
            }
        }
        let salience = match &self.landmarks.params {
            Some(p) => read_params(resolve(base, p)).map_err(|e| CliError::config(format!("salience params: {e}")))?,
            None => SalienceParams::default(),
        };
        if self.landmarks.tile == 0 {
            return bad("landmark tile size must be positive".into());
        }
        let mut strips = Vec::new();
        for s in &self.landmarks.strips {
            let instrument = match &s.instrument {
                Some(i) => i.parse().map_err(CliError::config)?,
                None => Instrument::Hirise,
            };
            let georef = match (s.lat0, s.lon0, s.dlat, s.dlon) {
                (Some(lat0), Some(lon0), Some(dlat), Some(dlon)) => Some(marstag::archive::GeoRef {
                    lat0,
                    lon0,
                    dlat_per_row: dlat,
                    dlon_per_col: dlon,
                }),
                (None, None, None, None) => None,
                _ => return bad(format!("strip {:?} needs all of lat0, lon0, dlat, dlon or none", s.id)),
            };
            strips.push(StripConfig {
                image: resolve(base, &s.image),
                id: s.id.clone(),
                instrument,
                georef,
            });
        }
        let manifest = self.paths.manifest.as_deref().unwrap_or(Path::new("manifest.csv"));
        Ok(PipelineConfig {
            manifest: resolve(base, manifest),
            images: resolve(base, self.paths.images.as_deref().unwrap_or(Path::new("."))),
            catalog,
            archive: self.paths.archive.as_deref().map(|p| resolve(base, p)),
            output: resolve(base, self.paths.output.as_deref().unwrap_or(Path::new("out"))),
            fractions,
            group_key,
            image_size: self.images.size,
            resize,
            recipe,
            augment_splits,
            strips,
            salience,
            border: self.landmarks.border,
            tile: self.landmarks.tile,
            kind,
            sgd,
            method,
            bins: self.calibration.bins,
            opt,
            tau: d.tau,
            polar_cutoff: d.polar_cutoff,
            polar_classes: d.polar_classes.clone(),
            tagged_at,
            split_seed: self.seeds.split,
            augment_seed: self.seeds.augment,
        })
    }
}

impl PipelineConfig {
    /// Loads `path`, applies `overrides` and validates. Output overrides
    /// given on the command line are taken relative to the working
    /// directory, not the config file.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let mut raw = RawConfig::load(path)?;
        let cli_output = overrides.output.clone();
        raw.apply(overrides);
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = raw.validate(base)?;
        if let Some(out) = cli_output {
            cfg.output = out;
        }
        Ok(cfg)
    }

    /// Fails with a config error if any referenced input is missing.
    pub fn require(&self) -> Result<()> {
        let mut paths = vec![&self.manifest, &self.images];
        paths.extend(self.archive.iter());
        paths.extend(self.strips.iter().map(|s| &s.image));
        for p in paths {
            if !p.exists() {
                return bad(format!("path {} does not exist", p.display()));
            }
        }
        Ok(())
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.output.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = RawConfig::parse("").unwrap().validate(Path::new("/base")).unwrap();
        assert_eq!(cfg.tau, 0.9);
        assert_eq!(cfg.polar_cutoff, -60.0);
        assert_eq!(cfg.kind, ModelKind::Softmax);
        assert_eq!(cfg.method, Method::Temperature);
        assert_eq!(cfg.output, Path::new("/base/out"));
        assert_eq!(cfg.bins, 10);
    }

    #[test]
    fn tau_out_of_range_is_a_config_error() {
        for tau in ["1.5", "0.0", "-0.2"] {
            let raw = RawConfig::parse(&format!("[deployment]\ntau = {tau}\n")).unwrap();
            let err = raw.validate(Path::new(".")).unwrap_err();
            assert_eq!(err.kind, crate::error::ErrorKind::Config, "{tau}");
        }
    }

    #[test]
    fn flags_win() {
        let mut raw = RawConfig::parse("[model]\nkind = \"chain\"\n[seeds]\nsplit = 3\n").unwrap();
        raw.apply(&Overrides {
            kind: Some("multilabel".into()),
            seed: Some(9),
            tau: Some(0.5),
            ..Overrides::default()
        });
        let cfg = raw.validate(Path::new(".")).unwrap();
        assert_eq!(cfg.kind, ModelKind::MultiLabel);
        assert_eq!((cfg.split_seed, cfg.augment_seed, cfg.sgd.seed), (9, 9, 9));
        assert_eq!(cfg.tau, 0.5);
    }

    #[test]
    fn rejects_unknown_keys_and_values() {
        assert!(RawConfig::parse("[model]\nknd = \"softmax\"\n").is_err());
        for text in [
            "[model]\nkind = \"forest\"\n",
            "[calibration]\nmethod = \"isotonic\"\n",
            "[split]\nfractions = [0.5, 0.5, 0.5]\n",
            "[deployment]\npolar_classes = [\"Volcano\"]\n",
            "[deployment]\ntagged_at = \"yesterday\"\n",
        ] {
            let raw = RawConfig::parse(text).unwrap();
            assert!(raw.validate(Path::new(".")).is_err(), "{text}");
        }
    }

    #[test]
    fn strip_georef_is_all_or_nothing() {
        let text = "[[landmarks.strips]]\nimage = \"s.png\"\nid = \"s\"\nlat0 = 1.0\n";
        assert!(RawConfig::parse(text).unwrap().validate(Path::new(".")).is_err());
    }
}
