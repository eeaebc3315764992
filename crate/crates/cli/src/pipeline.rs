//! Pipeline stages. Each stage reads its inputs from the configured paths or
//! from earlier artifacts in the output directory and writes its own
//! artifacts there.

use std::collections::BTreeMap;
use std::path::Path;

use log::{info, warn};
use marstag::archive::{
    build_index, class_set, distribution_shift_report, polar_filter, read_tags_csv, tag_archive, write_index,
    write_tags_csv, ArchiveIndex, ArchiveItem, ItemLocation, TagRecord,
};
use marstag::calibration::{
    abstention_report, accuracy, apply_calibrator_batch, confusion_matrix, ece, fit_calibrator, nll, per_class_metrics,
    read_calibrator, reliability_bins, softmax, threshold_predict, write_calibrator, write_labels_csv,
    write_logits_csv, write_reliability_csv, CalibrationFit, Calibrator,
};
use marstag::datasets::{
    augment, augment_seed, expand_dataset, load_manifest, preprocess_resize, read_split_csv, resolve_priority,
    split_grouped, write_split_csv, AugmentationSpec, ClassCatalog, ClassId, ExpandedItem, Instrument, ResizeMode,
    SampleRecord, Split, SplitAssignment, DEFAULT_TARGET_SIZE,
};
use marstag::landmarking::{crop_landmark, read_landmarks_csv, scan_strip, write_landmarks_csv, Landmark, TileConfig};
use marstag::models::{
    chain_order, extract_features, read_model, train_chain, train_multilabel, train_softmax, write_model, Model,
    MostCommonBaseline, Scorer,
};
use marstag::Grid;
use rayon::prelude::*;

use crate::artifacts::{self as art, FeatureRow, Metrics};
use crate::config::{ModelKind, PipelineConfig};
use crate::error::{CliError, ErrorKind, Result};
use crate::report::{cmd_report, ReportInputs};

pub fn load_records(cfg: &PipelineConfig) -> Result<Vec<SampleRecord>> {
    let records = load_manifest(&cfg.manifest, &cfg.catalog)?;
    if records.is_empty() {
        return Err(CliError::data(format!(
            "manifest {} has no rows",
            cfg.manifest.display()
        )));
    }
    Ok(records)
}

/// Single training label: the explicit label, else the highest-priority
/// class of the label set.
pub fn label_of(r: &SampleRecord, catalog: &ClassCatalog) -> Result<usize> {
    if let Some(c) = r.single_label {
        return Ok(c.0);
    }
    let set = r.label_set();
    if set.is_empty() {
        return Err(CliError::data(format!("sample {:?} has no label", r.sample_id)));
    }
    Ok(resolve_priority(&set, catalog)?.0)
}

fn require_file(path: &Path, hint: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::missing(format!(
            "{} not found; run `marstag {hint}` first",
            path.display()
        )))
    }
}

pub fn stage_split(cfg: &PipelineConfig, records: &[SampleRecord]) -> Result<SplitAssignment> {
    let split = split_grouped(records, cfg.group_key, cfg.fractions, cfg.split_seed)?;
    write_split_csv(cfg.out(art::SPLIT), &split)?;
    info!(
        "split: {} train, {} val, {} test",
        split.count(Split::Train),
        split.count(Split::Val),
        split.count(Split::Test)
    );
    Ok(split)
}

pub fn read_split(cfg: &PipelineConfig) -> Result<SplitAssignment> {
    let path = cfg.out(art::SPLIT);
    require_file(&path, "split")?;
    Ok(read_split_csv(path, cfg.fractions, cfg.group_key)?)
}

/// Augmentation recipes per instrument under the configured policy.
struct Recipes {
    specs: BTreeMap<Instrument, AugmentationSpec>,
    splits: Vec<Split>,
}

impl Recipes {
    fn new(cfg: &PipelineConfig) -> Self {
        let identity = AugmentationSpec {
            transforms: Vec::new(),
            per_source_count: 0,
            square_crop_after_warp: false,
            upsample_factor: BTreeMap::new(),
            min_retained_fraction: 0.0,
        };
        let specs = Instrument::ALL
            .into_iter()
            .map(|i| (i, cfg.recipe.spec_for(i).unwrap_or_else(|| identity.clone())))
            .collect();
        let splits = match cfg.recipe {
            crate::config::Recipe::None => Vec::new(),
            _ => cfg.augment_splits.clone(),
        };
        Self { specs, splits }
    }

    fn spec(&self, instrument: Instrument) -> &AugmentationSpec {
        &self.specs[&instrument]
    }

    fn expand(&self, records: &[SampleRecord], split: &SplitAssignment) -> Vec<ExpandedItem> {
        expand_dataset(records, split, &self.splits, |r| self.spec(r.instrument))
    }
}

fn load_image(cfg: &PipelineConfig, r: &SampleRecord) -> Result<Grid> {
    Grid::load(cfg.images.join(&r.image_ref)).map_err(|e| CliError::data(format!("sample {:?}: {e}", r.sample_id)))
}

/// The expanded image for `item`, before resizing.
fn expanded_image(
    cfg: &PipelineConfig,
    recipes: &Recipes,
    r: &SampleRecord,
    source: &Grid,
    item: &ExpandedItem,
) -> Result<Grid> {
    match item.augmentation {
        None => Ok(source.clone()),
        Some(a) => {
            let seed = augment_seed(cfg.augment_seed, &r.sample_id, item.copy);
            let mut variants = augment(source, recipes.spec(r.instrument), seed)
                .map_err(|e| CliError::from(e).during(&format!("augmenting {:?}", r.sample_id)))?;
            Ok(variants.swap_remove(a))
        }
    }
}

/// Lists the expanded training set; with `materialize` the variants are
/// also written as PNGs under `augmented/`.
pub fn stage_augment(
    cfg: &PipelineConfig,
    records: &[SampleRecord],
    split: &SplitAssignment,
    materialize: bool,
) -> Result<Vec<ExpandedItem>> {
    let recipes = Recipes::new(cfg);
    let items = recipes.expand(records, split);
    art::write_rows(
        &cfg.out(art::AUGMENTED),
        &["sample_id", "split", "copy", "augmentation", "seed"],
        items.iter().map(|it| {
            let r = &records[it.record];
            vec![
                r.sample_id.clone(),
                split.get(&r.sample_id).map(|s| s.to_string()).unwrap_or_default(),
                it.copy.to_string(),
                it.augmentation.map(|a| a.to_string()).unwrap_or_default(),
                augment_seed(cfg.augment_seed, &r.sample_id, it.copy).to_string(),
            ]
        }),
    )?;
    if materialize {
        let dir = cfg.out("augmented");
        art::ensure_dir(&dir)?;
        by_record(&items)
            .par_iter()
            .map(|group| -> Result<()> {
                let r = &records[group[0].record];
                let source = load_image(cfg, r)?;
                for it in group.iter() {
                    let img = expanded_image(cfg, &recipes, r, &source, it)?;
                    let name = format!(
                        "{}_c{}_{}.png",
                        safe_name(&r.sample_id),
                        it.copy,
                        it.augmentation.map_or("orig".to_string(), |a| format!("a{a:02}"))
                    );
                    img.save_png(dir.join(name))?;
                }
                Ok(())
            })
            .collect::<Result<Vec<()>>>()?;
    }
    info!("augment: {} images", items.len());
    Ok(items)
}

/// Consecutive items of the same record.
fn by_record(items: &[ExpandedItem]) -> Vec<&[ExpandedItem]> {
    items.chunk_by(|a, b| a.record == b.record).collect()
}

/// Keeps ASCII alphanumerics, `-` and `_`, so names stay inside their directory.
pub fn safe_name(id: &str) -> String {
    let s: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

fn features_of(cfg: &PipelineConfig, image: &Grid) -> Vec<f64> {
    extract_features(&preprocess_resize(image, cfg.image_size, cfg.resize))
}

pub fn stage_features(
    cfg: &PipelineConfig,
    records: &[SampleRecord],
    split: &SplitAssignment,
) -> Result<Vec<FeatureRow>> {
    let recipes = Recipes::new(cfg);
    let items = recipes.expand(records, split);
    let groups = by_record(&items);
    let rows: Vec<Vec<FeatureRow>> = groups
        .par_iter()
        .map(|group| -> Result<Vec<FeatureRow>> {
            let r = &records[group[0].record];
            let s = split
                .get(&r.sample_id)
                .ok_or_else(|| CliError::data(format!("sample {:?} is not in split.csv", r.sample_id)))?;
            let source = load_image(cfg, r)?;
            group
                .iter()
                .map(|it| {
                    Ok(FeatureRow {
                        sample_id: r.sample_id.clone(),
                        split: s,
                        copy: it.copy,
                        augmentation: it.augmentation,
                        x: features_of(cfg, &expanded_image(cfg, &recipes, r, &source, it)?),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<FeatureRow> = rows.into_iter().flatten().collect();
    art::write_features(&cfg.out(art::FEATURES), &rows)?;
    info!("features: {} rows", rows.len());
    Ok(rows)
}

pub fn read_features(cfg: &PipelineConfig) -> Result<Vec<FeatureRow>> {
    let path = cfg.out(art::FEATURES);
    require_file(&path, "train")?;
    art::read_features(&path)
}

fn record_index(records: &[SampleRecord]) -> BTreeMap<&str, &SampleRecord> {
    records.iter().map(|r| (r.sample_id.as_str(), r)).collect()
}

fn lookup<'a>(index: &BTreeMap<&str, &'a SampleRecord>, id: &str) -> Result<&'a SampleRecord> {
    index
        .get(id)
        .copied()
        .ok_or_else(|| CliError::data(format!("feature row {id:?} is not in the manifest")))
}

fn site(r: &SampleRecord) -> String {
    r.site_id.clone()
}

pub fn stage_train(cfg: &PipelineConfig, records: &[SampleRecord], rows: &[FeatureRow]) -> Result<Model> {
    let index = record_index(records);
    let train: Vec<&FeatureRow> = rows.iter().filter(|r| r.split == Split::Train).collect();
    if train.is_empty() {
        return Err(CliError::data("no TRAIN rows to fit"));
    }
    let x: Vec<Vec<f64>> = train.iter().map(|r| r.x.clone()).collect();
    let classes: Vec<ClassId> = cfg.catalog.ids().collect();
    let model = match cfg.kind {
        ModelKind::Softmax => {
            let y = train
                .iter()
                .map(|r| label_of(lookup(&index, &r.sample_id)?, &cfg.catalog))
                .collect::<Result<Vec<_>>>()?;
            Model::Softmax(train_softmax(&x, &y, classes, &cfg.sgd)?)
        }
        ModelKind::MultiLabel | ModelKind::Chain => {
            let order = match cfg.kind {
                ModelKind::Chain => chain_order(&cfg.catalog),
                _ => classes,
            };
            let mut targets = Vec::with_capacity(train.len());
            let mut sites = Vec::with_capacity(train.len());
            for row in &train {
                let r = lookup(&index, &row.sample_id)?;
                let set = r.label_set();
                if set.is_empty() {
                    return Err(CliError::data(format!("sample {:?} has no label", r.sample_id)));
                }
                targets.push(order.iter().map(|c| set.contains(c)).collect::<Vec<bool>>());
                sites.push(site(r));
            }
            if cfg.kind == ModelKind::Chain {
                Model::Chain(train_chain(&x, &targets, &sites, order, &cfg.sgd)?)
            } else {
                Model::MultiLabel(train_multilabel(&x, &targets, order, &cfg.sgd)?)
            }
        }
    };
    write_model(cfg.out(art::MODEL), &model)?;
    info!("train: {} model on {} rows", model.kind(), train.len());
    Ok(model)
}

pub fn read_trained_model(cfg: &PipelineConfig) -> Result<Model> {
    let path = cfg.out(art::MODEL);
    require_file(&path, "train")?;
    Ok(read_model(path)?)
}

pub fn scorer(model: &Model) -> Result<&dyn Scorer> {
    match model {
        Model::Softmax(h) => Ok(h),
        Model::MultiLabel(h) => Ok(h),
        Model::Chain(c) => Ok(c),
        Model::Hybrid(_) => Err(CliError::config(
            "hybrid models classify by dispatch and have no single logit vector to calibrate",
        )),
    }
}

/// Logits in catalog order. Chains see each record's own site.
fn catalog_logits(model: &Model, catalog: &ClassCatalog, x: &[f64], r: &SampleRecord) -> Result<Vec<f64>> {
    let (classes, z) = match model {
        Model::Chain(c) => {
            let s = (!r.site_id.is_empty()).then_some(r.site_id.as_str());
            (c.classes.as_slice(), c.predict_logits(x, s)?)
        }
        other => {
            let s = scorer(other)?;
            (s.classes(), s.logits(x)?)
        }
    };
    if classes.len() != catalog.len() {
        return Err(CliError::data(format!(
            "model has {} classes, catalog has {}",
            classes.len(),
            catalog.len()
        )));
    }
    let mut out = vec![0.0; catalog.len()];
    for (c, v) in classes.iter().zip(z) {
        if !catalog.contains(*c) {
            return Err(CliError::data(format!("model class {c} is not in the catalog")));
        }
        out[c.0] = v;
    }
    Ok(out)
}

/// Sample ids, catalog-order logits and labels.
pub type SplitLogits = (Vec<String>, Vec<Vec<f64>>, Vec<usize>);

/// Ids, catalog-order logits and labels of the original (unaugmented,
/// first-copy) images of `split`.
pub fn split_logits(
    cfg: &PipelineConfig,
    model: &Model,
    records: &[SampleRecord],
    rows: &[FeatureRow],
    split: Split,
) -> Result<SplitLogits> {
    let index = record_index(records);
    let (mut ids, mut logits, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for row in rows
        .iter()
        .filter(|r| r.split == split && r.copy == 0 && r.augmentation.is_none())
    {
        let r = lookup(&index, &row.sample_id)?;
        ids.push(row.sample_id.clone());
        logits.push(catalog_logits(model, &cfg.catalog, &row.x, r)?);
        labels.push(label_of(r, &cfg.catalog)?);
    }
    if ids.is_empty() {
        return Err(CliError::data(format!("the {split} split is empty")));
    }
    Ok((ids, logits, labels))
}

pub fn stage_calibrate(
    cfg: &PipelineConfig,
    model: &Model,
    records: &[SampleRecord],
    rows: &[FeatureRow],
) -> Result<CalibrationFit> {
    let (ids, logits, labels) = split_logits(cfg, model, records, rows, Split::Val)?;
    write_logits_csv(cfg.out(art::LOGITS_VAL), &ids, &logits)?;
    write_labels_csv(cfg.out(art::LABELS_VAL), &ids, &labels, &cfg.catalog)?;
    let fit = fit_calibrator(cfg.method, &logits, &labels, &cfg.opt)?;
    write_calibrator(cfg.out(art::CALIBRATOR), &fit.calibrator)?;
    art::write_metrics(
        &cfg.out(art::CALIBRATION_FIT),
        &vec![
            ("method".into(), cfg.method.to_string()),
            ("nll".into(), format!("{:.10}", fit.nll)),
            ("identity_nll".into(), format!("{:.10}", fit.identity_nll)),
            ("iterations".into(), fit.iterations.to_string()),
            ("converged".into(), fit.converged.to_string()),
        ],
    )?;
    if !fit.converged {
        warn!(
            "calibrate: optimizer stopped after {} iterations without converging",
            fit.iterations
        );
    }
    Ok(fit)
}

pub fn read_trained_calibrator(cfg: &PipelineConfig) -> Result<Calibrator> {
    let path = cfg.out(art::CALIBRATOR);
    require_file(&path, "calibrate")?;
    Ok(read_calibrator(path)?)
}

fn metric(key: &str, v: f64) -> (String, String) {
    (key.into(), format!("{v:.10}"))
}

pub fn stage_evaluate(
    cfg: &PipelineConfig,
    model: &Model,
    calibrator: &Calibrator,
    records: &[SampleRecord],
    rows: &[FeatureRow],
) -> Result<Metrics> {
    let (_, val_logits, val_labels) = split_logits(cfg, model, records, rows, Split::Val)?;
    let (ids, logits, labels) = split_logits(cfg, model, records, rows, Split::Test)?;
    write_logits_csv(cfg.out(art::LOGITS_TEST), &ids, &logits)?;
    write_labels_csv(cfg.out(art::LABELS_TEST), &ids, &labels, &cfg.catalog)?;

    let plain = |z: &[Vec<f64>]| z.iter().map(|v| softmax(v)).collect::<Vec<_>>();
    let val_raw = plain(&val_logits);
    let val_cal = apply_calibrator_batch(calibrator, &val_logits)?;
    let raw = plain(&logits);
    let cal = apply_calibrator_batch(calibrator, &logits)?;
    let m = cfg.bins;

    let bins_raw = reliability_bins(&raw, &labels, m)?;
    let bins_cal = reliability_bins(&cal, &labels, m)?;
    write_reliability_csv(cfg.out(art::RELIABILITY_UNCAL), &bins_raw)?;
    write_reliability_csv(cfg.out(art::RELIABILITY), &bins_cal)?;

    let preds: Vec<_> = cal.iter().map(|p| threshold_predict(p, cfg.tau)).collect();
    let per_class = per_class_metrics(&preds, &labels, &cfg.catalog)?;
    art::write_per_class(&cfg.out(art::PER_CLASS), &per_class, &cfg.catalog)?;
    let cm = confusion_matrix(&preds, &labels, &cfg.catalog)?;
    art::write_confusion(
        &cfg.out(art::CONFUSION),
        &art::ConfusionTable::from_matrix(&cm, &cfg.catalog),
    )?;

    let index = record_index(records);
    let train_labels = rows
        .iter()
        .filter(|r| r.split == Split::Train && r.copy == 0 && r.augmentation.is_none())
        .map(|r| Ok(ClassId(label_of(lookup(&index, &r.sample_id)?, &cfg.catalog)?)))
        .collect::<Result<Vec<_>>>()?;
    let baseline = MostCommonBaseline::fit(&train_labels)?;
    let test_ids: Vec<ClassId> = labels.iter().map(|&y| ClassId(y)).collect();

    let report_raw = abstention_report(&raw, &labels, cfg.tau)?;
    let report = abstention_report(&cal, &labels, cfg.tau)?;
    let metrics: Metrics = vec![
        ("model_kind".into(), model.kind().into()),
        ("calibration_method".into(), calibrator.method().to_string()),
        ("n_val".into(), val_labels.len().to_string()),
        ("n_test".into(), labels.len().to_string()),
        metric("val_ece_uncalibrated", ece(&val_raw, &val_labels, m)?),
        metric("val_ece_calibrated", ece(&val_cal, &val_labels, m)?),
        metric("test_accuracy_uncalibrated", accuracy(&raw, &labels)?),
        metric("test_accuracy_calibrated", accuracy(&cal, &labels)?),
        metric("test_ece_uncalibrated", bins_raw.ece()),
        metric("test_ece_calibrated", bins_cal.ece()),
        metric("test_mce_calibrated", bins_cal.mce()),
        metric("test_nll_uncalibrated", nll(&raw, &labels)?),
        metric("test_nll_calibrated", nll(&cal, &labels)?),
        metric("tau", cfg.tau),
        metric("test_accuracy_at_tau_uncalibrated", report_raw.accuracy_at_tau),
        metric("test_abstention_uncalibrated", report_raw.abstention_rate),
        metric("test_accuracy_at_tau", report.accuracy_at_tau),
        metric("test_abstention", report.abstention_rate),
        ("test_abstained".into(), report.n_abstained.to_string()),
        metric("baseline_accuracy", baseline.accuracy(&test_ids)),
    ];
    art::write_metrics(&cfg.out(art::METRICS), &metrics)?;
    info!("evaluate: {} test rows", labels.len());
    Ok(metrics)
}

/// Scans the configured strips and writes bordered crops of every landmark.
pub fn stage_landmarks(cfg: &PipelineConfig) -> Result<Vec<Landmark>> {
    let crops = cfg.out(art::CROPS_DIR);
    art::ensure_dir(&crops)?;
    let mut all = Vec::new();
    for strip in &cfg.strips {
        let image = Grid::load(&strip.image)?;
        let found = scan_strip(
            &image,
            &cfg.salience,
            &strip.id,
            TileConfig {
                tile: cfg.tile,
                overlap: None,
            },
        )?;
        for (i, lm) in found.iter().enumerate() {
            crop_landmark(&image, lm, cfg.border, DEFAULT_TARGET_SIZE).save_png(crops.join(crop_name(&strip.id, i)))?;
        }
        info!("landmarks: {} in {}", found.len(), strip.id);
        all.extend(found);
    }
    write_landmarks_csv(cfg.out(art::LANDMARKS), &all)?;
    Ok(all)
}

fn crop_name(strip_id: &str, i: usize) -> String {
    format!("{}_lm{i:03}.png", safe_name(strip_id))
}

/// Archive manifest items plus landmark crops, with features.
fn archive_items(cfg: &PipelineConfig) -> Result<Vec<ArchiveItem>> {
    let mut jobs: Vec<(String, Instrument, std::path::PathBuf, Option<ItemLocation>, ResizeMode)> = Vec::new();
    if let Some(path) = &cfg.archive {
        for r in load_manifest(path, &cfg.catalog)? {
            jobs.push((
                r.sample_id.clone(),
                r.instrument,
                cfg.images.join(&r.image_ref),
                r.georef.map(|g| ItemLocation {
                    georef: g,
                    row: f64::NAN,
                    col: f64::NAN,
                }),
                cfg.resize,
            ));
        }
    }
    if !cfg.strips.is_empty() {
        let path = cfg.out(art::LANDMARKS);
        require_file(&path, "landmarks")?;
        let landmarks = read_landmarks_csv(&path)?;
        for strip in &cfg.strips {
            let mine = landmarks.iter().filter(|l| l.source_image_id == strip.id);
            for (i, lm) in mine.enumerate() {
                let (row, col) = lm.bbox.center();
                jobs.push((
                    format!("{}_lm{i:03}", strip.id),
                    strip.instrument,
                    cfg.out(art::CROPS_DIR).join(crop_name(&strip.id, i)),
                    strip.georef.map(|g| ItemLocation { georef: g, row, col }),
                    ResizeMode::Direct,
                ));
            }
        }
    }
    jobs.into_par_iter()
        .map(|(id, instrument, path, location, mode)| {
            let image = Grid::load(&path).map_err(|e| CliError::data(format!("archive item {id:?}: {e}")))?;
            // Manifest items are located at their image center.
            let location = location.map(|mut loc| {
                if loc.row.is_nan() {
                    loc.row = image.height() as f64 / 2.0;
                    loc.col = image.width() as f64 / 2.0;
                }
                loc
            });
            Ok(ArchiveItem {
                item_id: id,
                instrument,
                features: extract_features(&preprocess_resize(&image, cfg.image_size, mode)),
                location,
            })
        })
        .collect()
}

/// Tags the archive, drops polar classes outside the polar region, and
/// compares class shares with the labeled set.
pub fn stage_tag(
    cfg: &PipelineConfig,
    model: &Model,
    calibrator: &Calibrator,
    records: &[SampleRecord],
) -> Result<Vec<TagRecord>> {
    let items = archive_items(cfg)?;
    let outcome = tag_archive(&items, scorer(model)?, calibrator, cfg.tau, &cfg.catalog, cfg.tagged_at)?;
    let polar = class_set(&cfg.catalog, &cfg.polar_classes)?;
    let tags = polar_filter(&outcome.tags, &polar, cfg.polar_cutoff, &cfg.catalog)?;
    write_tags_csv(cfg.out(art::TAGS), &tags, &cfg.catalog)?;
    art::write_rows(
        &cfg.out(art::TAG_FAILURES),
        &["item_id", "reason"],
        outcome
            .failures
            .iter()
            .map(|f| vec![f.item_id.clone(), f.reason.clone()]),
    )?;
    for f in &outcome.failures {
        warn!("tag: item {} failed: {}", f.item_id, f.reason);
    }
    info!(
        "tag: {} items, {} tags, {} polar drops, {} untagged, {} failures",
        items.len(),
        tags.len(),
        outcome.tags.len() - tags.len(),
        outcome.untagged,
        outcome.failures.len()
    );

    let mut labeled: BTreeMap<ClassId, usize> = BTreeMap::new();
    for r in records {
        *labeled.entry(ClassId(label_of(r, &cfg.catalog)?)).or_default() += 1;
    }
    let shift_path = cfg.out(art::SHIFT);
    match distribution_shift_report(&labeled, &tags, &cfg.catalog) {
        Ok(rows) => {
            let rows: Vec<art::ShiftTableRow> = rows
                .iter()
                .map(|r| art::ShiftTableRow {
                    class: cfg.catalog.name(r.class).to_string(),
                    labeled_percent: r.labeled_percent,
                    archive_percent: r.archive_percent,
                    ratio: r.ratio.label(),
                })
                .collect();
            art::write_shift(&shift_path, &rows)?;
        }
        Err(e) => {
            warn!("tag: no distribution shift table: {e}");
            if shift_path.exists() {
                std::fs::remove_file(&shift_path)?;
            }
        }
    }
    Ok(tags)
}

pub fn stage_index(cfg: &PipelineConfig) -> Result<ArchiveIndex> {
    let path = cfg.out(art::TAGS);
    require_file(&path, "tag")?;
    let tags = read_tags_csv(&path, &cfg.catalog)?;
    let index = build_index(&tags);
    write_index(cfg.out(art::INDEX), &index, &cfg.catalog)?;
    info!(
        "index: {} postings over {} classes",
        index.total_postings(),
        index.postings.len()
    );
    Ok(index)
}

/// Outcome of a full run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub metrics: Metrics,
    pub tags: usize,
    pub calibration_converged: bool,
}

/// Runs every stage in order. A calibrator that did not converge still
/// flows through the remaining stages; the run then ends with a
/// nonconvergence error.
pub fn cmd_run(cfg: &PipelineConfig) -> Result<RunSummary> {
    cfg.require()?;
    art::ensure_dir(&cfg.output)?;
    let records = load_records(cfg).map_err(|e| e.during("load"))?;
    let split = stage_split(cfg, &records).map_err(|e| e.during("split"))?;
    stage_augment(cfg, &records, &split, false).map_err(|e| e.during("augment"))?;
    if !cfg.strips.is_empty() {
        stage_landmarks(cfg).map_err(|e| e.during("landmarks"))?;
    }
    let rows = stage_features(cfg, &records, &split).map_err(|e| e.during("features"))?;
    let model = stage_train(cfg, &records, &rows).map_err(|e| e.during("train"))?;
    let fit = stage_calibrate(cfg, &model, &records, &rows).map_err(|e| e.during("calibrate"))?;
    let metrics = stage_evaluate(cfg, &model, &fit.calibrator, &records, &rows).map_err(|e| e.during("evaluate"))?;
    let tags = stage_tag(cfg, &model, &fit.calibrator, &records).map_err(|e| e.during("tag"))?;
    stage_index(cfg).map_err(|e| e.during("index"))?;
    let shift = cfg.out(art::SHIFT);
    cmd_report(
        &ReportInputs {
            reliability: Some(cfg.out(art::RELIABILITY)),
            per_class: Some(cfg.out(art::PER_CLASS)),
            confusion: Some(cfg.out(art::CONFUSION)),
            shift: shift.exists().then_some(shift),
        },
        &cfg.out(art::REPORT_DIR),
    )
    .map_err(|e| e.during("report"))?;
    let summary = RunSummary {
        metrics,
        tags: tags.len(),
        calibration_converged: fit.converged,
    };
    if !fit.converged {
        return Err(CliError {
            kind: ErrorKind::NonConvergence,
            message: format!(
                "calibrate: {} fit stopped after {} iterations; artifacts were written with the best iterate",
                cfg.method, fit.iterations
            ),
        });
    }
    Ok(summary)
}
