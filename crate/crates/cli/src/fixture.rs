//! Synthetic demo dataset: textured HiRISE-style crops for every class, an
//! unlabeled archive with georeferences, and one strip with bright blobs.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use marstag::archive::GeoRef;
use marstag::datasets::{write_manifest, ClassCatalog, ClassId, Instrument, SampleRecord};
use marstag::Grid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::artifacts::ensure_dir;
use crate::error::{CliError, Result};

pub const SIDE: usize = 32;
const SOURCES_PER_CLASS: usize = 6;
const CROPS_PER_SOURCE: usize = 4;
const ARCHIVE_ITEMS: usize = 96;

/// Class texture at pixel `(r, c)` before noise.
fn texture(class: &str, r: f64, c: f64, phase: f64) -> f64 {
    let mid = (SIDE as f64 - 1.0) / 2.0;
    let (dy, dx) = (r - mid, c - mid);
    let rad = (dy * dy + dx * dx).sqrt();
    match class {
        "Bright dune" => 175.0 + 45.0 * (2.0 * PI * (c + phase) / 6.0).sin(),
        "Dark dune" => 70.0 + 30.0 * (2.0 * PI * (r + c + phase) / 5.0).sin(),
        "Crater" => {
            if (7.0..11.0).contains(&rad) {
                55.0
            } else {
                125.0
            }
        }
        "Impact ejecta" => 110.0 + 130.0 * (-rad * rad / 60.0).exp(),
        "Slope streak" => {
            if (r - c - phase).abs() < 3.0 {
                55.0
            } else {
                145.0
            }
        }
        "Spider" => {
            let arm = (dy.atan2(dx) * 3.0 + phase).sin().abs();
            if arm < 0.25 && rad > 2.0 {
                50.0
            } else {
                150.0
            }
        }
        "Swiss cheese" => {
            let (pr, pc) = ((r + phase) % 10.0 - 5.0, (c + 2.0 * phase) % 10.0 - 5.0);
            if pr * pr + pc * pc < 9.0 {
                85.0
            } else {
                205.0
            }
        }
        _ => 128.0,
    }
}

pub fn synth_image(class: &str, rng: &mut ChaCha8Rng) -> Grid {
    let phase = rng.random_range(0.0..10.0);
    let gain = rng.random_range(0.92..1.08);
    let sigma = if class == "Other" { 40.0 } else { 10.0 };
    let noise = Normal::new(0.0, sigma).expect("valid sigma");
    Grid::from_fn(SIDE, SIDE, |r, c| {
        (gain * texture(class, r as f64, c as f64, phase) + noise.sample(rng))
            .clamp(0.0, 255.0)
            .round()
    })
}

/// A dark strip with bright textured blobs at fixed places.
pub fn synth_strip(rng: &mut ChaCha8Rng) -> Grid {
    let blobs = [(30.0, 40.0, 12.0), (60.0, 150.0, 10.0), (25.0, 230.0, 9.0)];
    let noise = Normal::new(0.0, 6.0).expect("valid sigma");
    Grid::from_fn(288, 96, |r, c| {
        let mut v = 40.0;
        for &(br, bc, rad) in &blobs {
            let d = ((r as f64 - br).powi(2) + (c as f64 - bc).powi(2)).sqrt();
            if d < rad {
                v = 215.0 + 25.0 * ((r + c) % 3) as f64 / 2.0;
            }
        }
        (v + noise.sample(rng)).clamp(0.0, 255.0).round()
    })
}

const CONFIG: &str = r#"# Demo pipeline over the synthetic fixture.
[paths]
manifest = "manifest.csv"
images = "images"
catalog = "hirise"
archive = "archive.csv"
output = "out"

[split]
fractions = [0.5, 0.25, 0.25]
group_key = "SOURCE_IMAGE"

[images]
size = 48
resize = "direct"

[augmentation]
recipe = "hirise"
splits = ["TRAIN"]

[[landmarks.strips]]
image = "strips/strip_a.png"
id = "STRIP_A"
instrument = "HIRISE"
lat0 = -70.0
lon0 = 120.0
dlat = -0.05
dlon = 0.02

[landmarks]
border = 30
tile = 128

[model]
kind = "softmax"
epochs = 40
learning_rate = 0.5
batch_size = 32

[calibration]
method = "temperature"
bins = 10

[deployment]
tau = 0.9
polar_cutoff = -60.0
polar_classes = ["Spider", "Swiss cheese"]
tagged_at = "2021-06-01T00:00:00Z"

[seeds]
split = 7
augment = 11
train = 3
"#;

fn save(grid: &Grid, path: &Path) -> Result<()> {
    grid.save_png(path).map_err(|e| CliError::data(e.to_string()))
}

/// Writes the demo fixture into `dir`.
pub fn write_fixture(dir: &Path) -> Result<()> {
    let catalog = ClassCatalog::hirise();
    let images = dir.join("images");
    ensure_dir(&images)?;
    ensure_dir(&dir.join("strips"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    let mut labeled = Vec::new();
    for (k, info) in catalog.classes().iter().enumerate() {
        for s in 0..SOURCES_PER_CLASS {
            let source = format!("ESP_{:03}", k * SOURCES_PER_CLASS + s);
            for j in 0..CROPS_PER_SOURCE {
                let id = format!("{source}_{j}");
                let file = format!("{id}.png");
                save(&synth_image(&info.name, &mut rng), &images.join(&file))?;
                let mut r = SampleRecord::new(id, Instrument::Hirise);
                r.image_ref = file.into();
                r.source_image_id = source.clone();
                r.single_label = Some(ClassId(k));
                labeled.push(r);
            }
        }
    }
    write_manifest(dir.join("manifest.csv"), &labeled, &catalog)?;

    let lats = [-85.0, -72.0, -65.0, -55.0, -30.0, -10.0, 15.0, 40.0];
    let mut archive = Vec::new();
    for i in 0..ARCHIVE_ITEMS {
        let class = &catalog.classes()[rng.random_range(0..catalog.len())].name;
        let id = format!("ARC_{i:03}");
        let file = format!("{id}.png");
        save(&synth_image(class, &mut rng), &images.join(&file))?;
        let mut r = SampleRecord::new(id, Instrument::Hirise);
        r.image_ref = file.into();
        r.source_image_id = format!("ARC_SRC_{i:03}");
        r.georef = Some(GeoRef {
            lat0: lats[i % lats.len()],
            lon0: rng.random_range(-180.0..180.0f64).round(),
            dlat_per_row: -0.001,
            dlon_per_col: 0.001,
        });
        archive.push(r);
    }
    write_manifest(dir.join("archive.csv"), &archive, &catalog)?;

    save(&synth_strip(&mut rng), &dir.join("strips").join("strip_a.png"))?;
    fs::write(dir.join("config.toml"), CONFIG).map_err(|e| CliError::data(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn bundled() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo")
    }

    #[test]
    fn bundled_fixture_is_current() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path()).unwrap();
        for f in ["config.toml", "manifest.csv", "archive.csv"] {
            assert_eq!(
                fs::read_to_string(dir.path().join(f)).unwrap(),
                fs::read_to_string(bundled().join(f)).unwrap(),
                "{f}"
            );
        }
        for f in ["images/ESP_000_0.png", "images/ARC_095.png", "strips/strip_a.png"] {
            assert_eq!(
                Grid::load(dir.path().join(f)).unwrap(),
                Grid::load(bundled().join(f)).unwrap(),
                "{f}"
            );
        }
    }
}
