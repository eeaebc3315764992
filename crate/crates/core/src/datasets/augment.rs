//! Training-set augmentation recipes.
//!
//! An [`AugmentationSpec`] cycles through its transform list to produce a
//! fixed number of variants per source image. Quarter-turn rotations and
//! flips are exact pixel permutations; brightness, skew and shear draw their
//! parameters from a seeded generator. Every variant is followed by a
//! centered square crop when `square_crop_after_warp` is set.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Campaign, DatasetError, Instrument, Result, SampleRecord, Split, SplitAssignment};
use crate::grid::{Grid, PIXEL_MAX};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    Rot90,
    Rot180,
    Rot270,
    FlipH,
    FlipV,
    /// Multiplicative factor drawn uniformly from `[lo, hi]`.
    Brightness {
        lo: f64,
        hi: f64,
    },
    /// Vertical shear by an angle drawn uniformly from `±limit_deg`.
    Skew {
        limit_deg: f64,
    },
    /// Horizontal shear by an angle drawn uniformly from `±limit_deg`.
    Shear {
        limit_deg: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationSpec {
    pub transforms: Vec<Transform>,
    pub per_source_count: usize,
    pub square_crop_after_warp: bool,
    pub upsample_factor: BTreeMap<Campaign, usize>,
    /// Smallest share of the square crop that must be filled with source
    /// pixels at the warp limits.
    pub min_retained_fraction: f64,
}

pub const DEFAULT_WARP_LIMIT_DEG: f64 = 8.0;
pub const DEFAULT_MIN_RETAINED: f64 = 0.85;

impl AugmentationSpec {
    /// Orbital landmarks: three rotations, two flips, one brightness jitter;
    /// second-campaign records are duplicated.
    pub fn hirise() -> Self {
        Self {
            transforms: vec![
                Transform::Rot90,
                Transform::Rot180,
                Transform::Rot270,
                Transform::FlipH,
                Transform::FlipV,
                Transform::Brightness { lo: 0.8, hi: 1.2 },
            ],
            per_source_count: 6,
            square_crop_after_warp: true,
            upsample_factor: BTreeMap::from([(Campaign::SecondCampaign, 2)]),
            min_retained_fraction: DEFAULT_MIN_RETAINED,
        }
    }

    /// Pancam recipe: 29 rotated, skewed or sheared variants per image.
    pub fn mer() -> Self {
        Self {
            transforms: vec![
                Transform::Rot90,
                Transform::Rot180,
                Transform::Rot270,
                Transform::Skew {
                    limit_deg: DEFAULT_WARP_LIMIT_DEG,
                },
                Transform::Shear {
                    limit_deg: DEFAULT_WARP_LIMIT_DEG,
                },
            ],
            per_source_count: 29,
            square_crop_after_warp: true,
            upsample_factor: BTreeMap::new(),
            min_retained_fraction: DEFAULT_MIN_RETAINED,
        }
    }

    /// MAHLI sits on a rotatable turret: rotations and flips.
    pub fn msl_mahli() -> Self {
        Self {
            transforms: vec![
                Transform::Rot90,
                Transform::Rot180,
                Transform::Rot270,
                Transform::FlipH,
                Transform::FlipV,
            ],
            per_source_count: 5,
            square_crop_after_warp: true,
            upsample_factor: BTreeMap::new(),
            min_retained_fraction: DEFAULT_MIN_RETAINED,
        }
    }

    /// Mastcam is fixed to the mast: flips only.
    pub fn msl_mastcam() -> Self {
        Self {
            transforms: vec![Transform::FlipH, Transform::FlipV],
            per_source_count: 2,
            square_crop_after_warp: true,
            upsample_factor: BTreeMap::new(),
            min_retained_fraction: DEFAULT_MIN_RETAINED,
        }
    }

    pub fn for_instrument(instrument: Instrument) -> Self {
        match instrument {
            Instrument::Hirise => Self::hirise(),
            Instrument::Mahli => Self::msl_mahli(),
            Instrument::MastcamLeft | Instrument::MastcamRight => Self::msl_mastcam(),
            Instrument::PancamL | Instrument::PancamR => Self::mer(),
        }
    }

    pub fn upsample(&self, campaign: Campaign) -> usize {
        self.upsample_factor.get(&campaign).copied().unwrap_or(1)
    }

    /// Checks structural validity and crop safety for a `width x height` input.
    pub fn validate_for(&self, width: usize, height: usize) -> Result<()> {
        if self.per_source_count == 0 {
            return Err(DatasetError::InvalidSpec("per_source_count must be positive".into()));
        }
        if self.transforms.is_empty() {
            return Err(DatasetError::InvalidSpec("no transforms".into()));
        }
        if self.upsample_factor.values().any(|&f| f == 0) {
            return Err(DatasetError::InvalidSpec("upsample factors must be positive".into()));
        }
        for t in &self.transforms {
            match *t {
                Transform::Brightness { lo, hi } => {
                    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                        return Err(DatasetError::InvalidSpec(format!(
                            "brightness range [{lo}, {hi}] is not a positive interval"
                        )));
                    }
                }
                Transform::Skew { limit_deg } | Transform::Shear { limit_deg } => {
                    if !(0.0..90.0).contains(&limit_deg) {
                        return Err(DatasetError::InvalidSpec(format!(
                            "warp limit {limit_deg} deg outside [0, 90)"
                        )));
                    }
                    let kept = retained_fraction(*t, limit_deg, width, height, self.square_crop_after_warp);
                    if kept < self.min_retained_fraction {
                        return Err(DatasetError::InvalidSpec(format!(
                            "warp limit {limit_deg} deg keeps {kept:.3} of the crop, below {}",
                            self.min_retained_fraction
                        )));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Share of the output crop covered by source pixels (not edge padding)
/// when `transform` is applied at `angle_deg`.
pub fn retained_fraction(transform: Transform, angle_deg: f64, width: usize, height: usize, square_crop: bool) -> f64 {
    let (cw, ch) = if square_crop {
        let s = width.min(height);
        (s, s)
    } else {
        (width, height)
    };
    if cw == 0 || ch == 0 {
        return 0.0;
    }
    // Sample at most a 64x64 lattice of crop pixel centers.
    let step_r = (ch as f64 / 64.0).max(1.0);
    let step_c = (cw as f64 / 64.0).max(1.0);
    let (cy, cx) = ((height as f64 - 1.0) / 2.0, (width as f64 - 1.0) / 2.0);
    let (oy, ox) = ((height - ch) as f64 / 2.0, (width - cw) as f64 / 2.0);
    let tan = angle_deg.to_radians().tan();
    let (mut inside, mut total) = (0usize, 0usize);
    let mut r = 0.0;
    while r < ch as f64 {
        let mut c = 0.0;
        while c < cw as f64 {
            let (y, x) = (oy + r.floor(), ox + c.floor());
            let (sy, sx) = inverse_warp(transform, tan, y - cy, x - cx);
            let (sy, sx) = (sy + cy, sx + cx);
            total += 1;
            if sy >= -0.5 && sy <= height as f64 - 0.5 && sx >= -0.5 && sx <= width as f64 - 0.5 {
                inside += 1;
            }
            c += step_c;
        }
        r += step_r;
    }
    inside as f64 / total as f64
}

/// Maps centered output coordinates back to centered source coordinates.
fn inverse_warp(transform: Transform, tan: f64, v: f64, u: f64) -> (f64, f64) {
    match transform {
        Transform::Shear { .. } => (v, u - tan * v),
        Transform::Skew { .. } => (v - tan * u, u),
        _ => (v, u),
    }
}

fn warp(image: &Grid, transform: Transform, angle_deg: f64) -> Grid {
    let tan = angle_deg.to_radians().tan();
    let cy = (image.height() as f64 - 1.0) / 2.0;
    let cx = (image.width() as f64 - 1.0) / 2.0;
    Grid::from_fn(image.width(), image.height(), |r, c| {
        let (sy, sx) = inverse_warp(transform, tan, r as f64 - cy, c as f64 - cx);
        image.sample_bilinear(sy + cy, sx + cx)
    })
}

fn apply(image: &Grid, transform: Transform, rng: &mut ChaCha8Rng) -> Grid {
    match transform {
        Transform::Rot90 => image.rot90(),
        Transform::Rot180 => image.rot180(),
        Transform::Rot270 => image.rot270(),
        Transform::FlipH => image.flip_h(),
        Transform::FlipV => image.flip_v(),
        Transform::Brightness { lo, hi } => {
            let factor = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            image.map(|v| (v * factor).clamp(0.0, PIXEL_MAX))
        }
        Transform::Skew { limit_deg } | Transform::Shear { limit_deg } => {
            let angle = if limit_deg > 0.0 {
                rng.random_range(-limit_deg..=limit_deg)
            } else {
                0.0
            };
            warp(image, transform, angle)
        }
    }
}

/// Produces exactly `spec.per_source_count` variants of `image`; the
/// original is not included.
pub fn augment(image: &Grid, spec: &AugmentationSpec, seed: u64) -> Result<Vec<Grid>> {
    if image.is_empty() {
        return Err(DatasetError::InvalidSpec("empty image".into()));
    }
    spec.validate_for(image.width(), image.height())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..spec.per_source_count)
        .map(|i| {
            let out = apply(image, spec.transforms[i % spec.transforms.len()], &mut rng);
            if spec.square_crop_after_warp {
                out.center_square()
            } else {
                out
            }
        })
        .collect())
}

/// Stable per-(sample, copy) seed derivation (FNV-1a over the id, mixed
/// with the base seed and copy index).
pub fn augment_seed(base: u64, sample_id: &str, copy: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in sample_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ base.rotate_left(17) ^ (copy as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// One image of an expanded training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpandedItem {
    /// Index into the record slice.
    pub record: usize,
    /// Upsampling copy number, 0 for the first copy.
    pub copy: usize,
    /// `None` for the original image, otherwise the augmentation index.
    pub augmentation: Option<usize>,
}

/// Lists every image the training pipeline materializes: originals are kept,
/// records in `augment_splits` get their recipe's variants, and upsampling
/// duplicates records in TRAIN/VAL by campaign before augmentation.
pub fn expand_dataset<'a>(
    records: &[SampleRecord],
    assignment: &SplitAssignment,
    augment_splits: &[Split],
    spec_for: impl Fn(&SampleRecord) -> &'a AugmentationSpec,
) -> Vec<ExpandedItem> {
    let mut out = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let Some(split) = assignment.get(&r.sample_id) else {
            continue;
        };
        let spec = spec_for(r);
        let copies = if matches!(split, Split::Train | Split::Val) {
            spec.upsample(r.campaign)
        } else {
            1
        };
        let variants = if augment_splits.contains(&split) {
            spec.per_source_count
        } else {
            0
        };
        for copy in 0..copies {
            out.push(ExpandedItem {
                record: i,
                copy,
                augmentation: None,
            });
            out.extend((0..variants).map(|a| ExpandedItem {
                record: i,
                copy,
                augmentation: Some(a),
            }));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker(side: usize) -> Grid {
        Grid::from_fn(side, side, |r, c| ((r * 7 + c * 13) % 256) as f64)
    }

    #[test]
    fn flip_h_small_grid() {
        let g = Grid::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let spec = AugmentationSpec {
            transforms: vec![Transform::FlipH],
            per_source_count: 1,
            square_crop_after_warp: true,
            upsample_factor: BTreeMap::new(),
            min_retained_fraction: DEFAULT_MIN_RETAINED,
        };
        let out = augment(&g, &spec, 0).unwrap();
        assert_eq!(out[0], Grid::from_rows(&[vec![2.0, 1.0], vec![4.0, 3.0]]));
    }

    #[test]
    fn rotations_and_flips_are_permutations() {
        let g = checker(9);
        let out = augment(&g, &AugmentationSpec::msl_mahli(), 1).unwrap();
        let mut base: Vec<f64> = g.data().to_vec();
        base.sort_by(f64::total_cmp);
        for v in out {
            let mut px = v.data().to_vec();
            px.sort_by(f64::total_cmp);
            assert_eq!(px, base);
        }
    }

    #[test]
    fn mer_recipe_yields_29_square_outputs() {
        let g = Grid::from_fn(20, 16, |r, c| (r + c) as f64);
        let out = augment(&g, &AugmentationSpec::mer(), 5).unwrap();
        assert_eq!(out.len(), 29);
        assert!(out.iter().all(|o| o.width() == 16 && o.height() == 16));
    }

    #[test]
    fn augmentation_is_seeded() {
        let g = checker(12);
        let spec = AugmentationSpec::mer();
        assert_eq!(augment(&g, &spec, 9).unwrap(), augment(&g, &spec, 9).unwrap());
        assert_ne!(augment(&g, &spec, 9).unwrap(), augment(&g, &spec, 10).unwrap());
    }

    #[test]
    fn brightness_stays_in_pixel_range() {
        let g = Grid::new(8, 8, 250.0);
        let spec = AugmentationSpec {
            transforms: vec![Transform::Brightness { lo: 0.8, hi: 1.2 }],
            per_source_count: 20,
            ..AugmentationSpec::hirise()
        };
        for o in augment(&g, &spec, 3).unwrap() {
            assert!(o.data().iter().all(|&v| (200.0..=255.0).contains(&v)));
        }
    }

    #[test]
    fn default_warp_limit_is_crop_safe() {
        let kept = retained_fraction(Transform::Shear { limit_deg: 8.0 }, 8.0, 227, 227, true);
        // Shear keeps area; the two clipped triangles lose tan(8deg)/4 of a square.
        let expected = 1.0 - 8f64.to_radians().tan() / 4.0;
        assert!((kept - expected).abs() < 0.02, "{kept} vs {expected}");
        assert!(AugmentationSpec::mer().validate_for(227, 227).is_ok());
    }

    #[test]
    fn steep_warp_is_rejected() {
        let spec = AugmentationSpec {
            transforms: vec![Transform::Skew { limit_deg: 45.0 }],
            ..AugmentationSpec::mer()
        };
        assert!(matches!(
            augment(&checker(32), &spec, 0),
            Err(DatasetError::InvalidSpec(_))
        ));
    }

    #[test]
    fn zero_count_rejected() {
        let spec = AugmentationSpec {
            per_source_count: 0,
            ..AugmentationSpec::hirise()
        };
        assert!(spec.validate_for(10, 10).is_err());
    }
}
