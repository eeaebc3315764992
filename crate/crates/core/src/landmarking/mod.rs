//! Dynamic landmarking for large orbital image strips.
//!
//! Pixel salience is a weighted mix of a Canny edge response and the Earth
//! mover's distance between the intensity histogram of a small window and
//! that of a larger enclosing window. Connected regions above the salience
//! threshold become landmarks, which are cropped as bordered squares and
//! resized for classification. A genetic algorithm tunes the window sizes,
//! filter weights and threshold against hand-labeled salient masks.

mod canny;
mod components;
mod crop;
mod emd;
mod ga;
mod io;
mod salience;

use thiserror::Error;

use crate::grid::Grid;

pub use canny::{canny_edges, canny_response};
pub use components::{extract_landmarks, label_components, scan_strip, TileConfig};
pub use crop::{crop_landmark, crop_region, CropRegion, DEFAULT_BORDER};
pub use emd::emd_1d;
pub use ga::{ga_optimize, GaConfig, GaResult, LabeledImage, ParamBounds};
pub use io::{read_landmarks_csv, read_params, write_landmarks_csv, write_params};
pub use salience::{combine_salience, compute_salience, emd_salience, emd_salience_raw};

#[derive(Debug, Error)]
pub enum LandmarkError {
    #[error("image {width}x{height} is too small: {reason}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        reason: String,
    },
    #[error("histogram lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("histogram has zero total mass")]
    ZeroMass,
    #[error("map dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("invalid salience parameters: {0}")]
    InvalidParams(String),
    #[error("invalid search bounds: {0}")]
    InvalidBounds(String),
    #[error("no labeled images to tune against")]
    EmptyTrainingSet,
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, LandmarkError>;

/// Tunable configuration of the salience detector.
#[derive(Debug, Clone, PartialEq)]
pub struct SalienceParams {
    pub inner_window: usize,
    pub outer_window: usize,
    pub w_canny: f64,
    pub w_emd: f64,
    pub salience_threshold: f64,
    /// Hysteresis thresholds on Sobel gradient magnitude (8-bit intensity units).
    pub canny_low: f64,
    pub canny_high: f64,
    pub canny_sigma: f64,
    pub histogram_bins: usize,
    pub min_area: usize,
}

impl Default for SalienceParams {
    fn default() -> Self {
        Self {
            inner_window: 7,
            outer_window: 21,
            w_canny: 0.5,
            w_emd: 1.0,
            salience_threshold: 0.5,
            canny_low: 20.0,
            canny_high: 50.0,
            canny_sigma: 1.0,
            histogram_bins: 32,
            min_area: 25,
        }
    }
}

impl SalienceParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LandmarkError::InvalidParams(m));
        if self.inner_window.is_multiple_of(2) || self.outer_window.is_multiple_of(2) {
            return bad(format!(
                "window sizes must be odd, got {} and {}",
                self.inner_window, self.outer_window
            ));
        }
        if self.inner_window >= self.outer_window {
            return bad(format!(
                "inner window {} must be smaller than outer window {}",
                self.inner_window, self.outer_window
            ));
        }
        if !(self.w_canny >= 0.0 && self.w_emd >= 0.0 && self.w_canny + self.w_emd > 0.0) {
            return bad(format!(
                "weights ({}, {}) must be nonnegative with a positive sum",
                self.w_canny, self.w_emd
            ));
        }
        if !(0.0..=1.0).contains(&self.salience_threshold) {
            return bad(format!("threshold {} outside [0, 1]", self.salience_threshold));
        }
        if !(self.canny_low < self.canny_high) {
            return bad(format!(
                "canny_low {} must be below canny_high {}",
                self.canny_low, self.canny_high
            ));
        }
        if !(self.canny_sigma > 0.0) {
            return bad(format!("canny_sigma {} must be positive", self.canny_sigma));
        }
        if self.histogram_bins == 0 {
            return bad("histogram_bins must be positive".into());
        }
        Ok(())
    }
}

/// Per-pixel salience normalized to `[0, 1]`, same shape as its source image.
#[derive(Debug, Clone, PartialEq)]
pub struct SalienceMap {
    pub scores: Grid,
}

impl SalienceMap {
    pub fn width(&self) -> usize {
        self.scores.width()
    }

    pub fn height(&self) -> usize {
        self.scores.height()
    }
}

/// Half-open pixel rectangle `[row0, row1) x [col0, col1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BBox {
    pub row0: usize,
    pub col0: usize,
    pub row1: usize,
    pub col1: usize,
}

impl BBox {
    pub fn height(&self) -> usize {
        self.row1 - self.row0
    }

    pub fn width(&self) -> usize {
        self.col1 - self.col0
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.row0 + self.row1) as f64 / 2.0,
            (self.col0 + self.col1) as f64 / 2.0,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Landmark {
    pub source_image_id: String,
    pub bbox: BBox,
    pub peak_salience: f64,
    pub area_px: usize,
}

pub(crate) fn check_min_side(image: &Grid, min_side: usize, what: &str) -> Result<()> {
    if image.width() < min_side || image.height() < min_side {
        return Err(LandmarkError::ImageTooSmall {
            width: image.width(),
            height: image.height(),
            reason: format!("{what} needs both sides >= {min_side}"),
        });
    }
    Ok(())
}
