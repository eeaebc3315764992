//! Content-based tagging for planetary image archives.
//!
//! The crate covers the whole path from raw imagery to a searchable index:
//!
//! - [`datasets`]: manifests, vote merging, group-disjoint splits, augmentation
//! - [`landmarking`]: Canny + Earth mover's distance salience, connected
//!   components, bordered square crops, genetic parameter tuning
//! - [`models`]: hand features and linear single-label, multi-label,
//!   classifier-chain and hybrid heads
//! - [`calibration`]: temperature, BCTS, vector and matrix scaling, ECE,
//!   reliability bins, confidence-threshold abstention, per-class metrics
//! - [`archive`]: thresholded tagging, polar plausibility filter, class
//!   index, queries and usage statistics

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod archive;
pub mod calibration;
pub mod datasets;
pub mod grid;
pub mod landmarking;
pub mod models;

pub use grid::Grid;
