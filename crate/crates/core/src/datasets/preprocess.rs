use std::fmt;
use std::str::FromStr;

use crate::grid::Grid;

pub const DEFAULT_TARGET_SIZE: usize = 227;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResizeMode {
    /// Scale the short side to the target keeping aspect ratio, then
    /// center-crop the long side (surface images).
    ShortSide,
    /// Stretch straight to `target x target` (landmark crops).
    Direct,
}

impl fmt::Display for ResizeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResizeMode::ShortSide => "short_side",
            ResizeMode::Direct => "direct",
        })
    }
}

impl FromStr for ResizeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "short_side" | "msl" => Ok(ResizeMode::ShortSide),
            "direct" | "hirise" => Ok(ResizeMode::Direct),
            other => Err(format!("unknown resize mode {other:?}")),
        }
    }
}

pub fn preprocess_resize(image: &Grid, target: usize, mode: ResizeMode) -> Grid {
    match mode {
        ResizeMode::Direct => image.resize_bilinear(target, target),
        ResizeMode::ShortSide => {
            let (w, h) = (image.width(), image.height());
            let short = w.min(h) as f64;
            let scale = target as f64 / short;
            let (nw, nh) = if w <= h {
                (target, ((h as f64 * scale).round() as usize).max(target))
            } else {
                (((w as f64 * scale).round() as usize).max(target), target)
            };
            image.resize_bilinear(nw, nh).center_square()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conformant_input_is_unchanged() {
        let g = Grid::from_fn(227, 227, |r, c| ((r * c) % 255) as f64);
        assert_eq!(preprocess_resize(&g, 227, ResizeMode::ShortSide), g);
    }

    #[test]
    fn tall_input_scales_then_crops() {
        // 454 wide, 908 tall -> 227 x 454 -> middle 227 rows.
        let g = Grid::from_fn(454, 908, |r, _| r as f64);
        let out = preprocess_resize(&g, 227, ResizeMode::ShortSide);
        assert_eq!((out.width(), out.height()), (227, 227));
        // Crop row 0 is intermediate row 113, which samples source y = 2*113 + 0.5.
        assert!((out.get(0, 0) - 226.5).abs() < 1e-9);
    }

    #[test]
    fn landmark_mode_stretches() {
        let g = Grid::new(100, 100, 3.0);
        let out = preprocess_resize(&g, 227, ResizeMode::Direct);
        assert_eq!((out.width(), out.height()), (227, 227));
    }
}
