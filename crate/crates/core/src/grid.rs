//! Single-channel pixel grids.
//!
//! Every image in the pipeline is handled as a row-major grid of `f64`
//! intensities on the nominal 8-bit range `[0, 255]`. Geometric operations
//! that only permute pixels (rotations by multiples of 90 degrees, flips,
//! crops) are exact.

use std::path::Path;

use thiserror::Error;

pub const PIXEL_MAX: f64 = 255.0;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("failed to read image {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("failed to write image {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("grid data length {len} does not match {width}x{height}")]
    Shape { width: usize, height: usize, len: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(width: usize, height: usize, fill: f64) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self, GridError> {
        if data.len() != width * height {
            return Err(GridError::Shape {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    /// Builds a grid from nested rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(width * height);
        for row in rows {
            assert_eq!(row.len(), width, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    /// Reads with edge replication for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, row: isize, col: isize) -> f64 {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.get(r, c)
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Copies the `height x width` window whose top-left corner is `(row0, col0)`.
    pub fn crop(&self, row0: usize, col0: usize, height: usize, width: usize) -> Self {
        assert!(row0 + height <= self.height && col0 + width <= self.width);
        Self::from_fn(width, height, |r, c| self.get(row0 + r, col0 + c))
    }

    /// Largest centered square window.
    pub fn center_square(&self) -> Self {
        let side = self.width.min(self.height);
        self.crop((self.height - side) / 2, (self.width - side) / 2, side, side)
    }

    /// Clockwise quarter turn.
    pub fn rot90(&self) -> Self {
        Self::from_fn(self.height, self.width, |r, c| self.get(self.height - 1 - c, r))
    }

    pub fn rot180(&self) -> Self {
        Self::from_fn(self.width, self.height, |r, c| {
            self.get(self.height - 1 - r, self.width - 1 - c)
        })
    }

    pub fn rot270(&self) -> Self {
        Self::from_fn(self.height, self.width, |r, c| self.get(c, self.width - 1 - r))
    }

    /// Mirror left-right.
    pub fn flip_h(&self) -> Self {
        Self::from_fn(self.width, self.height, |r, c| self.get(r, self.width - 1 - c))
    }

    /// Mirror top-bottom.
    pub fn flip_v(&self) -> Self {
        Self::from_fn(self.width, self.height, |r, c| self.get(self.height - 1 - r, c))
    }

    /// Bilinear sample at fractional pixel coordinates with edge replication.
    pub fn sample_bilinear(&self, y: f64, x: f64) -> f64 {
        let y0 = y.floor();
        let x0 = x.floor();
        let fy = y - y0;
        let fx = x - x0;
        let (r, c) = (y0 as isize, x0 as isize);
        let p00 = self.get_clamped(r, c);
        if fy == 0.0 && fx == 0.0 {
            return p00;
        }
        let p01 = self.get_clamped(r, c + 1);
        let p10 = self.get_clamped(r + 1, c);
        let p11 = self.get_clamped(r + 1, c + 1);
        let top = p00 + (p01 - p00) * fx;
        let bottom = p10 + (p11 - p10) * fx;
        top + (bottom - top) * fy
    }

    /// Bilinear resize using pixel-center alignment. Resizing to the same
    /// dimensions is an exact copy.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Self {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        Self::from_fn(width, height, |r, c| {
            let y = ((r as f64 + 0.5) * sy - 0.5).max(0.0);
            let x = ((c as f64 + 0.5) * sx - 0.5).max(0.0);
            self.sample_bilinear(y, x)
        })
    }

    pub fn clamp_to_pixel_range(&self) -> Self {
        self.map(|v| v.clamp(0.0, PIXEL_MAX))
    }

    /// Loads any supported image file and converts it to 8-bit luminance.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GridError> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|source| GridError::Read {
                path: path.display().to_string(),
                source,
            })?
            .to_luma8();
        let (w, h) = img.dimensions();
        let data = img.into_raw().into_iter().map(f64::from).collect();
        Ok(Self {
            width: w as usize,
            height: h as usize,
            data,
        })
    }

    /// Writes an 8-bit grayscale PNG, rounding and clamping intensities.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), GridError> {
        let path = path.as_ref();
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|v| v.round().clamp(0.0, PIXEL_MAX) as u8)
            .collect();
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer length matches dimensions");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| GridError::Write {
                path: path.display().to_string(),
                source,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Grid {
        Grid::from_fn(3, 2, |r, c| (r * 3 + c) as f64)
    }

    #[test]
    fn rotations_compose_to_identity() {
        let g = sample();
        assert_eq!(g.rot90().rot270(), g);
        assert_eq!(g.rot180().rot180(), g);
        assert_eq!(g.rot90().rot90(), g.rot180());
    }

    #[test]
    fn rot90_is_clockwise() {
        // [[0,1,2],[3,4,5]] -> [[3,0],[4,1],[5,2]]
        let r = sample().rot90();
        assert_eq!((r.width(), r.height()), (2, 3));
        assert_eq!(r.row(0), &[3.0, 0.0]);
        assert_eq!(r.row(2), &[5.0, 2.0]);
    }

    #[test]
    fn identity_resize_is_exact() {
        let g = Grid::from_fn(7, 5, |r, c| (r * 31 + c * 7) as f64 % 13.0);
        assert_eq!(g.resize_bilinear(7, 5), g);
    }

    #[test]
    fn constant_resize_stays_constant() {
        let g = Grid::new(10, 4, 42.0);
        let r = g.resize_bilinear(23, 17);
        assert!(r.data().iter().all(|&v| v == 42.0));
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let g = Grid::from_fn(5, 4, |r, c| (r * 40 + c * 3) as f64);
        g.save_png(&path).unwrap();
        assert_eq!(Grid::load(&path).unwrap(), g);
    }
}
