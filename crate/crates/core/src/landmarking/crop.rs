use super::{BBox, Landmark};
use crate::grid::Grid;

pub const DEFAULT_BORDER: usize = 30;

/// Pixel region cut from the source image before resizing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropRegion {
    pub row0: usize,
    pub col0: usize,
    pub height: usize,
    pub width: usize,
}

fn place(start: isize, len: usize, limit: usize) -> (usize, usize) {
    if len >= limit {
        return (0, limit);
    }
    let start = start.clamp(0, (limit - len) as isize) as usize;
    (start, len)
}

/// Square region around `bbox` with `border` pixels on every side. A region
/// overhanging the image is shifted back inside it; only a region larger
/// than the image is truncated.
pub fn crop_region(width: usize, height: usize, bbox: &BBox, border: usize) -> CropRegion {
    let side = bbox.height().max(bbox.width());
    let r = bbox.row0 as isize - ((side - bbox.height()) / 2) as isize - border as isize;
    let c = bbox.col0 as isize - ((side - bbox.width()) / 2) as isize - border as isize;
    let full = side + 2 * border;
    let (row0, h) = place(r, full, height);
    let (col0, w) = place(c, full, width);
    CropRegion {
        row0,
        col0,
        height: h,
        width: w,
    }
}

/// Bordered square crop of a landmark, bilinearly resized to `out_size`.
pub fn crop_landmark(image: &Grid, landmark: &Landmark, border: usize, out_size: usize) -> Grid {
    let region = crop_region(image.width(), image.height(), &landmark.bbox, border);
    image
        .crop(region.row0, region.col0, region.height, region.width)
        .resize_bilinear(out_size, out_size)
}
