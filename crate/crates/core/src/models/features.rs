use crate::grid::{Grid, PIXEL_MAX};
use crate::landmarking::{canny_edges, SalienceParams};

pub const HISTOGRAM_BINS: usize = 32;
/// Histogram bins, edge fraction, mean and standard deviation.
pub const FEATURE_DIM: usize = HISTOGRAM_BINS + 3;

/// Normalized intensity histogram, fraction of Canny edge pixels, and
/// mean/std intensity scaled to `[0, 1]`. Images too small for edge
/// detection report an edge fraction of 0.
pub fn extract_features(image: &Grid) -> Vec<f64> {
    let mut f = vec![0.0; FEATURE_DIM];
    let n = image.data().len();
    if n == 0 {
        return f;
    }
    for &v in image.data() {
        let b =
            ((v.clamp(0.0, PIXEL_MAX) * HISTOGRAM_BINS as f64 / (PIXEL_MAX + 1.0)) as usize).min(HISTOGRAM_BINS - 1);
        f[b] += 1.0;
    }
    for v in &mut f[..HISTOGRAM_BINS] {
        *v /= n as f64;
    }
    f[HISTOGRAM_BINS] = canny_edges(image, &SalienceParams::default())
        .map(|e| e.data().iter().sum::<f64>() / n as f64)
        .unwrap_or(0.0);
    let mean = image.data().iter().sum::<f64>() / n as f64;
    let var = image.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    f[HISTOGRAM_BINS + 1] = mean / PIXEL_MAX;
    f[HISTOGRAM_BINS + 2] = var.sqrt() / PIXEL_MAX;
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image() {
        let f = extract_features(&Grid::new(20, 20, 100.0));
        assert_eq!(f.len(), FEATURE_DIM);
        assert_eq!(f.len(), 35);
        assert_eq!(f[..HISTOGRAM_BINS].iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(f[HISTOGRAM_BINS], 0.0);
        assert_eq!(f[HISTOGRAM_BINS + 2], 0.0);
    }

    #[test]
    fn deterministic_and_normalized() {
        let img = Grid::from_fn(30, 25, |r, c| ((r * 13 + c * 7) % 256) as f64);
        let a = extract_features(&img);
        assert_eq!(a, extract_features(&img.clone()));
        assert!((a[..HISTOGRAM_BINS].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn tiny_images_still_work() {
        let f = extract_features(&Grid::new(3, 3, 10.0));
        assert_eq!(f[HISTOGRAM_BINS], 0.0);
    }
}
