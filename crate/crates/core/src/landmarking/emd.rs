use super::{LandmarkError, Result};

/// Earth mover's distance between two 1-D histograms with unit ground
/// distance between adjacent bins. Both are normalized to unit mass first,
/// after which the distance is the L1 norm of the CDF difference.
pub fn emd_1d(hist_a: &[f64], hist_b: &[f64]) -> Result<f64> {
    if hist_a.len() != hist_b.len() {
        return Err(LandmarkError::LengthMismatch(hist_a.len(), hist_b.len()));
    }
    let mass_a: f64 = hist_a.iter().sum();
    let mass_b: f64 = hist_b.iter().sum();
    if !(mass_a > 0.0) || !(mass_b > 0.0) {
        return Err(LandmarkError::ZeroMass);
    }
    let (mut cdf_a, mut cdf_b, mut total) = (0.0, 0.0, 0.0);
    for (a, b) in hist_a.iter().zip(hist_b) {
        cdf_a += a / mass_a;
        cdf_b += b / mass_b;
        total += (cdf_a - cdf_b).abs();
    }
    Ok(total)
}
