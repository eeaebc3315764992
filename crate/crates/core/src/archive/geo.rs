use super::{ArchiveError, Result};

/// Per-image affine georeference: latitude/longitude of pixel (0, 0) plus
/// degrees per row and per column. An approximation of full photogrammetric
/// projection that is adequate at landmark scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoRef {
    pub lat0: f64,
    pub lon0: f64,
    pub dlat_per_row: f64,
    pub dlon_per_col: f64,
}

/// Wraps a longitude into `[-180, 180)`.
pub fn normalize_lon(lon: f64) -> f64 {
    (lon + 180.0).rem_euclid(360.0) - 180.0
}

pub fn pixel_to_latlon(geo: &GeoRef, row: f64, col: f64) -> Result<(f64, f64)> {
    let lat = geo.lat0 + row * geo.dlat_per_row;
    let lon = geo.lon0 + col * geo.dlon_per_col;
    if !lat.is_finite() || !lon.is_finite() {
        return Err(ArchiveError::NonFinite);
    }
    if lat.abs() > 90.0 {
        return Err(ArchiveError::LatitudeOutOfRange(lat));
    }
    Ok((lat, normalize_lon(lon)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geo(lat0: f64, lon0: f64, dlat: f64, dlon: f64) -> GeoRef {
        GeoRef {
            lat0,
            lon0,
            dlat_per_row: dlat,
            dlon_per_col: dlon,
        }
    }

    #[test]
    fn origin_maps_to_reference_point() {
        let g = geo(-70.0, 12.5, -0.001, 0.001);
        assert_eq!(pixel_to_latlon(&g, 0.0, 0.0).unwrap(), (-70.0, 12.5));
    }

    #[test]
    fn rows_move_latitude() {
        let (lat, _) = pixel_to_latlon(&geo(-70.0, 0.0, -0.001, 0.0), 1000.0, 0.0).unwrap();
        assert!((lat + 71.0).abs() < 1e-9);
    }

    #[test]
    fn longitude_wraps_past_antimeridian() {
        let (_, lon) = pixel_to_latlon(&geo(0.0, 179.5, 0.0, 0.001), 0.0, 1000.0).unwrap();
        assert!((lon + 179.5).abs() < 1e-9);
        assert_eq!(normalize_lon(180.0), -180.0);
        assert_eq!(normalize_lon(-180.0), -180.0);
    }

    #[test]
    fn latitude_past_pole_is_an_error() {
        let err = pixel_to_latlon(&geo(89.0, 0.0, 0.01, 0.0), 200.0, 0.0).unwrap_err();
        assert!(matches!(err, ArchiveError::LatitudeOutOfRange(_)));
    }
}
