//! Windowed EMD salience and its combination with the edge response.

use super::canny::canny_response;
use super::{check_min_side, LandmarkError, Result, SalienceMap, SalienceParams};
use crate::grid::{Grid, PIXEL_MAX};

fn bin_of(v: f64, bins: usize) -> usize {
    let v = v.clamp(0.0, PIXEL_MAX);
    ((v * bins as f64 / (PIXEL_MAX + 1.0)) as usize).min(bins - 1)
}

/// Unnormalized EMD between the inner- and outer-window intensity
/// histograms centered on every pixel. Windows overrunning the border read
/// edge-replicated pixels.
pub fn emd_salience_raw(image: &Grid, params: &SalienceParams) -> Result<Grid> {
    params.validate()?;
    check_min_side(image, params.outer_window, "the outer window")?;
    let bins = params.histogram_bins;
    let (w, h) = (image.width(), image.height());
    let outer = params.outer_window;
    let inner = params.inner_window;
    let pad = outer / 2;
    let off = (outer - inner) / 2;
    let (pw, ph) = (w + 2 * pad, h + 2 * pad);
    let idx: Vec<u16> = (0..ph)
        .flat_map(|r| (0..pw).map(move |c| (r, c)))
        .map(|(r, c)| {
            let v = image.get_clamped(r as isize - pad as isize, c as isize - pad as isize);
            bin_of(v, bins) as u16
        })
        .collect();
    let at = |r: usize, c: usize| idx[r * pw + c] as usize;

    let n_in = (inner * inner) as i64;
    let n_out = (outer * outer) as i64;
    let mut out = Grid::new(w, h, 0.0);
    let mut h_in = vec![0i64; bins];
    let mut h_out = vec![0i64; bins];
    for r in 0..h {
        h_in.iter_mut().for_each(|v| *v = 0);
        h_out.iter_mut().for_each(|v| *v = 0);
        for dr in 0..outer {
            for dc in 0..outer {
                h_out[at(r + dr, dc)] += 1;
            }
        }
        for dr in 0..inner {
            for dc in 0..inner {
                h_in[at(r + off + dr, off + dc)] += 1;
            }
        }
        for c in 0..w {
            if c > 0 {
                for dr in 0..outer {
                    h_out[at(r + dr, c - 1)] -= 1;
                    h_out[at(r + dr, c - 1 + outer)] += 1;
                }
                for dr in 0..inner {
                    h_in[at(r + off + dr, c - 1 + off)] -= 1;
                    h_in[at(r + off + dr, c - 1 + off + inner)] += 1;
                }
            }
            // Exact integer CDF differences scaled by n_in * n_out.
            let (mut ci, mut co, mut acc) = (0i64, 0i64, 0i64);
            for b in 0..bins {
                ci += h_in[b];
                co += h_out[b];
                acc += (ci * n_out - co * n_in).abs();
            }
            out.set(r, c, acc as f64 / (n_in * n_out) as f64);
        }
    }
    Ok(out)
}

fn normalize_by_max(map: Grid) -> Grid {
    let max = map.max_value();
    if max > 0.0 {
        map.map(|v| v / max)
    } else {
        map.map(|_| 0.0)
    }
}

/// EMD salience normalized by its maximum (an all-zero map stays zero).
pub fn emd_salience(image: &Grid, params: &SalienceParams) -> Result<SalienceMap> {
    Ok(SalienceMap {
        scores: normalize_by_max(emd_salience_raw(image, params)?),
    })
}

/// Convex combination `(w_canny * canny + w_emd * emd) / (w_canny + w_emd)`.
pub fn combine_salience(canny: &Grid, emd: &Grid, params: &SalienceParams) -> Result<SalienceMap> {
    if (canny.width(), canny.height()) != (emd.width(), emd.height()) {
        return Err(LandmarkError::DimensionMismatch(
            (canny.width(), canny.height()),
            (emd.width(), emd.height()),
        ));
    }
    let total = params.w_canny + params.w_emd;
    if !(total > 0.0) {
        return Err(LandmarkError::InvalidParams("filter weights sum to zero".into()));
    }
    let data = canny
        .data()
        .iter()
        .zip(emd.data())
        .map(|(&c, &e)| {
            if params.w_canny == 0.0 {
                e
            } else if params.w_emd == 0.0 {
                c
            } else {
                ((params.w_canny * c + params.w_emd * e) / total).clamp(c.min(e), c.max(e))
            }
        })
        .collect();
    Ok(SalienceMap {
        scores: Grid::from_vec(canny.width(), canny.height(), data).expect("same shape"),
    })
}

/// Full salience map of a single image.
pub fn compute_salience(image: &Grid, params: &SalienceParams) -> Result<SalienceMap> {
    let emd = emd_salience(image, params)?;
    let canny = if params.w_canny > 0.0 {
        canny_response(image, params)?
    } else {
        Grid::new(image.width(), image.height(), 0.0)
    };
    combine_salience(&canny, &emd.scores, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landmarking::emd_1d;

    fn params(inner: usize, outer: usize) -> SalienceParams {
        SalienceParams {
            inner_window: inner,
            outer_window: outer,
            ..SalienceParams::default()
        }
    }

    fn bright_square() -> Grid {
        Grid::from_fn(41, 41, |r, c| {
            if (18..23).contains(&r) && (18..23).contains(&c) {
                220.0
            } else {
                20.0
            }
        })
    }

    #[test]
    fn constant_image_scores_zero() {
        let m = emd_salience(&Grid::new(30, 30, 90.0), &params(5, 15)).unwrap();
        assert!(m.scores.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bright_square_peaks_at_its_center() {
        let m = emd_salience(&bright_square(), &params(5, 15)).unwrap();
        let s = &m.scores;
        assert_eq!(s.get(20, 20), 1.0);
        for r in 0..41 {
            for c in 0..41 {
                if (r, c) != (20, 20) {
                    assert!(s.get(r, c) < 1.0, "({r},{c}) = {}", s.get(r, c));
                }
            }
        }
        assert!(s.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn sliding_histograms_match_direct_emd() {
        let img = Grid::from_fn(23, 19, |r, c| ((r * 53 + c * 29 + r * c) % 256) as f64);
        let p = params(3, 9);
        let raw = emd_salience_raw(&img, &p).unwrap();
        for &(r, c) in &[(0usize, 0usize), (9, 11), (18, 22), (4, 17)] {
            let hist = |size: usize| {
                let mut h = vec![0.0; p.histogram_bins];
                let half = (size / 2) as isize;
                for dr in -half..=half {
                    for dc in -half..=half {
                        let v = img.get_clamped(r as isize + dr, c as isize + dc);
                        h[bin_of(v, p.histogram_bins)] += 1.0;
                    }
                }
                h
            };
            let direct = emd_1d(&hist(3), &hist(9)).unwrap();
            assert!((raw.get(r, c) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn combine_examples() {
        let c = Grid::new(2, 1, 0.2);
        let e = Grid::new(2, 1, 0.6);
        let p = SalienceParams {
            w_canny: 1.0,
            w_emd: 1.0,
            ..SalienceParams::default()
        };
        let m = combine_salience(&c, &e, &p).unwrap();
        assert!((m.scores.get(0, 0) - 0.4).abs() < 1e-15);
        let only_emd = SalienceParams {
            w_canny: 0.0,
            ..p.clone()
        };
        assert_eq!(combine_salience(&c, &e, &only_emd).unwrap().scores, e);
        assert!(matches!(
            combine_salience(&c, &Grid::new(1, 2, 0.0), &p),
            Err(LandmarkError::DimensionMismatch(..))
        ));
    }

    #[test]
    fn outer_window_must_fit() {
        assert!(matches!(
            emd_salience(&Grid::new(10, 30, 0.0), &params(5, 15)),
            Err(LandmarkError::ImageTooSmall { .. })
        ));
    }
}
