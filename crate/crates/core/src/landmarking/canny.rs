//! Canny edge detection: Gaussian smoothing, Sobel gradients, non-maximum
//! suppression and hysteresis. Borders use edge replication.

use std::collections::VecDeque;

use super::{check_min_side, Result, SalienceParams};
use crate::grid::Grid;

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

fn convolve_separable(image: &Grid, kernel: &[f64]) -> Grid {
    let r = (kernel.len() / 2) as isize;
    let (w, h) = (image.width(), image.height());
    let horiz = Grid::from_fn(w, h, |row, col| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, k)| k * image.get_clamped(row as isize, col as isize + i as isize - r))
            .sum()
    });
    Grid::from_fn(w, h, |row, col| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, k)| k * horiz.get_clamped(row as isize + i as isize - r, col as isize))
            .sum()
    })
}

fn sobel(image: &Grid) -> (Grid, Grid) {
    let (w, h) = (image.width(), image.height());
    let p = |r: usize, c: usize, dr: isize, dc: isize| image.get_clamped(r as isize + dr, c as isize + dc);
    let gx = Grid::from_fn(w, h, |r, c| {
        (p(r, c, -1, 1) + 2.0 * p(r, c, 0, 1) + p(r, c, 1, 1))
            - (p(r, c, -1, -1) + 2.0 * p(r, c, 0, -1) + p(r, c, 1, -1))
    });
    let gy = Grid::from_fn(w, h, |r, c| {
        (p(r, c, 1, -1) + 2.0 * p(r, c, 1, 0) + p(r, c, 1, 1))
            - (p(r, c, -1, -1) + 2.0 * p(r, c, -1, 0) + p(r, c, -1, 1))
    });
    (gx, gy)
}

/// Binary Canny edge map (values 0 or 1).
pub fn canny_edges(image: &Grid, params: &SalienceParams) -> Result<Grid> {
    check_min_side(image, 6, "canny")?;
    let (w, h) = (image.width(), image.height());
    // Shift to a zero minimum so a constant offset leaves the result bit-identical.
    let lo = image.min_value();
    let shifted = image.map(|v| v - lo);
    let smooth = convolve_separable(&shifted, &gaussian_kernel(params.canny_sigma));
    let (gx, gy) = sobel(&smooth);
    let mag = Grid::from_fn(w, h, |r, c| gx.get(r, c).hypot(gy.get(r, c)));

    // Non-maximum suppression; strict against the trailing neighbor and
    // non-strict against the leading one so plateaus keep a single pixel.
    let tan22 = std::f64::consts::FRAC_PI_8.tan();
    let mut thin = Grid::new(w, h, 0.0);
    for r in 0..h {
        for c in 0..w {
            let m = mag.get(r, c);
            if m <= 0.0 {
                continue;
            }
            let (x, y) = (gx.get(r, c), gy.get(r, c));
            let (ax, ay) = (x.abs(), y.abs());
            let (dr, dc): (isize, isize) = if ay <= ax * tan22 {
                (0, 1)
            } else if ax <= ay * tan22 {
                (1, 0)
            } else if x * y > 0.0 {
                (1, 1)
            } else {
                (1, -1)
            };
            let (ri, ci) = (r as isize, c as isize);
            let behind = mag.get_clamped(ri - dr, ci - dc);
            let ahead = mag.get_clamped(ri + dr, ci + dc);
            if m > behind && m >= ahead {
                thin.set(r, c, m);
            }
        }
    }

    let mut edges = Grid::new(w, h, 0.0);
    let mut queue = VecDeque::new();
    for r in 0..h {
        for c in 0..w {
            if thin.get(r, c) >= params.canny_high {
                edges.set(r, c, 1.0);
                queue.push_back((r, c));
            }
        }
    }
    while let Some((r, c)) = queue.pop_front() {
        for dr in -1isize..=1 {
            for dc in -1isize..=1 {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                    continue;
                }
                let (nr, nc) = (nr as usize, nc as usize);
                if edges.get(nr, nc) == 0.0 && thin.get(nr, nc) >= params.canny_low {
                    edges.set(nr, nc, 1.0);
                    queue.push_back((nr, nc));
                }
            }
        }
    }
    Ok(edges)
}

/// Graded edge response: the binary Canny map smoothed by a 3x3 box filter.
pub fn canny_response(image: &Grid, params: &SalienceParams) -> Result<Grid> {
    let edges = canny_edges(image, params)?;
    Ok(Grid::from_fn(edges.width(), edges.height(), |r, c| {
        let mut s = 0.0;
        for dr in -1..=1 {
            for dc in -1..=1 {
                s += edges.get_clamped(r as isize + dr, c as isize + dc);
            }
        }
        s / 9.0
    }))
}
