//! Connected components of super-threshold salience and tiled strip scanning.

use std::cmp::Ordering;
use std::collections::{BTreeMap, VecDeque};

use rayon::prelude::*;

use super::canny::canny_response;
use super::salience::{combine_salience, emd_salience_raw};
use super::{BBox, Landmark, Result, SalienceMap, SalienceParams};
use crate::grid::Grid;

/// 8-connected labeling of `mask` (row-major, `width * height`). Returns a
/// label per pixel (`0` = background, components numbered from 1 in raster
/// order of their first pixel) and the component count.
pub fn label_components(width: usize, height: usize, mask: &[bool]) -> (Vec<u32>, u32) {
    assert_eq!(mask.len(), width * height);
    let mut labels = vec![0u32; mask.len()];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            let (r, c) = ((p / width) as isize, (p % width) as isize);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= height as isize || nc >= width as isize {
                        continue;
                    }
                    let q = nr as usize * width + nc as usize;
                    if mask[q] && labels[q] == 0 {
                        labels[q] = next;
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    (labels, next)
}

#[derive(Debug, Clone, Copy)]
struct Accum {
    bbox: BBox,
    peak: f64,
    area: usize,
}

impl Accum {
    fn new(r: usize, c: usize, v: f64) -> Self {
        Self {
            bbox: BBox {
                row0: r,
                col0: c,
                row1: r + 1,
                col1: c + 1,
            },
            peak: v,
            area: 1,
        }
    }

    fn add(&mut self, r: usize, c: usize, v: f64) {
        self.bbox.row0 = self.bbox.row0.min(r);
        self.bbox.col0 = self.bbox.col0.min(c);
        self.bbox.row1 = self.bbox.row1.max(r + 1);
        self.bbox.col1 = self.bbox.col1.max(c + 1);
        self.peak = self.peak.max(v);
        self.area += 1;
    }

    fn merge(&mut self, o: &Accum) {
        self.bbox.row0 = self.bbox.row0.min(o.bbox.row0);
        self.bbox.col0 = self.bbox.col0.min(o.bbox.col0);
        self.bbox.row1 = self.bbox.row1.max(o.bbox.row1);
        self.bbox.col1 = self.bbox.col1.max(o.bbox.col1);
        self.peak = self.peak.max(o.peak);
        self.area += o.area;
    }
}

fn finish(accums: impl IntoIterator<Item = Accum>, params: &SalienceParams, source: &str) -> Vec<Landmark> {
    let mut out: Vec<Landmark> = accums
        .into_iter()
        .filter(|a| a.area >= params.min_area)
        .map(|a| Landmark {
            source_image_id: source.to_string(),
            bbox: a.bbox,
            peak_salience: a.peak,
            area_px: a.area,
        })
        .collect();
    out.sort_by(|a, b| {
        b.peak_salience
            .partial_cmp(&a.peak_salience)
            .unwrap_or(Ordering::Equal)
            .then((a.bbox.row0, a.bbox.col0).cmp(&(b.bbox.row0, b.bbox.col0)))
    });
    out
}

/// Landmarks are the 8-connected regions with score >= threshold whose area
/// reaches `min_area`, sorted by descending peak salience.
pub fn extract_landmarks(map: &SalienceMap, params: &SalienceParams, source_image_id: &str) -> Vec<Landmark> {
    let s = &map.scores;
    let (w, h) = (s.width(), s.height());
    let mask: Vec<bool> = s.data().iter().map(|&v| v >= params.salience_threshold).collect();
    let (labels, count) = label_components(w, h, &mask);
    let mut acc: Vec<Option<Accum>> = vec![None; count as usize];
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let (r, c) = (i / w, i % w);
        let v = s.data()[i];
        match &mut acc[l as usize - 1] {
            Some(a) => a.add(r, c, v),
            slot => *slot = Some(Accum::new(r, c, v)),
        }
    }
    finish(acc.into_iter().flatten(), params, source_image_id)
}

/// Tiling used when scanning strips too large for a single window pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileConfig {
    pub tile: usize,
    /// Extra context read around each tile; `None` means the outer window size.
    pub overlap: Option<usize>,
}

impl Default for TileConfig {
    fn default() -> Self {
        Self {
            tile: 1024,
            overlap: None,
        }
    }
}

struct Tile {
    row0: usize,
    col0: usize,
    rows: usize,
    cols: usize,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Scans a large strip tile by tile. Each tile's EMD term is computed with
/// `overlap` pixels of surrounding context, the EMD term is normalized by
/// the strip-wide maximum, components are labeled per tile, and labels that
/// touch across tile seams are merged.
pub fn scan_strip(
    image: &Grid,
    params: &SalienceParams,
    source_image_id: &str,
    tiles: TileConfig,
) -> Result<Vec<Landmark>> {
    params.validate()?;
    super::check_min_side(image, params.outer_window, "the outer window")?;
    let (w, h) = (image.width(), image.height());
    let overlap = tiles.overlap.unwrap_or(params.outer_window);
    let size = tiles.tile.max(1);
    let mut layout = Vec::new();
    for row0 in (0..h).step_by(size) {
        for col0 in (0..w).step_by(size) {
            layout.push(Tile {
                row0,
                col0,
                rows: size.min(h - row0),
                cols: size.min(w - col0),
            });
        }
    }

    // Hysteresis links edges across arbitrary distances, so the edge
    // response is computed once for the whole strip.
    let canny = if params.w_canny > 0.0 {
        canny_response(image, params)?
    } else {
        Grid::new(w, h, 0.0)
    };

    // Stage 1: per-tile raw EMD over the context window.
    let raw: Vec<(Grid, Grid)> = layout
        .par_iter()
        .map(|t| -> Result<(Grid, Grid)> {
            let r0 = t.row0.saturating_sub(overlap);
            let c0 = t.col0.saturating_sub(overlap);
            let r1 = (t.row0 + t.rows + overlap).min(h);
            let c1 = (t.col0 + t.cols + overlap).min(w);
            let window = image.crop(r0, c0, r1 - r0, c1 - c0);
            let emd = emd_salience_raw(&window, params)?;
            let (dr, dc) = (t.row0 - r0, t.col0 - c0);
            Ok((
                emd.crop(dr, dc, t.rows, t.cols),
                canny.crop(t.row0, t.col0, t.rows, t.cols),
            ))
        })
        .collect::<Result<_>>()?;

    let emd_max = raw.iter().map(|(e, _)| e.max_value()).fold(0.0f64, f64::max);
    let maps: Vec<SalienceMap> = raw
        .iter()
        .map(|(emd, canny)| {
            let emd = if emd_max > 0.0 {
                emd.map(|v| v / emd_max)
            } else {
                emd.map(|_| 0.0)
            };
            combine_salience(canny, &emd, params)
        })
        .collect::<Result<_>>()?;

    // Stage 2: label each tile independently.
    let labeled: Vec<(Vec<u32>, Vec<Accum>)> = layout
        .par_iter()
        .zip(&maps)
        .map(|(t, m)| {
            let mask: Vec<bool> = m
                .scores
                .data()
                .iter()
                .map(|&v| v >= params.salience_threshold)
                .collect();
            let (labels, count) = label_components(t.cols, t.rows, &mask);
            let mut acc: Vec<Option<Accum>> = vec![None; count as usize];
            for (i, &l) in labels.iter().enumerate() {
                if l == 0 {
                    continue;
                }
                let (r, c) = (t.row0 + i / t.cols, t.col0 + i % t.cols);
                let v = m.scores.data()[i];
                match &mut acc[l as usize - 1] {
                    Some(a) => a.add(r, c, v),
                    slot => *slot = Some(Accum::new(r, c, v)),
                }
            }
            (labels, acc.into_iter().flatten().collect())
        })
        .collect();

    // Stage 3: serial union-find over seams.
    let mut base = Vec::with_capacity(layout.len());
    let mut total = 0usize;
    for (_, acc) in &labeled {
        base.push(total);
        total += acc.len();
    }
    let mut parent: Vec<usize> = (0..total).collect();
    let tiles_per_row = w.div_ceil(size);
    let global = |ti: usize, r: usize, c: usize| -> Option<usize> {
        let t = &layout[ti];
        let l = labeled[ti].0[(r - t.row0) * t.cols + (c - t.col0)];
        (l > 0).then(|| base[ti] + l as usize - 1)
    };
    let tile_of = |r: usize, c: usize| (r / size) * tiles_per_row + c / size;
    for (ti, t) in layout.iter().enumerate() {
        // Right seam and bottom seam, including diagonal contacts.
        let right = t.col0 + t.cols;
        if right < w {
            for r in t.row0..t.row0 + t.rows {
                let Some(a) = global(ti, r, right - 1) else { continue };
                for nr in r.saturating_sub(1)..=(r + 1).min(h - 1) {
                    if let Some(b) = global(tile_of(nr, right), nr, right) {
                        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
        let bottom = t.row0 + t.rows;
        if bottom < h {
            for c in t.col0..t.col0 + t.cols {
                let Some(a) = global(ti, bottom - 1, c) else { continue };
                for nc in c.saturating_sub(1)..=(c + 1).min(w - 1) {
                    if let Some(b) = global(tile_of(bottom, nc), bottom, nc) {
                        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
    }
    let mut merged: BTreeMap<usize, Accum> = BTreeMap::new();
    for (ti, (_, acc)) in labeled.iter().enumerate() {
        for (k, a) in acc.iter().enumerate() {
            let root = find(&mut parent, base[ti] + k);
            merged.entry(root).and_modify(|m| m.merge(a)).or_insert(*a);
        }
    }
    Ok(finish(merged.into_values(), params, source_image_id))
}
