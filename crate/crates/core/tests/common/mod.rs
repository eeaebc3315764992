//! Independent reference implementations used as test oracles.
#![allow(dead_code, clippy::needless_range_loop)]

use marstag::archive::{QueryFilter, TagRecord};
use marstag::datasets::ClassId;

const EPS: f64 = 1e-12;

/// Minimizes `c . x` subject to `A x = b`, `x >= 0`, `b >= 0` with a dense
/// two-phase tableau simplex (Bland's rule). Returns `None` if infeasible.
pub fn simplex_min(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Option<f64> {
    let m = a.len();
    let n = c.len();
    let width = n + m + 1;
    let mut tab: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut row = a[i].clone();
            row.extend((0..m).map(|k| if k == i { 1.0 } else { 0.0 }));
            row.push(b[i]);
            row
        })
        .collect();
    let mut basis: Vec<usize> = (n..n + m).collect();

    fn pivot(tab: &mut [Vec<f64>], basis: &mut [usize], r: usize, col: usize) {
        let p = tab[r][col];
        for v in tab[r].iter_mut() {
            *v /= p;
        }
        let prow = tab[r].clone();
        for (i, row) in tab.iter_mut().enumerate() {
            if i != r {
                let f = row[col];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&prow) {
                        *v -= f * pv;
                    }
                }
            }
        }
        basis[r] = col;
    }

    fn run(tab: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], allowed: usize) {
        let width = tab[0].len();
        loop {
            let reduced = |j: usize, tab: &[Vec<f64>], basis: &[usize]| {
                cost[j] - tab.iter().zip(basis).map(|(row, &bi)| cost[bi] * row[j]).sum::<f64>()
            };
            let Some(col) = (0..allowed).find(|&j| reduced(j, tab, basis) < -1e-11) else {
                return;
            };
            let mut best: Option<(f64, usize, usize)> = None;
            for (i, row) in tab.iter().enumerate() {
                if row[col] > EPS {
                    let ratio = row[width - 1] / row[col];
                    let better = match best {
                        None => true,
                        Some((br, _, bb)) => ratio < br - EPS || (ratio <= br + EPS && basis[i] < bb),
                    };
                    if better {
                        best = Some((ratio, i, basis[i]));
                    }
                }
            }
            let (_, r, _) = best.expect("bounded problem");
            pivot(tab, basis, r, col);
        }
    }

    let phase1: Vec<f64> = (0..n + m).map(|j| if j < n { 0.0 } else { 1.0 }).collect();
    run(&mut tab, &mut basis, &phase1, n + m);
    let infeas: f64 = tab
        .iter()
        .zip(&basis)
        .filter(|(_, &bi)| bi >= n)
        .map(|(r, _)| r[width - 1])
        .sum();
    if infeas > 1e-9 {
        return None;
    }
    // Drive zero-valued artificials out of the basis; drop redundant rows.
    let mut r = 0;
    while r < tab.len() {
        if basis[r] >= n {
            if let Some(col) = (0..n).find(|&j| tab[r][j].abs() > 1e-9) {
                pivot(&mut tab, &mut basis, r, col);
            } else {
                tab.remove(r);
                basis.remove(r);
                continue;
            }
        }
        r += 1;
    }
    let phase2: Vec<f64> = (0..n + m).map(|j| if j < n { c[j] } else { 0.0 }).collect();
    run(&mut tab, &mut basis, &phase2, n);
    Some(
        tab.iter()
            .zip(&basis)
            .map(|(row, &bi)| phase2[bi] * row[width - 1])
            .sum(),
    )
}

/// Optimal transport cost between unit-mass histograms with ground
/// distance `|i - j|`, solved as a dense LP.
pub fn transport_lp(a: &[f64], b: &[f64]) -> f64 {
    let k = a.len();
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..k {
        rows.push((0..k * k).map(|v| if v / k == i { 1.0 } else { 0.0 }).collect());
        rhs.push(a[i] / sa);
    }
    for j in 0..k {
        rows.push((0..k * k).map(|v| if v % k == j { 1.0 } else { 0.0 }).collect());
        rhs.push(b[j] / sb);
    }
    let cost: Vec<f64> = (0..k * k).map(|v| (v / k).abs_diff(v % k) as f64).collect();
    simplex_min(&rows, &rhs, &cost).expect("balanced transport is feasible")
}

/// ECE recomputed item by item: each bin rescans every row.
pub fn ece_brute_force(probs: &[Vec<f64>], labels: &[usize], m: usize) -> f64 {
    let n = probs.len() as f64;
    let mut total = 0.0;
    for bin in 0..m {
        let lo = bin as f64 / m as f64;
        let hi = (bin + 1) as f64 / m as f64;
        let (mut count, mut conf_sum, mut hits) = (0usize, 0.0, 0usize);
        for (row, &y) in probs.iter().zip(labels) {
            let mut pred = 0;
            for k in 1..row.len() {
                if row[k] > row[pred] {
                    pred = k;
                }
            }
            let conf = row[pred];
            let inside = if bin == 0 { conf <= hi } else { conf > lo && conf <= hi };
            if inside {
                count += 1;
                conf_sum += conf;
                hits += usize::from(pred == y);
            }
        }
        if count > 0 {
            let c = count as f64;
            total += c / n * (hits as f64 / c - conf_sum / c).abs();
        }
    }
    total
}

/// Query answered by scanning every tag.
pub fn query_linear_scan(tags: &[TagRecord], class: ClassId, filter: &QueryFilter) -> Vec<String> {
    let mut best: Vec<&TagRecord> = Vec::new();
    for t in tags.iter().filter(|t| t.class == class) {
        match best.iter_mut().find(|b| b.item_id == t.item_id) {
            Some(b) if t.confidence > b.confidence => *b = t,
            Some(_) => {}
            None => best.push(t),
        }
    }
    let mut hits: Vec<&TagRecord> = best
        .into_iter()
        .filter(|t| t.confidence >= filter.min_conf)
        .filter(|t| filter.instrument.is_none_or(|i| i == t.instrument))
        .filter(|t| match filter.lat_range {
            None => true,
            Some((lo, hi)) => matches!(t.lat, Some(lat) if lo <= lat && lat <= hi),
        })
        .collect();
    hits.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap()
            .then(a.item_id.cmp(&b.item_id))
    });
    hits.into_iter().map(|t| t.item_id.clone()).collect()
}
