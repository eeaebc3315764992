//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//! Runs without the libtest harness so the lines always reach stdout.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use marstag::archive::{
    build_index, class_set, polar_filter, query, tag_archive, ArchiveItem, GeoRef, ItemLocation, QueryFilter, QueryLog,
    TagRecord, DEFAULT_POLAR_CUTOFF, DEFAULT_TAU,
};
use marstag::calibration::{
    abstention_report, accuracy, apply_calibrator, apply_calibrator_batch, ece, fit_calibrator, Calibrator, Method,
    OptConfig,
};
use marstag::datasets::{
    augment, augment_seed, expand_dataset, split_grouped, AugmentationSpec, ClassCatalog, ClassId, GroupKey,
    Instrument, SampleRecord, Split, SplitAssignment, SplitFractions,
};
use marstag::landmarking::{
    compute_salience, crop_landmark, crop_region, emd_1d, extract_landmarks, ga_optimize, scan_strip, BBox, GaConfig,
    LabeledImage, Landmark, ParamBounds, SalienceMap, SalienceParams, TileConfig,
};
use marstag::models::{
    multilabel_logit_grad, multilabel_loss, sigmoid, train_softmax, ChainModel, HybridClassifier, MultiLabelHead,
    SgdConfig, SoftmaxHead,
};
use marstag::Grid;
use marstag_cli::{cmd_run, Overrides, PipelineConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

/// Log-sum-exp softmax written independently of the library.
fn oracle_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| (v - lse).exp()).collect()
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn c1_identities() -> Outcome {
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let k = r.random_range(2..=24);
        let z: Vec<f64> = (0..k).map(|_| r.random_range(-15.0..15.0)).collect();
        let want = oracle_softmax(&z);
        let t = apply_calibrator(&Calibrator::Temperature { t: 1.0 }, &z).map_err(|e| e.to_string())?;
        let m = apply_calibrator(&Calibrator::identity(Method::Matrix, k), &z).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(&t, &want)).max(max_abs_diff(&m, &want));
    }
    ensure!(worst <= 1e-12, "max deviation {worst:e} > 1e-12");
    Ok(format!("max deviation {worst:.1e}"))
}

fn c2_argmax_invariance() -> Outcome {
    let mut r = rng(2);
    for i in 0..10_000 {
        let k = r.random_range(2..=24);
        let z: Vec<f64> = (0..k).map(|_| r.random_range(-10.0..10.0)).collect();
        let t = (r.random_range(-3.0..3.0f64)).exp();
        let p = apply_calibrator(&Calibrator::Temperature { t }, &z).map_err(|e| e.to_string())?;
        ensure!(argmax(&p) == argmax(&z), "pair {i}: T = {t} moved the argmax");
    }
    Ok("10000 pairs".into())
}

fn c3_ece_oracle() -> Outcome {
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = r.random_range(2..10);
        let n = r.random_range(1..200);
        let m = r.random_range(1..25);
        let probs: Vec<Vec<f64>> = (0..n)
            .map(|_| oracle_softmax(&(0..k).map(|_| 3.0 * normal(&mut r)).collect::<Vec<_>>()))
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let got = ece(&probs, &labels, m).map_err(|e| e.to_string())?;
        worst = worst.max((got - common::ece_brute_force(&probs, &labels, m)).abs());
    }
    ensure!(worst <= 1e-12, "max deviation {worst:e}");
    // Confidences 0.6 (wrong) and 0.9 (right) in two bins.
    let hand = ece(&[vec![0.6, 0.4], vec![0.1, 0.9]], &[1, 1], 2).map_err(|e| e.to_string())?;
    ensure!((hand - 0.25).abs() <= 1e-12, "hand case gave {hand}");
    Ok(format!("max deviation {worst:.1e}, hand case {hand}"))
}

fn draw(r: &mut ChaCha8Rng, p: &[f64]) -> usize {
    let u: f64 = r.random();
    let mut acc = 0.0;
    for (i, v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

fn c4_temperature_recovery() -> Outcome {
    let mut r = rng(4);
    let (mut logits, mut labels) = (Vec::new(), Vec::new());
    for _ in 0..20_000 {
        let z0: Vec<f64> = (0..5).map(|_| 2.0 * normal(&mut r)).collect();
        labels.push(draw(&mut r, &oracle_softmax(&z0)));
        logits.push(z0.iter().map(|v| 3.0 * v).collect::<Vec<f64>>());
    }
    let fit =
        fit_calibrator(Method::Temperature, &logits, &labels, &OptConfig::default()).map_err(|e| e.to_string())?;
    let Calibrator::Temperature { t } = fit.calibrator else {
        return Err("not a temperature calibrator".into());
    };
    ensure!((2.85..=3.15).contains(&t), "T = {t}");
    Ok(format!("T = {t:.4}"))
}

/// Overlapping Gaussian classes in many dimensions; few training points.
fn noisy_blobs(r: &mut ChaCha8Rng, means: &[Vec<f64>], n: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for i in 0..n {
        let c = i % means.len();
        x.push(means[c].iter().map(|m| m + normal(r)).collect());
        y.push(c);
    }
    (x, y)
}

fn c5_trend() -> Outcome {
    let (k, d) = (4, 24);
    let mut r = rng(5);
    let means: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..d).map(|_| 0.45 * normal(&mut r)).collect())
        .collect();
    let (xt, yt) = noisy_blobs(&mut r, &means, 160);
    let (xv, yv) = noisy_blobs(&mut r, &means, 4000);
    let cfg = SgdConfig {
        learning_rate: 0.5,
        epochs: 400,
        batch_size: 16,
        seed: 5,
        l2: 0.0,
    };
    let head = train_softmax(&xt, &yt, (0..k).map(ClassId).collect(), &cfg).map_err(|e| e.to_string())?;
    let logits: Vec<Vec<f64>> = xv.iter().map(|x| head.predict_logits(x).unwrap()).collect();
    let plain: Vec<Vec<f64>> = logits.iter().map(|z| oracle_softmax(z)).collect();
    let ece0 = ece(&plain, &yv, 10).map_err(|e| e.to_string())?;
    let acc0 = accuracy(&plain, &yv).map_err(|e| e.to_string())?;
    let abst0 = abstention_report(&plain, &yv, 0.9)
        .map_err(|e| e.to_string())?
        .abstention_rate;
    let mut parts = vec![format!("uncalibrated ECE {ece0:.4} acc {acc0:.3} abstain {abst0:.3}")];
    for method in Method::ALL {
        let fit = fit_calibrator(method, &logits, &yv, &OptConfig::default()).map_err(|e| e.to_string())?;
        let probs = apply_calibrator_batch(&fit.calibrator, &logits).map_err(|e| e.to_string())?;
        let e1 = ece(&probs, &yv, 10).map_err(|e| e.to_string())?;
        let rep = abstention_report(&probs, &yv, 0.9).map_err(|e| e.to_string())?;
        ensure!(
            e1 <= 0.5 * ece0,
            "{method}: ECE {ece0:.4} -> {e1:.4} is not a 50% reduction"
        );
        ensure!(
            rep.accuracy_defined && rep.accuracy_at_tau > acc0,
            "{method}: acc@0.9 {:.3} does not exceed plain accuracy {acc0:.3}",
            rep.accuracy_at_tau
        );
        ensure!(
            rep.abstention_rate > abst0,
            "{method}: abstention {:.3} did not rise above {abst0:.3}",
            rep.abstention_rate
        );
        parts.push(format!(
            "{method} ECE {e1:.4} acc@0.9 {:.3} abstain {:.3}",
            rep.accuracy_at_tau, rep.abstention_rate
        ));
    }
    Ok(parts.join("; "))
}

fn ml_loss_of_logits(y: &[Vec<f64>], z: &[Vec<f64>]) -> f64 {
    let p: Vec<Vec<f64>> = z.iter().map(|row| row.iter().map(|&v| sigmoid(v)).collect()).collect();
    multilabel_loss(y, &p).unwrap()
}

fn c6_multilabel_loss() -> Outcome {
    let v = multilabel_loss(&[vec![1.0, 0.0]], &[vec![0.5, 0.5]]).map_err(|e| e.to_string())?;
    ensure!((v - std::f64::consts::LN_2).abs() <= 1e-9, "loss {v} is not ln 2");
    let mut r = rng(6);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (n, classes) = (r.random_range(1..5), r.random_range(1..7));
        let y: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..classes)
                    .map(|_| if r.random_bool(0.5) { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let z: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..classes).map(|_| r.random_range(-6.0..6.0)).collect())
            .collect();
        let g = multilabel_logit_grad(&y, &z).map_err(|e| e.to_string())?;
        for i in 0..n {
            for j in 0..classes {
                let (mut up, mut dn) = (z.clone(), z.clone());
                up[i][j] += h;
                dn[i][j] -= h;
                let fd = (ml_loss_of_logits(&y, &up) - ml_loss_of_logits(&y, &dn)) / (2.0 * h);
                worst = worst.max((fd - g[i][j]).abs());
            }
        }
    }
    ensure!(worst <= 1e-6, "gradient deviates by {worst:e}");
    Ok(format!("loss {v:.12}, gradient deviation {worst:.1e}"))
}

fn c7_chain_reduction() -> Outcome {
    let mut r = rng(7);
    let (fd, sites) = (12, vec!["A".to_string(), "B".to_string(), "<unknown>".to_string()]);
    let classes: Vec<ClassId> = (0..9).map(ClassId).collect();
    let mut head = MultiLabelHead::zeros(classes, fd + sites.len());
    for w in &mut head.weights {
        w.iter_mut().for_each(|v| *v = normal(&mut r));
    }
    head.bias.iter_mut().for_each(|b| *b = normal(&mut r));
    let chain = ChainModel::from_binary_relevance(&head, fd, sites.clone()).map_err(|e| e.to_string())?;
    for (t, w) in chain.weights.iter().enumerate() {
        ensure!(
            w[fd..fd + t].iter().all(|&v| v == 0.0),
            "step {t} has nonzero appended weights"
        );
    }
    let site_names = [Some("A"), Some("B"), Some("Z"), None];
    for i in 0..1000 {
        let x: Vec<f64> = (0..fd).map(|_| 2.0 * normal(&mut r)).collect();
        let site = site_names[i % site_names.len()];
        let mut full = x.clone();
        full.extend(chain.site_onehot(site).map_err(|e| e.to_string())?);
        let br = head.predict_proba(&full).map_err(|e| e.to_string())?;
        let ch = chain.predict_chain(&x, site).map_err(|e| e.to_string())?;
        ensure!(
            br.iter().map(|v| v.to_bits()).eq(ch.iter().map(|v| v.to_bits())),
            "input {i} differs"
        );
    }
    Ok("1000 inputs bitwise equal".into())
}

fn unit_hist(r: &mut ChaCha8Rng) -> Vec<f64> {
    let h: Vec<f64> = (0..8).map(|_| r.random_range(0.0..1.0)).collect();
    let s: f64 = h.iter().sum();
    h.into_iter().map(|v| v / s).collect()
}

fn c8_emd() -> Outcome {
    let mut r = rng(8);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let (a, b) = (unit_hist(&mut r), unit_hist(&mut r));
        let got = emd_1d(&a, &b).map_err(|e| e.to_string())?;
        worst = worst.max((got - common::transport_lp(&a, &b)).abs());
    }
    ensure!(worst <= 1e-9, "LP deviation {worst:e}");
    for i in 0..500 {
        let (a, b, c) = (unit_hist(&mut r), unit_hist(&mut r), unit_hist(&mut r));
        let ab = emd_1d(&a, &b).unwrap();
        ensure!(ab >= 0.0, "triple {i}: negative distance");
        ensure!(emd_1d(&a, &a).unwrap().abs() <= 1e-12, "triple {i}: d(a, a) != 0");
        ensure!((ab - emd_1d(&b, &a).unwrap()).abs() <= 1e-12, "triple {i}: asymmetric");
        ensure!(
            ab <= emd_1d(&a, &c).unwrap() + emd_1d(&c, &b).unwrap() + 1e-12,
            "triple {i}: triangle inequality"
        );
    }
    Ok(format!("LP deviation {worst:.1e}; axioms hold on 500 triples"))
}

fn textured(seed: u64, w: usize, h: usize) -> Grid {
    let mut r = rng(seed);
    let mut g = Grid::from_fn(w, h, |_, _| r.random_range(0.0..255.0));
    for (cr, cc) in [(10usize, 12usize), (28, 30)] {
        for row in cr - 4..(cr + 4).min(h) {
            for col in cc - 4..(cc + 4).min(w) {
                g.set(row, col, 250.0);
            }
        }
    }
    g
}

/// Tight bboxes of 8-connected components at or above the threshold,
/// dropping components smaller than the minimum area.
fn oracle_components(scores: &Grid, p: &SalienceParams) -> Vec<BBox> {
    let (w, h) = (scores.width(), scores.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for start in 0..w * h {
        if seen[start] || scores.data()[start] < p.salience_threshold {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let (mut area, mut b) = (
            0,
            BBox {
                row0: h,
                col0: w,
                row1: 0,
                col1: 0,
            },
        );
        while let Some(i) = stack.pop() {
            let (r, c) = (i / w, i % w);
            area += 1;
            b.row0 = b.row0.min(r);
            b.col0 = b.col0.min(c);
            b.row1 = b.row1.max(r + 1);
            b.col1 = b.col1.max(c + 1);
            for nr in r.saturating_sub(1)..=(r + 1).min(h - 1) {
                for nc in c.saturating_sub(1)..=(c + 1).min(w - 1) {
                    let j = nr * w + nc;
                    if !seen[j] && scores.data()[j] >= p.salience_threshold {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if area >= p.min_area {
            out.push(b);
        }
    }
    out
}

fn c9_landmarks() -> Outcome {
    // Two bright disks on a dark, faintly noisy strip.
    let blobs = [(40.0, 60.0, 9.0), (90.0, 230.0, 11.0)];
    let mut r = rng(9);
    let strip = Grid::from_fn(320, 140, |row, col| {
        let inside = blobs
            .iter()
            .any(|&(br, bc, rad)| ((row as f64 - br).powi(2) + (col as f64 - bc).powi(2)).sqrt() <= rad);
        let base = if inside { 220.0 } else { 40.0 };
        base + r.random_range(-3.0..3.0)
    });
    let params = SalienceParams::default();
    let found = scan_strip(
        &strip,
        &params,
        "strip",
        TileConfig {
            tile: 128,
            overlap: None,
        },
    )
    .map_err(|e| e.to_string())?;
    ensure!(found.len() == 2, "expected 2 landmarks, found {}", found.len());
    let mut want = oracle_components(
        &compute_salience(&strip, &params).map_err(|e| e.to_string())?.scores,
        &params,
    );
    let mut got: Vec<BBox> = found.iter().map(|l| l.bbox).collect();
    want.sort_by_key(|b| (b.row0, b.col0));
    got.sort_by_key(|b| (b.row0, b.col0));
    ensure!(got == want, "bboxes {got:?}, flood fill gives {want:?}");
    for (b, &(br, bc, rad)) in got.iter().zip(&blobs) {
        let (cr, cc) = b.center();
        ensure!(
            (cr - br).abs() <= 2.0 && (cc - bc).abs() <= 2.0,
            "bbox {b:?} is off the blob at ({br}, {bc})"
        );
        let inside = |lo: usize, hi: usize, c: f64| lo as f64 >= c - rad - 1.0 && hi as f64 <= c + rad + 2.0;
        ensure!(
            inside(b.row0, b.row1, br) && inside(b.col0, b.col1, bc),
            "bbox {b:?} leaves the blob"
        );
    }

    // Hand-built map: two disjoint 2x2 blobs.
    let mut scores = Grid::new(10, 10, 0.0);
    for (r0, c0) in [(1, 1), (6, 6)] {
        for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            scores.set(r0 + dr, c0 + dc, 0.9);
        }
    }
    let small = SalienceParams {
        min_area: 1,
        ..SalienceParams::default()
    };
    let mut hand: Vec<BBox> = extract_landmarks(&SalienceMap { scores }, &small, "map")
        .iter()
        .map(|l| l.bbox)
        .collect();
    hand.sort_by_key(|b| (b.row0, b.col0));
    ensure!(
        hand == [
            BBox {
                row0: 1,
                col0: 1,
                row1: 3,
                col1: 3
            },
            BBox {
                row0: 6,
                col0: 6,
                row1: 8,
                col1: 8
            }
        ],
        "hand-built map gave {hand:?}"
    );

    let bbox = BBox {
        row0: 100,
        col0: 120,
        row1: 140,
        col1: 160,
    };
    let region = crop_region(400, 400, &bbox, 30);
    ensure!((region.height, region.width) == (100, 100), "region {region:?}");
    let lm = Landmark {
        source_image_id: "s".into(),
        bbox,
        peak_salience: 1.0,
        area_px: 1600,
    };
    let crop = crop_landmark(&Grid::new(400, 400, 7.0), &lm, 30, 227);
    ensure!(
        (crop.width(), crop.height()) == (227, 227),
        "crop is {}x{}",
        crop.width(),
        crop.height()
    );

    let base = SalienceParams {
        inner_window: 3,
        outer_window: 9,
        w_canny: 0.0,
        w_emd: 1.0,
        ..SalienceParams::default()
    };
    let labeled = (0..2)
        .map(|s| {
            let img = textured(s, 40, 40);
            let map = compute_salience(&img, &base).unwrap();
            LabeledImage::new(img, map.scores.data().iter().map(|&v| v >= 0.5).collect()).unwrap()
        })
        .collect::<Vec<_>>();
    let bounds = ParamBounds {
        inner_window: (3, 3),
        outer_window: (9, 9),
        w_canny: (0.0, 0.0),
        w_emd: (1.0, 1.0),
        salience_threshold: (0.0, 1.0),
        base,
    };
    let ga = ga_optimize(&labeled, &bounds, &GaConfig::default()).map_err(|e| e.to_string())?;
    let th = ga.params.salience_threshold;
    ensure!((th - 0.5).abs() <= 0.05, "GA threshold {th}");
    let boxes: Vec<String> = got
        .iter()
        .map(|b| format!("[{}..{}, {}..{}]", b.row0, b.row1, b.col0, b.col1))
        .collect();
    Ok(format!(
        "bboxes {}; crop 100x100 -> 227x227; GA threshold {th:.4}",
        boxes.join(" ")
    ))
}

fn c10_split_and_augmentation() -> Outcome {
    let mut r = rng(10);
    let records: Vec<SampleRecord> = (0..900)
        .map(|i| {
            let mut rec = SampleRecord::new(format!("s{i}"), Instrument::MastcamLeft);
            rec.source_image_id = format!("img{}", r.random_range(0..150));
            rec.sol = Some(r.random_range(0..400));
            rec.site_id = format!("site{}", r.random_range(0..40));
            rec
        })
        .collect();
    let fractions = SplitFractions::new(0.6, 0.2, 0.2).map_err(|e| e.to_string())?;
    for seed in 0..100 {
        for key in [GroupKey::SourceImage, GroupKey::SolRange, GroupKey::Site] {
            let split = split_grouped(&records, key, fractions, seed).map_err(|e| e.to_string())?;
            let mut seen: BTreeMap<String, Split> = BTreeMap::new();
            for rec in &records {
                let s = split.get(&rec.sample_id).ok_or("record missing from split")?;
                let g = key.value_of(rec).unwrap();
                if let Some(prev) = seen.insert(g.clone(), s) {
                    ensure!(prev == s, "seed {seed}, {key}: group {g} spans {prev:?} and {s:?}");
                }
            }
        }
    }

    let mer: Vec<SampleRecord> = (0..1806)
        .map(|i| SampleRecord::new(format!("m{i}"), Instrument::PancamL))
        .collect();
    let assignment = SplitAssignment::from_entries(
        mer.iter().map(|m| (m.sample_id.clone(), Split::Train)).collect(),
        fractions,
        GroupKey::SourceImage,
    );
    let spec = AugmentationSpec::mer();
    let listed = expand_dataset(&mer, &assignment, &[Split::Train], |_| &spec).len();
    ensure!(listed == 54_180, "expanded to {listed} images");
    let source = Grid::from_fn(32, 32, |row, col| ((row * 7 + col * 5) % 256) as f64);
    let mut produced = 0;
    for m in &mer {
        produced += 1 + augment(&source, &spec, augment_seed(3, &m.sample_id, 0))
            .map_err(|e| e.to_string())?
            .len();
    }
    ensure!(produced == 54_180, "materialized {produced} images");
    Ok("no leakage over 100 seeds x 3 group keys; 1806 -> 54180".into())
}

fn random_head(r: &mut ChaCha8Rng, classes: Vec<ClassId>, dim: usize, scale: f64) -> SoftmaxHead {
    let mut h = SoftmaxHead::zeros(classes, dim);
    for w in &mut h.weights {
        w.iter_mut().for_each(|v| *v = scale * normal(r));
    }
    h
}

fn c11_deployment() -> Outcome {
    let cat = ClassCatalog::hirise();
    let when = Utc.with_ymd_and_hms(2021, 6, 1, 0, 0, 0).unwrap();
    let other = cat.id_of("Other").unwrap();
    let mut r = rng(11);
    let mut head = random_head(&mut r, cat.ids().collect(), 6, 2.5);
    head.bias[other.0] = 1.5;
    let cal = Calibrator::Temperature { t: 1.3 };
    let items: Vec<ArchiveItem> = (0..10_000)
        .map(|i| ArchiveItem {
            item_id: format!("a{i:05}"),
            instrument: Instrument::Hirise,
            features: (0..6).map(|_| normal(&mut r)).collect(),
            location: None,
        })
        .collect();
    let out = tag_archive(&items, &head, &cal, DEFAULT_TAU, &cat, when).map_err(|e| e.to_string())?;
    let index = build_index(&out.tags);
    for (class, postings) in &index.postings {
        ensure!(*class != other, "Other entered the index");
        ensure!(
            postings.iter().all(|p| p.confidence >= 0.9),
            "posting below 0.9 for {class}"
        );
    }
    let (mut expected, mut other_confident) = (BTreeSet::new(), 0);
    for it in &items {
        let z: Vec<f64> = head
            .predict_logits(&it.features)
            .unwrap()
            .iter()
            .map(|v| v / 1.3)
            .collect();
        let p = oracle_softmax(&z);
        let k = argmax(&p);
        if p[k] >= 0.9 {
            if head.classes[k] == other {
                other_confident += 1;
            } else {
                expected.insert(it.item_id.clone());
            }
        }
    }
    let tagged: BTreeSet<String> = out.tags.iter().map(|t| t.item_id.clone()).collect();
    ensure!(
        tagged == expected,
        "tagged {} items, oracle expects {}",
        tagged.len(),
        expected.len()
    );
    ensure!(
        other_confident > 0,
        "fixture never produced a confident Other prediction"
    );

    // Polar-only classes north of the cutoff are dropped.
    let polar = class_set(&cat, &["Spider", "Swiss cheese"]).map_err(|e| e.to_string())?;
    let mut placed = Vec::new();
    for (i, (name, lat0)) in [
        ("Spider", -30.0),
        ("Spider", -80.0),
        ("Swiss cheese", -30.0),
        ("Swiss cheese", -80.0),
        ("Crater", -30.0),
    ]
    .into_iter()
    .enumerate()
    {
        let class = cat.id_of(name).unwrap();
        let mut h = SoftmaxHead::zeros(cat.ids().collect(), 1);
        h.bias[class.0] = 12.0;
        let item = ArchiveItem {
            item_id: format!("p{i}"),
            instrument: Instrument::Hirise,
            features: vec![0.0],
            location: Some(ItemLocation {
                georef: GeoRef {
                    lat0,
                    lon0: 10.0,
                    dlat_per_row: -0.001,
                    dlon_per_col: 0.001,
                },
                row: 0.0,
                col: 0.0,
            }),
        };
        placed.extend(
            tag_archive(
                &[item],
                &h,
                &Calibrator::Temperature { t: 1.0 },
                DEFAULT_TAU,
                &cat,
                when,
            )
            .unwrap()
            .tags,
        );
    }
    ensure!(placed.len() == 5, "polar fixture tagged {} of 5 items", placed.len());
    let kept: Vec<String> = polar_filter(&placed, &polar, DEFAULT_POLAR_CUTOFF, &cat)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|t| t.item_id)
        .collect();
    ensure!(kept == ["p1", "p3", "p4"], "kept {kept:?}");

    // Index queries against a linear scan.
    let insts = [Instrument::Hirise, Instrument::Mahli, Instrument::PancamL];
    let tags: Vec<TagRecord> = (0..10_000)
        .map(|_| TagRecord {
            item_id: format!("item{}", r.random_range(0..4000)),
            class: ClassId(r.random_range(0..cat.len())),
            confidence: (r.random_range(0.9..1.0) * 1e4f64).round() / 1e4,
            lat: r.random_bool(0.9).then(|| r.random_range(-90.0..90.0)),
            lon: Some(r.random_range(-180.0..180.0)),
            instrument: insts[r.random_range(0..3)],
            tagged_at: when,
        })
        .collect();
    let index = build_index(&tags);
    let mut log = QueryLog::default();
    for q in 0..1000 {
        let class = ClassId(r.random_range(0..cat.len()));
        let filter = QueryFilter {
            min_conf: r.random_range(0.85..1.0),
            instrument: r.random_bool(0.5).then(|| insts[r.random_range(0..3)]),
            lat_range: r.random_bool(0.5).then(|| {
                let lo = r.random_range(-90.0..60.0);
                (lo, lo + r.random_range(0.0..30.0))
            }),
        };
        let got = query(&index, &cat, class, &filter, &mut log, when).map_err(|e| e.to_string())?;
        ensure!(
            got == common::query_linear_scan(&tags, class, &filter),
            "query {q} differs from the scan"
        );
    }
    Ok(format!(
        "{} tags, {} confident Other dropped; polar rule ok; 1000 queries match",
        out.tags.len(),
        other_confident
    ))
}

fn c12_hybrid() -> Outcome {
    let mut r = rng(12);
    let v2_classes: Vec<ClassId> = (0..19).map(ClassId).collect();
    let v1_classes: Vec<ClassId> = (19..36).map(ClassId).collect();
    let trigger = ClassId(18);
    let mut v2 = random_head(&mut r, v2_classes, 5, 1.0);
    v2.bias[18] = 2.0;
    let v1 = random_head(&mut r, v1_classes.clone(), 5, 1.0);
    let hybrid = HybridClassifier::new(v2.clone(), v1.clone(), trigger).map_err(|e| e.to_string())?;
    let reachable = hybrid.reachable_classes().len();
    ensure!(reachable == 35, "{reachable} reachable classes");
    let mut triggered = 0;
    for i in 0..2000 {
        let x: Vec<f64> = (0..5).map(|_| normal(&mut r)).collect();
        let out = hybrid.classify(&x).map_err(|e| e.to_string())?;
        let top2 = v2.classes[argmax(&oracle_softmax(&v2.predict_logits(&x).unwrap()))];
        if top2 == trigger {
            triggered += 1;
            let want = v1.classes[argmax(&oracle_softmax(&v1.predict_logits(&x).unwrap()))];
            ensure!(
                out.used_v1 && out.class == want,
                "input {i}: trigger input did not return the v1 output"
            );
        } else {
            ensure!(
                !out.used_v1 && out.class == top2,
                "input {i}: non-trigger input changed"
            );
        }
    }
    ensure!(triggered >= 100, "only {triggered} trigger inputs");
    Ok(format!("35 reachable classes; {triggered} of 2000 inputs routed to v1"))
}

fn c13_determinism() -> Outcome {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo/config.toml");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let cfg = PipelineConfig::load(
            &fixture,
            &Overrides {
                output: Some(out.clone()),
                ..Overrides::default()
            },
        )
        .map_err(|e| e.to_string())?;
        cmd_run(&cfg).map_err(|e| e.to_string())?;
        outputs.push(out);
    }
    let mut sizes = Vec::new();
    for f in ["metrics.csv", "tags.csv", "index.txt"] {
        let a = fs::read(outputs[0].join(f)).map_err(|e| format!("{f}: {e}"))?;
        let b = fs::read(outputs[1].join(f)).map_err(|e| format!("{f}: {e}"))?;
        ensure!(a == b, "{f} differs between runs");
        sizes.push(format!("{f} {} B", a.len()));
    }
    Ok(sizes.join(", "))
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    check: fn() -> Outcome,
}

fn main() {
    let secs = Duration::from_secs;
    let criteria = [
        Criterion {
            id: 1,
            name: "calibration identities",
            budget: secs(5),
            check: c1_identities,
        },
        Criterion {
            id: 2,
            name: "temperature argmax invariance",
            budget: secs(5),
            check: c2_argmax_invariance,
        },
        Criterion {
            id: 3,
            name: "ECE brute-force oracle",
            budget: secs(10),
            check: c3_ece_oracle,
        },
        Criterion {
            id: 4,
            name: "temperature recovery",
            budget: secs(30),
            check: c4_temperature_recovery,
        },
        Criterion {
            id: 5,
            name: "calibration trend on an overfit head",
            budget: secs(120),
            check: c5_trend,
        },
        Criterion {
            id: 6,
            name: "multi-label loss and gradient",
            budget: secs(5),
            check: c6_multilabel_loss,
        },
        Criterion {
            id: 7,
            name: "chain reduces to binary relevance",
            budget: secs(5),
            check: c7_chain_reduction,
        },
        Criterion {
            id: 8,
            name: "EMD transport oracle and metric axioms",
            budget: secs(30),
            check: c8_emd,
        },
        Criterion {
            id: 9,
            name: "landmark strip, crop and GA threshold",
            budget: secs(120),
            check: c9_landmarks,
        },
        Criterion {
            id: 10,
            name: "split leakage and MER augmentation count",
            budget: secs(60),
            check: c10_split_and_augmentation,
        },
        Criterion {
            id: 11,
            name: "deployment rules and query oracle",
            budget: secs(30),
            check: c11_deployment,
        },
        Criterion {
            id: 12,
            name: "hybrid dispatch",
            budget: secs(5),
            check: c12_hybrid,
        },
        Criterion {
            id: 13,
            name: "end-to-end determinism",
            budget: secs(300),
            check: c13_determinism,
        },
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let result = match result {
            Ok(detail) if took > c.budget => Err(format!("{detail}; took {took:.1?}, budget {:?}", c.budget)),
            other => other,
        };
        match result {
            Ok(detail) => println!("PASS criterion {:>2} {} ({:.2?}): {detail}", c.id, c.name, took),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {:>2} {} ({:.2?}): {why}", c.id, c.name, took);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
